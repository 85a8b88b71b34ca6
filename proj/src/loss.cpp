#include "mtkd/loss.hpp"

#include <cmath>

#include "mtkd/errors.hpp"
#include "mtkd/kernels.hpp"

namespace mtkd {

NormalizedTeacherDist normalize_topk(const TopKPrediction& p) {
    if (p.ids.empty() || p.ids.size() != p.logits.size()) {
        throw validation_error("cannot normalize an empty or malformed prediction");
    }
    NormalizedTeacherDist d;
    d.position = p.position;
    d.ids = p.ids;
    std::vector<double> logits(p.logits.begin(), p.logits.end());
    d.probs.resize(logits.size());
    kernels::softmax(logits.data(), d.probs.data(), logits.size());
    return d;
}

double l_mlm(std::span<const std::vector<double>> logits,
             std::span<const TokenId> gold_ids) {
    if (logits.empty() || logits.size() != gold_ids.size()) {
        throw validation_error("l_mlm needs one gold id per logit row");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto& row = logits[i];
        if (gold_ids[i] >= row.size()) {
            throw validation_error("gold id out of range in l_mlm");
        }
        total += kernels::log_sum_exp(row.data(), row.size()) - row[gold_ids[i]];
    }
    return total / static_cast<double>(logits.size());
}

double l_kd(std::span<const std::vector<double>> logits,
            std::span<const NormalizedTeacherDist> teacher) {
    if (logits.empty() || logits.size() != teacher.size()) {
        throw validation_error("l_kd needs one teacher distribution per logit row");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto& row = logits[i];
        const auto& dist = teacher[i];
        const double lse = kernels::log_sum_exp(row.data(), row.size());
        double cross = 0.0;
        double mass = 0.0;
        for (std::size_t j = 0; j < dist.ids.size(); ++j) {
            if (dist.ids[j] >= row.size()) {
                throw validation_error("teacher support id out of student range");
            }
            cross += dist.probs[j] * row[dist.ids[j]];
            mass += dist.probs[j];
        }
        total += mass * lse - cross;
    }
    return total / static_cast<double>(logits.size());
}

double l_all(std::span<const LanguageLossTerms> terms, double lambda) {
    if (!(lambda >= 0.0) || !(lambda <= 1.0)) {
        throw validation_error("lambda must be in [0, 1]");
    }
    if (terms.empty()) throw validation_error("no language terms in batch");
    double total = 0.0;
    for (const auto& t : terms) {
        double kd = 0.0;
        if (!t.kd_per_teacher.empty()) {
            for (const auto& [teacher, value] : t.kd_per_teacher) kd += value;
            kd /= static_cast<double>(t.kd_per_teacher.size());
        }
        total += lambda * kd + (1.0 - lambda) * t.mlm;
    }
    return total / static_cast<double>(terms.size());
}

double lambda_at(std::uint64_t step, std::uint64_t total_steps) {
    if (total_steps < 1) throw validation_error("total_steps must be >= 1");
    if (step > total_steps) throw validation_error("step is past total_steps");
    return 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
}

void add_position_loss_grad(std::span<const double> logits, TokenId gold,
                            const NormalizedTeacherDist* dist, double w_mlm,
                            double w_kd, std::span<double> dlogits) {
    if (dlogits.size() != logits.size()) {
        throw validation_error("dlogits buffer has wrong width");
    }
    if (gold >= logits.size()) throw validation_error("gold id out of range");

    std::vector<double> probs(logits.size());
    kernels::softmax(logits.data(), probs.data(), logits.size());

    double qmass = 0.0;
    if (dist != nullptr && w_kd != 0.0) {
        for (const double q : dist->probs) qmass += q;
    }

    kernels::axpy(w_mlm + w_kd * qmass, probs.data(), dlogits.data(), dlogits.size());
    dlogits[gold] -= w_mlm;
    if (dist != nullptr && w_kd != 0.0) {
        for (std::size_t j = 0; j < dist->ids.size(); ++j) {
            if (dist->ids[j] >= dlogits.size()) {
                throw validation_error("teacher support id out of student range");
            }
            dlogits[dist->ids[j]] -= w_kd * dist->probs[j];
        }
    }
}

}  // namespace mtkd
