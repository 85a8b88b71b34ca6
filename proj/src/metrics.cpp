#include "mtkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mtkd/errors.hpp"
#include "mtkd/kernels.hpp"
#include "mtkd/loss.hpp"

namespace mtkd {

double rdt(const RdtInput& input) {
    if (input.pairs.empty()) throw validation_error("rdt: no score pairs for " + input.task);
    double total = 0.0;
    for (const auto& p : input.pairs) {
        if (!(p.teacher_score > 0.0)) {
            throw validation_error("rdt: nonpositive teacher score for " + input.task + "/" +
                                   p.language);
        }
        total += (p.student_score - p.teacher_score) / p.teacher_score;
    }
    return 100.0 * total / static_cast<double>(input.pairs.size());
}

std::vector<RdtInput> load_score_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open score table " + path.string());
    std::vector<RdtInput> tasks;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        std::vector<std::string> cols;
        std::size_t start = 0;
        for (;;) {
            const std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 5) {
            throw validation_error("score table " + path.string() + ":" +
                                   std::to_string(line_no) + ": expected 5 columns");
        }
        RdtPair pair;
        pair.language = cols[1];
        pair.teacher_id = cols[3];
        try {
            pair.student_score = std::stod(cols[2]);
            pair.teacher_score = std::stod(cols[4]);
        } catch (const std::exception&) {
            throw validation_error("score table " + path.string() + ":" +
                                   std::to_string(line_no) + ": bad number");
        }

        auto it = std::find_if(tasks.begin(), tasks.end(),
                               [&](const RdtInput& t) { return t.task == cols[0]; });
        if (it == tasks.end()) {
            tasks.push_back(RdtInput{cols[0], {}});
            it = tasks.end() - 1;
        }
        it->pairs.push_back(std::move(pair));
    }
    if (tasks.empty()) throw validation_error("score table is empty: " + path.string());
    return tasks;
}

double mlm_accuracy(const StudentModel& model, std::span<const ShardRecord> records) {
    std::uint64_t positions = 0;
    std::uint64_t hits = 0;
    for (const auto& rec : records) {
        const auto fwd = model.forward(rec.to_example(""));
        for (std::size_t i = 0; i < rec.masked_positions.size(); ++i) {
            const auto& row = fwd.logits[i];
            std::size_t best = 0;
            for (std::size_t j = 1; j < row.size(); ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (best == rec.gold_ids[i]) ++hits;
            ++positions;
        }
    }
    if (positions == 0) throw validation_error("empty evaluation set");
    return static_cast<double>(hits) / static_cast<double>(positions);
}

double kl_to_teacher(const StudentModel& model, const Shard& shard) {
    require_vocab_checksum(shard.header, model.config().vocab_checksum, "evaluation shard");
    std::uint64_t positions = 0;
    double total = 0.0;
    for (const auto& rec : shard.records) {
        const auto fwd = model.forward(rec.to_example(shard.header.teacher_id));
        for (std::size_t i = 0; i < rec.predictions.size(); ++i) {
            const auto dist = normalize_topk(rec.predictions[i]);
            const auto& row = fwd.logits[i];
            const double lse = kernels::log_sum_exp(row.data(), row.size());
            double kl = 0.0;
            for (std::size_t j = 0; j < dist.ids.size(); ++j) {
                const double q = dist.probs[j];
                if (q <= 0.0) continue;
                if (dist.ids[j] >= row.size()) {
                    throw integrity_error("teacher support id out of student range");
                }
                const double log_p = row[dist.ids[j]] - lse;
                kl += q * (std::log(q) - log_p);
            }
            total += kl;
            ++positions;
        }
    }
    if (positions == 0) throw validation_error("empty evaluation set");
    return total / static_cast<double>(positions);
}

std::string format_report(const MetricsReport& report) {
    char buf[128];
    std::string out;
    std::snprintf(buf, sizeof(buf), "mlm_top1_accuracy  %.4f\n", report.mlm_top1_accuracy);
    out += buf;
    if (report.mean_kl_to_teacher) {
        std::snprintf(buf, sizeof(buf), "mean_kl_to_teacher %.6f\n", *report.mean_kl_to_teacher);
        out += buf;
    }
    for (const auto& [task, value] : report.rdt_per_task) {
        std::snprintf(buf, sizeof(buf), "rdt[%s] %+.1f%%\n", task.c_str(), value);
        out += buf;
    }
    return out;
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot write report " + path.string());
    out << "metric,value\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "mlm_top1_accuracy,%.17g\n", report.mlm_top1_accuracy);
    out << buf;
    if (report.mean_kl_to_teacher) {
        std::snprintf(buf, sizeof(buf), "mean_kl_to_teacher,%.17g\n",
                      *report.mean_kl_to_teacher);
        out << buf;
    }
    for (const auto& [task, value] : report.rdt_per_task) {
        std::snprintf(buf, sizeof(buf), "rdt[%s],%.17g\n", task.c_str(), value);
        out << buf;
    }
    if (!out) throw validation_error("failed writing report " + path.string());
}

}  // namespace mtkd
