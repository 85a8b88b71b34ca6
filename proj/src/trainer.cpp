#include "mtkd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <thread>

#include "mtkd/errors.hpp"
#include "mtkd/kernels.hpp"
#include "mtkd/teacher.hpp"

namespace mtkd {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Truncate to the k highest stored logits (they are sorted already) and
// renormalize; lets one shard set drive runs with smaller top_k.
NormalizedTeacherDist training_dist(const TopKPrediction& pred, std::uint32_t top_k) {
    if (pred.k() <= top_k) return normalize_topk(pred);
    TopKPrediction cut;
    cut.position = pred.position;
    cut.ids.assign(pred.ids.begin(), pred.ids.begin() + top_k);
    cut.logits.assign(pred.logits.begin(), pred.logits.begin() + top_k);
    return normalize_topk(cut);
}

}  // namespace

BatchAssembler::BatchAssembler(std::vector<Shard> shards,
                               std::vector<std::string> language_tags,
                               std::vector<std::vector<std::string>> teacher_assignment,
                               std::vector<double> language_weights,
                               const TrainingConfig& cfg)
    : shards_(std::move(shards)),
      weights_(std::move(language_weights)),
      cfg_(cfg),
      lang_rng_(derive_stream(cfg.seed, {fnv1a("lang-draw")})) {
    if (language_tags.size() != teacher_assignment.size() ||
        language_tags.size() != weights_.size() || language_tags.empty()) {
        throw validation_error("batch assembler inputs are not parallel");
    }

    // Index records per (language, teacher), in shard file order.
    std::map<std::pair<std::string, std::string>, std::vector<const ShardRecord*>> by_key;
    for (const auto& shard : shards_) {
        for (const auto& rec : shard.records) {
            by_key[{rec.language, shard.header.teacher_id}].push_back(&rec);
        }
    }

    for (std::size_t li = 0; li < language_tags.size(); ++li) {
        LanguageState state;
        state.tag = language_tags[li];
        state.teacher_ids = teacher_assignment[li];
        for (const auto& teacher : state.teacher_ids) {
            const auto it = by_key.find({state.tag, teacher});
            if (it == by_key.end() || it->second.empty()) {
                throw validation_error("no shard records for language " + state.tag +
                                       " and teacher " + teacher);
            }
            state.copies.push_back(it->second);
        }
        // Copies of one raw example must line up across teachers.
        const std::size_t n = state.copies.front().size();
        for (const auto& records : state.copies) {
            if (records.size() != n) {
                throw integrity_error("teacher shards for language " + state.tag +
                                      " cover different example sets");
            }
            for (std::size_t e = 0; e < n; ++e) {
                if (records[e]->example_id != state.copies.front()[e]->example_id) {
                    throw integrity_error("example ids misaligned across teacher shards for " +
                                          state.tag);
                }
            }
        }
        languages_.push_back(std::move(state));
        reshuffle_language(languages_.size() - 1);
    }
}

void BatchAssembler::reshuffle_language(std::size_t lang_index) {
    LanguageState& lang = languages_[lang_index];
    lang.order.resize(lang.copies.front().size());
    for (std::uint32_t i = 0; i < lang.order.size(); ++i) lang.order[i] = i;
    SplitMix64 rng(derive_stream(cfg_.seed,
                                 {fnv1a("example-order"), lang_index, lang.pass}));
    shuffle(lang.order, rng);
    lang.cursor = 0;
}

std::size_t BatchAssembler::draw_example(std::size_t lang_index) {
    LanguageState& lang = languages_[lang_index];
    if (lang.cursor >= lang.order.size()) {
        if (!cfg_.reshuffle) {
            throw validation_error("examples exhausted for language " + lang.tag +
                                   " and reshuffle is disabled");
        }
        ++lang.pass;
        reshuffle_language(lang_index);
    }
    return lang.order[lang.cursor++];
}

std::vector<BatchEntry> BatchAssembler::next_batch() {
    std::vector<BatchEntry> batch;
    batch.reserve(cfg_.batch_size);
    const bool use_teacher = cfg_.label_mode == LabelMode::gold_plus_teacher;

    for (std::uint32_t b = 0; b < cfg_.batch_size; ++b) {
        const std::size_t li = sample_index(weights_, lang_rng_);
        LanguageState& lang = languages_[li];
        const std::size_t e = draw_example(li);

        const auto emit = [&](std::size_t teacher_index) {
            const ShardRecord* rec = lang.copies[teacher_index][e];
            BatchEntry entry;
            entry.record = rec;
            entry.language = lang.tag;
            entry.teacher_id = lang.teacher_ids[teacher_index];
            entry.example_id = rec->example_id;
            entry.teacher_loss = rec->teacher_loss;
            entry.use_teacher = use_teacher;
            batch.push_back(std::move(entry));
        };

        switch (cfg_.copy_strategy) {
            case CopyStrategy::single_teacher:
                emit(0);
                break;
            case CopyStrategy::all_copies:
                for (std::size_t t = 0; t < lang.copies.size(); ++t) emit(t);
                break;
            case CopyStrategy::best_copy: {
                std::size_t best = 0;
                for (std::size_t t = 1; t < lang.copies.size(); ++t) {
                    const double loss = lang.copies[t][e]->teacher_loss;
                    const double best_loss = lang.copies[best][e]->teacher_loss;
                    if (loss < best_loss ||
                        (loss == best_loss &&
                         lang.teacher_ids[t] < lang.teacher_ids[best])) {
                        best = t;
                    }
                }
                emit(best);
                break;
            }
        }
    }
    return batch;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("MTKD_WORKERS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<std::size_t>(n);
    }
    return 1;
}

namespace {

struct EntryResult {
    double mlm = 0.0;
    double kd = 0.0;
    std::vector<double> gold_terms;
};

// Per-entry loss terms and (optional) gradient. Pure in the model; safe to
// run for different entries concurrently.
EntryResult evaluate_entry(const StudentModel& model, const BatchEntry& entry,
                           double w_mlm, double w_kd, std::uint32_t top_k,
                           std::vector<double>* grad) {
    const ShardRecord& rec = *entry.record;
    const MaskedExample ex = rec.to_example(entry.teacher_id);
    const auto fwd = model.forward(ex);
    const std::size_t n = ex.mask_count();
    if (n == 0) throw validation_error("record has no masked positions");

    std::vector<NormalizedTeacherDist> dists;
    if (entry.use_teacher) {
        if (rec.predictions.size() != n) {
            throw validation_error("record is missing teacher distributions");
        }
        dists.reserve(n);
        for (const auto& pred : rec.predictions) dists.push_back(training_dist(pred, top_k));
    }

    EntryResult result;
    result.gold_terms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = fwd.logits[i];
        const double lse = kernels::log_sum_exp(row.data(), row.size());
        if (ex.gold_ids[i] >= row.size()) {
            throw validation_error("gold id out of student range");
        }
        result.gold_terms.push_back(lse - row[ex.gold_ids[i]]);
    }
    result.mlm = kernels::sum(result.gold_terms.data(), n) / static_cast<double>(n);
    if (entry.use_teacher) {
        result.kd = l_kd(fwd.logits, dists);
    }

    if (grad != nullptr) {
        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<std::vector<double>> dlogits(n);
        for (std::size_t i = 0; i < n; ++i) {
            dlogits[i].assign(model.config().vocab_size, 0.0);
            add_position_loss_grad(fwd.logits[i], ex.gold_ids[i],
                                   entry.use_teacher ? &dists[i] : nullptr,
                                   w_mlm * inv_n, w_kd * inv_n, dlogits[i]);
        }
        model.backward(ex, fwd, dlogits, *grad);
    }
    return result;
}

}  // namespace

LossBreakdown compute_batch(const StudentModel& model, std::span<const BatchEntry> batch,
                            double lambda, std::uint32_t top_k,
                            std::vector<double>* grad) {
    if (batch.empty()) throw validation_error("empty batch");
    if (!(lambda >= 0.0) || !(lambda <= 1.0)) {
        throw validation_error("lambda must be in [0, 1]");
    }

    // Languages and (language, teacher) groups in first-appearance order.
    std::vector<std::string> langs;
    std::vector<std::vector<std::string>> lang_teachers;
    std::vector<std::size_t> entry_lang(batch.size());
    std::vector<std::size_t> lang_entry_count;
    std::map<std::pair<std::size_t, std::string>, std::size_t> group_count;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto it = std::find(langs.begin(), langs.end(), batch[i].language);
        std::size_t li;
        if (it == langs.end()) {
            li = langs.size();
            langs.push_back(batch[i].language);
            lang_teachers.emplace_back();
            lang_entry_count.push_back(0);
        } else {
            li = static_cast<std::size_t>(it - langs.begin());
        }
        entry_lang[i] = li;
        ++lang_entry_count[li];
        if (batch[i].use_teacher) {
            auto& teachers = lang_teachers[li];
            if (std::find(teachers.begin(), teachers.end(), batch[i].teacher_id) ==
                teachers.end()) {
                teachers.push_back(batch[i].teacher_id);
            }
            ++group_count[{li, batch[i].teacher_id}];
        }
    }

    const std::size_t n_langs = langs.size();
    const bool kd_active = lambda > 0.0;

    // Per-entry loss weights so the batch gradient matches l_all exactly.
    std::vector<double> w_mlm(batch.size()), w_kd(batch.size(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t li = entry_lang[i];
        w_mlm[i] = (1.0 - lambda) /
                   (static_cast<double>(n_langs) * static_cast<double>(lang_entry_count[li]));
        if (batch[i].use_teacher && kd_active) {
            const double teachers = static_cast<double>(lang_teachers[li].size());
            const double group = static_cast<double>(
                group_count.at({li, batch[i].teacher_id}));
            w_kd[i] = lambda / (static_cast<double>(n_langs) * teachers * group);
        }
    }

    // Per-entry evaluation, optionally fanned out; reduction stays in entry
    // order so results do not depend on the worker count.
    const std::size_t n_entries = batch.size();
    std::vector<EntryResult> results(n_entries);
    std::vector<std::vector<double>> entry_grads;
    if (grad != nullptr) {
        entry_grads.assign(n_entries, std::vector<double>());
    }
    const auto eval_one = [&](std::size_t i) {
        std::vector<double>* g = nullptr;
        if (grad != nullptr) {
            entry_grads[i].assign(model.param_count(), 0.0);
            g = &entry_grads[i];
        }
        results[i] = evaluate_entry(model, batch[i], w_mlm[i], w_kd[i], top_k, g);
    };

    const std::size_t workers = std::min(worker_count(), n_entries);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n_entries; ++i) eval_one(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n_entries; i += workers) eval_one(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& err : errors) {
            if (err) std::rethrow_exception(err);
        }
    }

    if (grad != nullptr) {
        grad->assign(model.param_count(), 0.0);
        for (const auto& g : entry_grads) {
            kernels::axpy(1.0, g.data(), grad->data(), g.size());
        }
    }

    // Aggregate the breakdown.
    std::vector<LanguageLossTerms> terms(n_langs);
    std::map<std::pair<std::size_t, std::string>, double> kd_sums;
    std::vector<double> mlm_sums(n_langs, 0.0);
    LossBreakdown out;
    for (std::size_t i = 0; i < n_entries; ++i) {
        const std::size_t li = entry_lang[i];
        mlm_sums[li] += results[i].mlm;
        if (batch[i].use_teacher) {
            kd_sums[{li, batch[i].teacher_id}] += results[i].kd;
        }
        out.gold_terms.insert(out.gold_terms.end(), results[i].gold_terms.begin(),
                              results[i].gold_terms.end());
    }
    std::map<std::string, double> kd_by_teacher;
    std::map<std::string, std::size_t> kd_by_teacher_n;
    for (std::size_t li = 0; li < n_langs; ++li) {
        terms[li].language = langs[li];
        terms[li].mlm = mlm_sums[li] / static_cast<double>(lang_entry_count[li]);
        for (const auto& teacher : lang_teachers[li]) {
            const double mean_kd = kd_sums.at({li, teacher}) /
                                   static_cast<double>(group_count.at({li, teacher}));
            terms[li].kd_per_teacher.emplace_back(teacher, mean_kd);
            kd_by_teacher[teacher] += mean_kd;
            kd_by_teacher_n[teacher] += 1;
        }
    }
    for (const auto& [teacher, total] : kd_by_teacher) {
        out.kd_per_teacher.emplace_back(
            teacher, total / static_cast<double>(kd_by_teacher_n.at(teacher)));
    }

    out.lambda_used = lambda;
    out.l_all = l_all(terms, lambda);
    double mlm_mean = 0.0;
    double kd_mean = 0.0;
    for (const auto& t : terms) {
        mlm_mean += t.mlm;
        double kd = 0.0;
        if (!t.kd_per_teacher.empty()) {
            for (const auto& [teacher, value] : t.kd_per_teacher) kd += value;
            kd /= static_cast<double>(t.kd_per_teacher.size());
        }
        kd_mean += kd;
    }
    out.l_mlm = mlm_mean / static_cast<double>(n_langs);
    out.l_kd = kd_mean / static_cast<double>(n_langs);
    return out;
}

Trainer::Trainer(StudentModel model, BatchAssembler assembler, TrainingConfig cfg)
    : model_(std::move(model)), assembler_(std::move(assembler)), cfg_(cfg) {
    if (cfg_.optimizer == OptimizerKind::adam) {
        adam_m_.assign(model_.param_count(), 0.0);
        adam_v_.assign(model_.param_count(), 0.0);
    }
}

void Trainer::apply_update(std::span<const double> grad, double lr, std::uint64_t step) {
    auto params = model_.params();
    if (cfg_.optimizer == OptimizerKind::sgd) {
        kernels::axpy(-lr, grad.data(), params.data(), params.size());
        return;
    }
    const double t = static_cast<double>(step);  // 1-based
    const double bias1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bias2 = 1.0 - std::pow(kAdamBeta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        adam_m_[i] = kAdamBeta1 * adam_m_[i] + (1.0 - kAdamBeta1) * grad[i];
        adam_v_[i] = kAdamBeta2 * adam_v_[i] + (1.0 - kAdamBeta2) * grad[i] * grad[i];
        const double m_hat = adam_m_[i] / bias1;
        const double v_hat = adam_v_[i] / bias2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
}

LossBreakdown Trainer::train_step() {
    if (step_ >= cfg_.total_steps) {
        throw validation_error("training already ran for total_steps");
    }
    last_batch_ = assembler_.next_batch();
    const std::uint64_t this_step = step_ + 1;  // 1-based; final step hits lambda 0
    const double lambda = cfg_.label_mode == LabelMode::gold_only
                              ? 0.0
                              : lambda_for_step(cfg_, this_step);

    std::vector<double> grad;
    LossBreakdown breakdown =
        compute_batch(model_, last_batch_, lambda, cfg_.top_k, &grad);
    if (!std::isfinite(breakdown.l_all)) {
        throw std::runtime_error("non-finite loss at step " + std::to_string(this_step) +
                                 " (l_mlm=" + std::to_string(breakdown.l_mlm) +
                                 ", l_kd=" + std::to_string(breakdown.l_kd) + ")");
    }

    apply_update(grad, lr_for_step(cfg_, this_step), this_step);
    for (const double p : model_.params()) {
        if (!std::isfinite(p)) {
            throw std::runtime_error("non-finite parameter after step " +
                                     std::to_string(this_step));
        }
    }

    step_ = this_step;
    examples_seen_ += last_batch_.size();
    log_.push_back(StepLog{step_, lambda, breakdown.l_mlm, breakdown.l_kd, breakdown.l_all,
                           examples_seen_});
    return breakdown;
}

void write_loss_csv(std::span<const StepLog> log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot write loss csv " + path.string());
    out << "step,lambda,l_mlm,l_kd,l_all,examples_seen\n";
    char line[256];
    for (const auto& row : log) {
        std::snprintf(line, sizeof(line), "%llu,%.17g,%.17g,%.17g,%.17g,%llu\n",
                      static_cast<unsigned long long>(row.step), row.lambda, row.l_mlm,
                      row.l_kd, row.l_all,
                      static_cast<unsigned long long>(row.examples_seen));
        out << line;
    }
    if (!out) throw validation_error("failed writing loss csv " + path.string());
}

}  // namespace mtkd
