#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtkd/loss.hpp"
#include "mtkd/manifest.hpp"
#include "mtkd/shard.hpp"
#include "mtkd/student.hpp"

namespace mtkd {

// One training instance drawn from the shard store: a (student-space)
// record plus its provenance. use_teacher is false in gold_only mode.
struct BatchEntry {
    const ShardRecord* record = nullptr;
    std::string language;
    std::string teacher_id;
    std::uint64_t example_id = 0;
    double teacher_loss = 0.0;
    bool use_teacher = true;
};

// Owns the loaded shards and draws batches: language by smoothed sampling,
// example uniformly within the language (a shuffled pass, reshuffled with a
// per-pass derived seed), then the copy strategy decides which teacher
// copies of the raw example enter the batch.
class BatchAssembler {
public:
    // `shards` must contain, per language, one shard per assigned teacher
    // (in assignment order for that language). All records for one
    // (language, teacher) must share the shard's teacher.
    BatchAssembler(std::vector<Shard> shards, std::vector<std::string> language_tags,
                   std::vector<std::vector<std::string>> teacher_assignment,
                   std::vector<double> language_weights, const TrainingConfig& cfg);

    std::vector<BatchEntry> next_batch();

private:
    struct LanguageState {
        std::string tag;
        std::vector<std::string> teacher_ids;
        // copies[t][e] is the record of teacher t for raw example e.
        std::vector<std::vector<const ShardRecord*>> copies;
        std::vector<std::uint32_t> order;  // shuffled example indices
        std::size_t cursor = 0;
        std::uint64_t pass = 0;
    };

    void reshuffle_language(std::size_t lang_index);
    std::size_t draw_example(std::size_t lang_index);

    std::vector<Shard> shards_;
    std::vector<LanguageState> languages_;
    std::vector<double> weights_;
    TrainingConfig cfg_;
    SplitMix64 lang_rng_;
};

// Loss and gradient over one assembled batch at a given lambda. The KD term
// of a language averages uniformly over the teachers present; the total is
// the mean over the languages present. When grad is non-null it receives
// dLoss/dParams (accumulated per entry, reduced in entry order, so the
// result is independent of worker fan-out).
LossBreakdown compute_batch(const StudentModel& model, std::span<const BatchEntry> batch,
                            double lambda, std::uint32_t top_k,
                            std::vector<double>* grad);

// Worker fan-out for per-entry loss/grad evaluation; reads MTKD_WORKERS
// (default 1).
std::size_t worker_count();

struct StepLog {
    std::uint64_t step = 0;  // 1-based; the final step is total_steps
    double lambda = 0.0;
    double l_mlm = 0.0;
    double l_kd = 0.0;
    double l_all = 0.0;
    std::uint64_t examples_seen = 0;
};

class Trainer {
public:
    Trainer(StudentModel model, BatchAssembler assembler, TrainingConfig cfg);

    // Draws one batch, computes l_all at the scheduled lambda, applies one
    // optimizer update, and increments the step counter.
    LossBreakdown train_step();

    const StudentModel& model() const { return model_; }
    std::uint64_t step() const { return step_; }
    std::uint64_t examples_seen() const { return examples_seen_; }
    const std::vector<StepLog>& log() const { return log_; }

    // The entries consumed by the most recent train_step (for audits).
    const std::vector<BatchEntry>& last_batch() const { return last_batch_; }

private:
    void apply_update(std::span<const double> grad, double lr, std::uint64_t step);

    StudentModel model_;
    BatchAssembler assembler_;
    TrainingConfig cfg_;
    std::uint64_t step_ = 0;
    std::uint64_t examples_seen_ = 0;
    std::vector<StepLog> log_;
    std::vector<BatchEntry> last_batch_;
    // Adam state (unused for plain SGD).
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
};

void write_loss_csv(std::span<const StepLog> log, const std::filesystem::path& path);

}  // namespace mtkd
