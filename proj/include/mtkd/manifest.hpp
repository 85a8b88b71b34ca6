#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtkd/corpus.hpp"

namespace mtkd {

enum class CopyStrategy { all_copies, best_copy, single_teacher };
enum class LabelMode { gold_only, gold_plus_teacher };
enum class OptimizerKind { sgd, adam };
enum class LrSchedule { constant, linear_decay };
enum class LambdaSchedule { linear_anneal, constant };

std::string to_string(CopyStrategy s);
std::string to_string(LabelMode m);
CopyStrategy copy_strategy_from_string(const std::string& s);
LabelMode label_mode_from_string(const std::string& s);

struct TrainingConfig {
    std::uint64_t total_steps = 1000;
    std::uint32_t batch_size = 16;
    std::uint32_t top_k = 8;
    CopyStrategy copy_strategy = CopyStrategy::single_teacher;
    LabelMode label_mode = LabelMode::gold_plus_teacher;
    double learning_rate = 0.5;
    std::uint64_t seed = 0;
    LambdaSchedule lambda_schedule = LambdaSchedule::linear_anneal;
    double lambda_constant = 0.5;  // used by the constant schedule only
    OptimizerKind optimizer = OptimizerKind::sgd;
    LrSchedule lr_schedule = LrSchedule::constant;
    double mask_rate = 0.15;
    std::uint32_t embed_dim = 16;
    std::uint32_t context_window = 2;
    std::uint64_t checkpoint_interval = 0;  // 0 = final checkpoint only
    double holdout_fraction = 0.1;
    bool reshuffle = true;
};

double lambda_for_step(const TrainingConfig& cfg, std::uint64_t step);
double lr_for_step(const TrainingConfig& cfg, std::uint64_t step);

struct OracleSpec {
    std::string type;  // "lookup" | "mlm_checkpoint"
    std::filesystem::path path;
};

struct TeacherSpec {
    std::string id;
    std::filesystem::path vocab_path;
    std::string continuation_prefix = "##";
    OracleSpec oracle;
};

struct LanguageSpec {
    std::string tag;
    std::filesystem::path corpus_path;
    std::vector<std::string> teacher_ids;  // assignment order matters for
                                           // the single_teacher strategy
};

// One declarative file drives every stage; the stages share identity-critical
// state (the vocabulary checksum) through the artifacts it names.
struct PipelineManifest {
    std::filesystem::path output_dir;
    std::vector<LanguageSpec> languages;
    std::vector<TeacherSpec> teachers;
    SamplingConfig sampling;
    TrainingConfig training;

    // Derived artifact locations.
    std::filesystem::path vocab_dir() const { return output_dir / "vocab"; }
    std::filesystem::path student_vocab_path() const {
        return vocab_dir() / "student.vocab";
    }
    std::filesystem::path mapping_path(const std::string& teacher_id) const {
        return vocab_dir() / (teacher_id + ".map.tsv");
    }
    std::filesystem::path shard_dir(bool eval) const {
        return output_dir / "shards" / (eval ? "eval" : "train");
    }
    std::filesystem::path shard_path(const std::string& lang, const std::string& teacher_id,
                                     std::uint32_t index, bool eval) const;
    std::filesystem::path train_dir() const { return output_dir / "train"; }
    std::filesystem::path loss_csv_path() const { return train_dir() / "loss.csv"; }
    std::filesystem::path final_checkpoint_path() const {
        return train_dir() / "checkpoint_final.mdck";
    }
    std::filesystem::path step_checkpoint_path(std::uint64_t step) const;
    std::filesystem::path eval_dir() const { return output_dir / "eval"; }
};

PipelineManifest load_manifest(const std::filesystem::path& path);

// Fail-fast checks: every language has at least one assigned teacher, all
// referenced ids resolve, all referenced files exist, scalars are in range.
void validate_manifest(const PipelineManifest& m);

}  // namespace mtkd
