#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "mtkd/manifest.hpp"
#include "mtkd/metrics.hpp"
#include "mtkd/teacher.hpp"
#include "mtkd/trainer.hpp"
#include "mtkd/vocab.hpp"

namespace mtkd {

// Stage 1+3: merge teacher vocabularies, write the student vocab file and
// one teacher->student mapping file per teacher. Deterministic: identical
// manifests produce byte-identical artifacts.
struct MergeVocabOutput {
    Vocabulary student;
    std::vector<VocabMapping> mappings;  // manifest teacher order
    std::filesystem::path vocab_path;
    std::vector<std::filesystem::path> mapping_paths;
};
MergeVocabOutput run_merge_vocab(const PipelineManifest& m);

// Stage 2: offline teacher evaluation. Tokenizes and masks every corpus
// line per assigned teacher, stores top-k logits and the teacher loss, and
// remaps everything into student ids. Lines are split into train/holdout
// streams by a seeded per-line draw.
struct PrepareOutput {
    std::vector<std::filesystem::path> train_shards;
    std::vector<std::filesystem::path> eval_shards;
};
PrepareOutput run_prepare(const PipelineManifest& m);

// Stage 4: student training over the prepared shards.
struct TrainOutput {
    std::filesystem::path final_checkpoint;
    std::filesystem::path loss_csv;
    std::vector<std::pair<std::uint64_t, std::filesystem::path>> step_checkpoints;
};
TrainOutput run_train(const PipelineManifest& m);

// Held-out evaluation: MLM accuracy and mean KL to teacher over the eval
// shards; RDT per task when a score table is supplied.
MetricsReport run_eval(const PipelineManifest& m,
                       const std::optional<std::filesystem::path>& score_table = {},
                       const std::optional<std::filesystem::path>& checkpoint = {});

// Shared helpers.
std::unique_ptr<TeacherOracle> load_oracle(const TeacherSpec& spec, Vocabulary vocab);
Vocabulary load_student_vocab(const PipelineManifest& m);

}  // namespace mtkd
