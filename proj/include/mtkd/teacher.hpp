#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtkd/example.hpp"
#include "mtkd/student.hpp"
#include "mtkd/vocab.hpp"

namespace mtkd {

// Anything that can score masked positions over its own vocabulary. All
// implementations are read-only after construction and safe to call from
// any number of workers.
class TeacherOracle {
public:
    virtual ~TeacherOracle() = default;

    virtual const std::string& teacher_id() const = 0;
    virtual const Vocabulary& vocab() const = 0;

    // One full logit vector (length |vocab|) per masked position.
    virtual std::vector<std::vector<double>> predict(
        std::span<const TokenId> input_ids,
        std::span<const std::uint32_t> masked_positions) const = 0;
};

// Exact table-driven oracle for tests and synthetic experiments. The logit
// vector at a masked position is looked up by the nearest visible (not
// masked) token to its left; positions with no visible left context use the
// default row.
class LookupTeacher final : public TeacherOracle {
public:
    LookupTeacher(std::string teacher_id, Vocabulary vocab,
                  std::vector<double> default_logits,
                  std::unordered_map<TokenId, std::vector<double>> rows);

    const std::string& teacher_id() const override { return teacher_id_; }
    const Vocabulary& vocab() const override { return vocab_; }
    std::vector<std::vector<double>> predict(
        std::span<const TokenId> input_ids,
        std::span<const std::uint32_t> masked_positions) const override;

private:
    std::string teacher_id_;
    Vocabulary vocab_;
    std::vector<double> default_logits_;
    std::unordered_map<TokenId, std::vector<double>> rows_;
};

// JSON file: {"default": [..|v| logits..], "rows": {"<token>": [..logits..]}}
LookupTeacher load_lookup_teacher(std::string teacher_id, Vocabulary vocab,
                                  const std::filesystem::path& path);

// A trained tiny MLM (student architecture) serving as teacher; the
// checkpoint must have been trained over this teacher's own vocabulary.
class MlmTeacher final : public TeacherOracle {
public:
    MlmTeacher(std::string teacher_id, Vocabulary vocab, StudentModel model);

    const std::string& teacher_id() const override { return teacher_id_; }
    const Vocabulary& vocab() const override { return vocab_; }
    std::vector<std::vector<double>> predict(
        std::span<const TokenId> input_ids,
        std::span<const std::uint32_t> masked_positions) const override;

private:
    std::string teacher_id_;
    Vocabulary vocab_;
    StudentModel model_;
};

MlmTeacher load_mlm_teacher(std::string teacher_id, Vocabulary vocab,
                            const std::filesystem::path& checkpoint_path);

// Per masked position, the k highest-logit (id, logit) pairs; k is clamped
// to |teacher vocab|; ties broken by lower token id.
std::vector<TopKPrediction> evaluate_masked(const TeacherOracle& teacher,
                                            const MaskedExample& ex, std::uint32_t k);

// (1/n) sum_i -log softmax(full teacher logits)[gold_i].
double teacher_example_loss(const TeacherOracle& teacher, const MaskedExample& ex);

struct CopyCandidate {
    const MaskedExample* example = nullptr;
    double teacher_loss = 0.0;
};

// Index of the minimum-loss copy; ties broken by lower teacher_id.
std::size_t select_best_copy(std::span<const CopyCandidate> copies);

}  // namespace mtkd
