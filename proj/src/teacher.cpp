#include "mtkd/teacher.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "mtkd/errors.hpp"
#include "mtkd/kernels.hpp"

namespace mtkd {

namespace {

void check_positions(std::span<const TokenId> input_ids,
                     std::span<const std::uint32_t> masked_positions) {
    for (const std::uint32_t p : masked_positions) {
        if (p >= input_ids.size()) {
            throw validation_error("masked position " + std::to_string(p) + " out of range");
        }
    }
}

void check_teacher(const TeacherOracle& teacher, const MaskedExample& ex) {
    if (ex.teacher_id != teacher.teacher_id()) {
        throw validation_error("example belongs to teacher " + ex.teacher_id +
                               " but oracle is " + teacher.teacher_id());
    }
}

std::vector<double> parse_logit_row(const nlohmann::json& arr, std::size_t vocab_size,
                                    const std::string& what) {
    if (!arr.is_array() || arr.size() != vocab_size) {
        throw validation_error("lookup teacher " + what + " must be an array of length " +
                               std::to_string(vocab_size));
    }
    std::vector<double> row;
    row.reserve(vocab_size);
    for (const auto& x : arr) row.push_back(x.get<double>());
    return row;
}

}  // namespace

LookupTeacher::LookupTeacher(std::string teacher_id, Vocabulary vocab,
                             std::vector<double> default_logits,
                             std::unordered_map<TokenId, std::vector<double>> rows)
    : teacher_id_(std::move(teacher_id)),
      vocab_(std::move(vocab)),
      default_logits_(std::move(default_logits)),
      rows_(std::move(rows)) {
    if (default_logits_.size() != vocab_.size()) {
        throw validation_error("lookup teacher default row has wrong length");
    }
    for (const auto& [key, row] : rows_) {
        if (key >= vocab_.size() || row.size() != vocab_.size()) {
            throw validation_error("lookup teacher row malformed for key " +
                                   std::to_string(key));
        }
    }
}

std::vector<std::vector<double>> LookupTeacher::predict(
    std::span<const TokenId> input_ids,
    std::span<const std::uint32_t> masked_positions) const {
    check_positions(input_ids, masked_positions);
    const std::unordered_set<std::uint32_t> masked(masked_positions.begin(),
                                                   masked_positions.end());
    std::vector<std::vector<double>> out;
    out.reserve(masked_positions.size());
    for (const std::uint32_t pos : masked_positions) {
        const std::vector<double>* row = &default_logits_;
        for (std::uint32_t j = pos; j-- > 0;) {
            if (masked.contains(j)) continue;
            const auto it = rows_.find(input_ids[j]);
            if (it != rows_.end()) row = &it->second;
            break;
        }
        out.push_back(*row);
    }
    return out;
}

LookupTeacher load_lookup_teacher(std::string teacher_id, Vocabulary vocab,
                                  const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open lookup teacher file " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("bad JSON in " + path.string() + ": " + e.what());
    }

    std::vector<double> default_logits =
        parse_logit_row(doc.at("default"), vocab.size(), "default row");
    std::unordered_map<TokenId, std::vector<double>> rows;
    if (doc.contains("rows")) {
        for (const auto& [token, arr] : doc.at("rows").items()) {
            const auto id = vocab.find(token);
            if (!id) {
                throw validation_error("lookup teacher row token \"" + token +
                                       "\" is not in the vocabulary");
            }
            rows.emplace(*id, parse_logit_row(arr, vocab.size(), "row " + token));
        }
    }
    return LookupTeacher(std::move(teacher_id), std::move(vocab),
                         std::move(default_logits), std::move(rows));
}

MlmTeacher::MlmTeacher(std::string teacher_id, Vocabulary vocab, StudentModel model)
    : teacher_id_(std::move(teacher_id)), vocab_(std::move(vocab)), model_(std::move(model)) {
    if (model_.config().vocab_size != vocab_.size()) {
        throw validation_error("teacher model vocab size does not match vocabulary");
    }
    if (model_.config().vocab_checksum != vocab_.checksum()) {
        throw integrity_error("teacher checkpoint was trained on a different vocabulary");
    }
}

std::vector<std::vector<double>> MlmTeacher::predict(
    std::span<const TokenId> input_ids,
    std::span<const std::uint32_t> masked_positions) const {
    check_positions(input_ids, masked_positions);
    MaskedExample ex;
    ex.input_ids.assign(input_ids.begin(), input_ids.end());
    ex.masked_positions.assign(masked_positions.begin(), masked_positions.end());
    ex.gold_ids.assign(masked_positions.size(), 0);  // unused by forward
    return model_.forward(ex).logits;
}

MlmTeacher load_mlm_teacher(std::string teacher_id, Vocabulary vocab,
                            const std::filesystem::path& checkpoint_path) {
    StudentModel model = load_checkpoint(checkpoint_path);
    return MlmTeacher(std::move(teacher_id), std::move(vocab), std::move(model));
}

std::vector<TopKPrediction> evaluate_masked(const TeacherOracle& teacher,
                                            const MaskedExample& ex, std::uint32_t k) {
    check_teacher(teacher, ex);
    check_positions(ex.input_ids, ex.masked_positions);
    if (k < 1) throw validation_error("top-k requires k >= 1");
    const std::size_t vocab_size = teacher.vocab().size();
    const std::uint32_t kk = static_cast<std::uint32_t>(
        std::min<std::size_t>(k, vocab_size));

    const auto logit_rows = teacher.predict(ex.input_ids, ex.masked_positions);
    std::vector<TopKPrediction> out;
    out.reserve(logit_rows.size());
    std::vector<TokenId> idx(vocab_size);
    for (std::size_t i = 0; i < logit_rows.size(); ++i) {
        const std::vector<double>& logits = logit_rows[i];
        if (logits.size() != vocab_size) {
            throw validation_error("teacher returned a logit row of wrong length");
        }
        std::iota(idx.begin(), idx.end(), 0u);
        std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(),
                          [&logits](TokenId a, TokenId b) {
                              if (logits[a] != logits[b]) return logits[a] > logits[b];
                              return a < b;
                          });
        TopKPrediction pred;
        pred.position = ex.masked_positions[i];
        pred.ids.assign(idx.begin(), idx.begin() + kk);
        pred.logits.reserve(kk);
        for (std::uint32_t j = 0; j < kk; ++j) {
            pred.logits.push_back(static_cast<float>(logits[pred.ids[j]]));
        }
        out.push_back(std::move(pred));
    }
    return out;
}

double teacher_example_loss(const TeacherOracle& teacher, const MaskedExample& ex) {
    check_teacher(teacher, ex);
    check_positions(ex.input_ids, ex.masked_positions);
    if (ex.mask_count() == 0) throw validation_error("example has no masked positions");
    const auto logit_rows = teacher.predict(ex.input_ids, ex.masked_positions);
    double total = 0.0;
    for (std::size_t i = 0; i < logit_rows.size(); ++i) {
        const auto& logits = logit_rows[i];
        const TokenId gold = ex.gold_ids[i];
        if (gold >= logits.size()) {
            throw validation_error("gold id out of range for teacher vocab");
        }
        total += kernels::log_sum_exp(logits.data(), logits.size()) - logits[gold];
    }
    return total / static_cast<double>(logit_rows.size());
}

std::size_t select_best_copy(std::span<const CopyCandidate> copies) {
    if (copies.empty()) throw validation_error("no copies to select from");
    std::size_t best = 0;
    for (std::size_t i = 1; i < copies.size(); ++i) {
        const bool better =
            copies[i].teacher_loss < copies[best].teacher_loss ||
            (copies[i].teacher_loss == copies[best].teacher_loss &&
             copies[i].example->teacher_id < copies[best].example->teacher_id);
        if (better) best = i;
    }
    return best;
}

}  // namespace mtkd
