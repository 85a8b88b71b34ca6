#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtkd/example.hpp"
#include "mtkd/rng.hpp"
#include "mtkd/vocab.hpp"

namespace mtkd {

// Raw transfer corpus for one language: one example per line.
// token_count is measured in whitespace tokens before any subword split,
// so language sampling is independent of which teacher tokenizes a line.
struct LanguageCorpus {
    std::string language;
    std::vector<std::string> lines;
    std::uint64_t token_count = 0;
};

LanguageCorpus load_corpus(const std::filesystem::path& path, std::string language);

struct SamplingConfig {
    double alpha = 0.7;  // smoothing exponent in (0, 1]
    std::uint64_t seed = 0;
};

// q_k = p_k^alpha / sum_j p_j^alpha with p_k the corpus token fraction.
// alpha < 1 upsamples tail languages.
std::vector<double> smoothed_weights(std::span<const std::uint64_t> token_counts,
                                     double alpha);
std::vector<double> compute_sampling_weights(std::span<const LanguageCorpus> corpora,
                                             const SamplingConfig& cfg);

// Categorical draw by CDF inversion; deterministic for a fixed rng stream.
std::size_t sample_index(std::span<const double> weights, SplitMix64& rng);

inline constexpr double kMaskTokenProb = 0.8;
inline constexpr double kRandomTokenProb = 0.1;  // remainder keeps the token

// Selects max(1, floor(rate * len)) positions by seeded shuffle and applies
// 80% [MASK] / 10% random non-special token / 10% keep. gold_ids record the
// pre-corruption tokens. language/teacher_id are left for the caller.
MaskedExample mask_example(std::span<const TokenId> ids, const Vocabulary& v,
                           double rate, SplitMix64& rng);

}  // namespace mtkd
