#include "mtkd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mtkd/errors.hpp"

namespace mtkd {

namespace {

std::uint64_t whitespace_token_count(std::string_view line) {
    std::uint64_t count = 0;
    bool in_token = false;
    for (const char c : line) {
        const bool space = c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
        if (!space && !in_token) ++count;
        in_token = !space;
    }
    return count;
}

}  // namespace

LanguageCorpus load_corpus(const std::filesystem::path& path, std::string language) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open corpus file " + path.string());
    LanguageCorpus corpus;
    corpus.language = std::move(language);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        corpus.token_count += whitespace_token_count(line);
        corpus.lines.push_back(line);
    }
    return corpus;
}

std::vector<double> smoothed_weights(std::span<const std::uint64_t> token_counts,
                                     double alpha) {
    if (token_counts.empty()) throw validation_error("no corpora to weight");
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw validation_error("smoothing alpha must be in (0, 1]");
    }
    const double total = static_cast<double>(
        std::accumulate(token_counts.begin(), token_counts.end(), std::uint64_t{0}));
    if (total <= 0.0) throw validation_error("all corpora have zero tokens");

    std::vector<double> weights(token_counts.size());
    double z = 0.0;
    for (std::size_t i = 0; i < token_counts.size(); ++i) {
        if (token_counts[i] == 0) {
            throw validation_error("corpus " + std::to_string(i) + " has zero tokens");
        }
        weights[i] = std::pow(static_cast<double>(token_counts[i]) / total, alpha);
        z += weights[i];
    }
    for (auto& w : weights) w /= z;
    return weights;
}

std::vector<double> compute_sampling_weights(std::span<const LanguageCorpus> corpora,
                                             const SamplingConfig& cfg) {
    std::vector<std::uint64_t> counts;
    counts.reserve(corpora.size());
    for (const auto& c : corpora) counts.push_back(c.token_count);
    return smoothed_weights(counts, cfg.alpha);
}

std::size_t sample_index(std::span<const double> weights, SplitMix64& rng) {
    const double u = rng.next_double();
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        if (u < cum) return i;
    }
    return weights.size() - 1;  // guard against rounding at the top end
}

MaskedExample mask_example(std::span<const TokenId> ids, const Vocabulary& v,
                           double rate, SplitMix64& rng) {
    if (ids.empty()) throw validation_error("cannot mask an empty example");
    if (!(rate > 0.0) || !(rate < 1.0)) {
        throw validation_error("mask rate must be in (0, 1)");
    }
    const TokenId mask_id = v.specials().mask;
    for (const TokenId id : ids) {
        if (id == mask_id) throw validation_error("input already contains [MASK]");
        if (id >= v.size()) {
            throw validation_error("token id " + std::to_string(id) + " out of range");
        }
    }

    const std::size_t n_mask = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(rate * static_cast<double>(ids.size()))));

    std::vector<std::uint32_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0u);
    shuffle(order, rng);
    std::vector<std::uint32_t> positions(order.begin(),
                                         order.begin() + static_cast<std::ptrdiff_t>(n_mask));
    std::sort(positions.begin(), positions.end());

    // Non-special ids, in id order, as the random-replacement pool.
    std::vector<TokenId> replacement_pool;
    replacement_pool.reserve(v.size());
    for (TokenId id = 0; id < v.size(); ++id) {
        if (!v.specials().contains(id)) replacement_pool.push_back(id);
    }

    MaskedExample ex;
    ex.input_ids.assign(ids.begin(), ids.end());
    ex.masked_positions = positions;
    ex.gold_ids.reserve(n_mask);
    for (const std::uint32_t pos : positions) {
        ex.gold_ids.push_back(ids[pos]);
        const double u = rng.next_double();
        if (u < kMaskTokenProb) {
            ex.input_ids[pos] = mask_id;
        } else if (u < kMaskTokenProb + kRandomTokenProb && !replacement_pool.empty()) {
            const std::size_t pick = static_cast<std::size_t>(
                rng.next_below(replacement_pool.size()));
            ex.input_ids[pos] = replacement_pool[pick];
        }
        // else: keep the original token; the position still trains.
    }
    return ex;
}

}  // namespace mtkd
