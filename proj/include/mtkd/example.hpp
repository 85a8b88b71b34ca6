#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtkd {

using TokenId = std::uint32_t;

// One tokenized, masked training instance under one teacher's vocabulary.
// input_ids holds the corrupted sequence ([MASK] / random / kept tokens at
// the masked positions); gold_ids holds the pre-corruption tokens there.
struct MaskedExample {
    std::string language;
    std::string teacher_id;
    std::vector<TokenId> input_ids;
    std::vector<std::uint32_t> masked_positions;  // strictly increasing
    std::vector<TokenId> gold_ids;                // parallel to masked_positions

    std::size_t mask_count() const { return masked_positions.size(); }

    bool operator==(const MaskedExample&) const = default;
};

// The k highest teacher logits at one masked position, sorted by logit
// descending, ties broken by lower token id.
struct TopKPrediction {
    std::uint32_t position = 0;
    std::vector<TokenId> ids;
    std::vector<float> logits;

    std::uint32_t k() const { return static_cast<std::uint32_t>(ids.size()); }

    bool operator==(const TopKPrediction&) const = default;
};

}  // namespace mtkd
