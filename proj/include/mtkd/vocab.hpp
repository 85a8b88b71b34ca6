#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtkd/example.hpp"

namespace mtkd {

// Canonical special tokens. A merged vocabulary pins them first, in this
// order, regardless of where each teacher placed them.
inline constexpr std::array<std::string_view, 5> kSpecialTokens = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

struct SpecialIds {
    TokenId pad = 0;
    TokenId unk = 0;
    TokenId cls = 0;
    TokenId sep = 0;
    TokenId mask = 0;

    bool contains(TokenId id) const {
        return id == pad || id == unk || id == cls || id == sep || id == mask;
    }
};

// Immutable token <-> id table. Ids are dense, 0..size()-1, in token order.
class Vocabulary {
public:
    // Validates uniqueness and the presence of all five special tokens.
    explicit Vocabulary(std::vector<std::string> tokens,
                        std::string continuation_prefix = "##");

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const;
    std::optional<TokenId> find(std::string_view token) const;
    bool contains(std::string_view token) const { return find(token).has_value(); }

    const SpecialIds& specials() const { return specials_; }
    const std::string& continuation_prefix() const { return continuation_prefix_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // Order-sensitive FNV-1a over the token list; every downstream artifact
    // (shard, checkpoint) embeds this to detect stage mismatches.
    std::uint64_t checksum() const { return checksum_; }

private:
    struct StringHash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const noexcept {
            return std::hash<std::string_view>{}(s);
        }
    };
    using TokenIndex = std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>>;

    std::vector<std::string> tokens_;
    TokenIndex index_;
    SpecialIds specials_;
    std::string continuation_prefix_;
    std::uint64_t checksum_ = 0;
};

// One token per line, UTF-8, LF-terminated; id = zero-based line number.
Vocabulary load_vocab(const std::filesystem::path& path,
                      std::string continuation_prefix = "##");
void write_vocab(const Vocabulary& v, const std::filesystem::path& path);

// Greedy longest-match-first WordPiece segmentation per whitespace-split
// word. Word-internal pieces carry the continuation prefix; a word with no
// valid segmentation (or longer than kMaxWordChars code points) becomes a
// single [UNK].
inline constexpr std::size_t kMaxWordChars = 100;
std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& v);

// Inverse of tokenize on its own outputs: continuation pieces are appended
// with the prefix stripped, other tokens start a new space-separated word.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& v);

// Total, string-preserving map from one teacher's token ids into the merged
// student vocabulary.
struct VocabMapping {
    std::string teacher_id;
    std::vector<TokenId> map;  // indexed by teacher token id

    TokenId apply(TokenId teacher_token_id) const;
    bool is_identity() const;
};

struct UnionVocab {
    Vocabulary student;
    std::vector<VocabMapping> mappings;  // one per teacher, input order
};

// Student vocabulary = specials pinned first, then teacher tokens in
// (teacher order, token id order), deduplicated keeping the first
// occurrence. Identical strings from different teachers share one id.
UnionVocab build_union_vocab(const std::vector<Vocabulary>& teachers,
                             const std::vector<std::string>& teacher_ids);

// Remaps input ids, gold ids, and any attached prediction ids in place.
// Positions and structure are unchanged.
void map_example(MaskedExample& ex, const VocabMapping& m);
void map_predictions(std::vector<TopKPrediction>& preds, const VocabMapping& m);

// Two tab-separated integer columns (teacher_id_index, student_id), sorted
// by the first column.
void write_mapping(const VocabMapping& m, const std::filesystem::path& path);
VocabMapping read_mapping(const std::filesystem::path& path, std::string teacher_id);

}  // namespace mtkd
