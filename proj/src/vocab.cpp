#include "mtkd/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mtkd/errors.hpp"
#include "mtkd/rng.hpp"

namespace mtkd {

namespace {

template <typename Index>
TokenId require_special(const Index& index, std::string_view token) {
    const auto it = index.find(token);
    if (it == index.end()) {
        throw validation_error("vocabulary is missing special token " + std::string(token));
    }
    return it->second;
}

std::uint64_t token_list_checksum(const std::vector<std::string>& tokens) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tokens) {
        h = fnv1a(t, h);
        h = fnv1a("\n", h);
    }
    return h;
}

// Byte offsets of UTF-8 code point starts, plus the end sentinel.
std::vector<std::size_t> codepoint_starts(std::string_view word) {
    std::vector<std::size_t> starts;
    starts.reserve(word.size() + 1);
    for (std::size_t i = 0; i < word.size(); ++i) {
        if ((static_cast<unsigned char>(word[i]) & 0xC0) != 0x80) starts.push_back(i);
    }
    starts.push_back(word.size());
    return starts;
}

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::string continuation_prefix)
    : tokens_(std::move(tokens)), continuation_prefix_(std::move(continuation_prefix)) {
    if (tokens_.empty()) throw validation_error("vocabulary is empty");
    if (continuation_prefix_.empty()) {
        throw validation_error("continuation prefix must be non-empty");
    }
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) {
            throw validation_error("duplicate token in vocabulary: " + tokens_[i]);
        }
    }
    specials_.pad = require_special(index_, kSpecialTokens[0]);
    specials_.unk = require_special(index_, kSpecialTokens[1]);
    specials_.cls = require_special(index_, kSpecialTokens[2]);
    specials_.sep = require_special(index_, kSpecialTokens[3]);
    specials_.mask = require_special(index_, kSpecialTokens[4]);
    checksum_ = token_list_checksum(tokens_);
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id >= tokens_.size()) {
        throw validation_error("token id " + std::to_string(id) + " out of range");
    }
    return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocabulary load_vocab(const std::filesystem::path& path, std::string continuation_prefix) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open vocab file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            throw validation_error("empty line in vocab file " + path.string());
        }
        tokens.push_back(line);
    }
    if (tokens.empty()) throw validation_error("vocab file is empty: " + path.string());
    try {
        return Vocabulary(std::move(tokens), std::move(continuation_prefix));
    } catch (const validation_error& e) {
        throw validation_error(path.string() + ": " + e.what());
    }
}

void write_vocab(const Vocabulary& v, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot write vocab file " + path.string());
    for (const auto& t : v.tokens()) out << t << '\n';
    if (!out) throw validation_error("failed writing vocab file " + path.string());
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& v) {
    std::vector<TokenId> out;
    const std::string& prefix = v.continuation_prefix();
    std::string candidate;

    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && is_ascii_space(text[pos])) ++pos;
        if (pos >= text.size()) break;
        std::size_t end = pos;
        while (end < text.size() && !is_ascii_space(text[end])) ++end;
        const std::string_view word = text.substr(pos, end - pos);
        pos = end;

        const auto starts = codepoint_starts(word);
        const std::size_t n_chars = starts.size() - 1;
        if (n_chars > kMaxWordChars) {
            out.push_back(v.specials().unk);
            continue;
        }

        std::vector<TokenId> pieces;
        bool bad = false;
        std::size_t start_cp = 0;
        while (start_cp < n_chars) {
            std::optional<TokenId> match;
            std::size_t match_end_cp = 0;
            for (std::size_t end_cp = n_chars; end_cp > start_cp; --end_cp) {
                const std::string_view sub =
                    word.substr(starts[start_cp], starts[end_cp] - starts[start_cp]);
                if (start_cp > 0) {
                    candidate.assign(prefix);
                    candidate.append(sub);
                    if (const auto id = v.find(candidate)) {
                        match = id;
                        match_end_cp = end_cp;
                        break;
                    }
                } else if (const auto id = v.find(sub)) {
                    match = id;
                    match_end_cp = end_cp;
                    break;
                }
            }
            if (!match) {
                bad = true;
                break;
            }
            pieces.push_back(*match);
            start_cp = match_end_cp;
        }

        if (bad) {
            out.push_back(v.specials().unk);
        } else {
            out.insert(out.end(), pieces.begin(), pieces.end());
        }
    }
    return out;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& v) {
    std::string out;
    const std::string& prefix = v.continuation_prefix();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::string& t = v.token(ids[i]);
        if (t.starts_with(prefix) && t.size() > prefix.size()) {
            out.append(t, prefix.size(), std::string::npos);
        } else {
            if (!out.empty()) out.push_back(' ');
            out.append(t);
        }
    }
    return out;
}

TokenId VocabMapping::apply(TokenId teacher_token_id) const {
    if (teacher_token_id >= map.size()) {
        throw validation_error("teacher token id " + std::to_string(teacher_token_id) +
                               " out of range for teacher " + teacher_id);
    }
    return map[teacher_token_id];
}

bool VocabMapping::is_identity() const {
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (map[i] != i) return false;
    }
    return true;
}

UnionVocab build_union_vocab(const std::vector<Vocabulary>& teachers,
                             const std::vector<std::string>& teacher_ids) {
    if (teachers.empty()) throw validation_error("no teacher vocabularies given");
    if (teachers.size() != teacher_ids.size()) {
        throw validation_error("teacher id count does not match vocabulary count");
    }
    const std::string& prefix = teachers.front().continuation_prefix();
    for (const auto& t : teachers) {
        if (t.continuation_prefix() != prefix) {
            throw validation_error("conflicting continuation prefixes across teachers: \"" +
                                   prefix + "\" vs \"" + t.continuation_prefix() + "\"");
        }
    }

    std::vector<std::string> student_tokens;
    std::unordered_map<std::string, TokenId> seen;
    for (const auto special : kSpecialTokens) {
        student_tokens.emplace_back(special);
        seen.emplace(student_tokens.back(),
                     static_cast<TokenId>(student_tokens.size() - 1));
    }
    const auto intern = [&](const std::string& tok) -> TokenId {
        const auto it = seen.find(tok);
        if (it != seen.end()) return it->second;
        student_tokens.push_back(tok);
        const TokenId id = static_cast<TokenId>(student_tokens.size() - 1);
        seen.emplace(tok, id);
        return id;
    };

    std::vector<VocabMapping> mappings;
    mappings.reserve(teachers.size());
    for (std::size_t t = 0; t < teachers.size(); ++t) {
        VocabMapping m;
        m.teacher_id = teacher_ids[t];
        m.map.reserve(teachers[t].size());
        for (const auto& tok : teachers[t].tokens()) {
            m.map.push_back(intern(tok));
        }
        mappings.push_back(std::move(m));
    }

    Vocabulary student(std::move(student_tokens), prefix);
    return UnionVocab{std::move(student), std::move(mappings)};
}

void map_example(MaskedExample& ex, const VocabMapping& m) {
    if (ex.teacher_id != m.teacher_id) {
        throw validation_error("example belongs to teacher " + ex.teacher_id +
                               " but mapping is for " + m.teacher_id);
    }
    for (auto& id : ex.input_ids) id = m.apply(id);
    for (auto& id : ex.gold_ids) id = m.apply(id);
}

void map_predictions(std::vector<TopKPrediction>& preds, const VocabMapping& m) {
    for (auto& p : preds) {
        for (auto& id : p.ids) id = m.apply(id);
    }
}

void write_mapping(const VocabMapping& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot write mapping file " + path.string());
    for (std::size_t i = 0; i < m.map.size(); ++i) {
        out << i << '\t' << m.map[i] << '\n';
    }
    if (!out) throw validation_error("failed writing mapping file " + path.string());
}

VocabMapping read_mapping(const std::filesystem::path& path, std::string teacher_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open mapping file " + path.string());
    VocabMapping m;
    m.teacher_id = std::move(teacher_id);
    std::string line;
    std::size_t expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::size_t teacher_idx = 0;
        TokenId student_id = 0;
        if (!(ss >> teacher_idx >> student_id) || teacher_idx != expect) {
            throw integrity_error("malformed mapping file " + path.string());
        }
        m.map.push_back(student_id);
        ++expect;
    }
    if (m.map.empty()) throw integrity_error("empty mapping file " + path.string());
    return m;
}

}  // namespace mtkd
