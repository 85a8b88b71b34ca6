#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtkd/rng.hpp"

namespace mtkd::test {

// A small fully synthetic distillation setup: per-language word inventories
// with a seeded bigram chain, corpora sampled from that chain, and lookup
// teachers whose logit rows are the (optionally noised) log-conditionals.
// A teacher keyed to the true chain is the strongest possible oracle for
// its language.
struct SyntheticLanguageSpec {
    std::string tag;
    std::size_t n_words = 12;
    std::size_t n_lines = 120;
    std::size_t words_per_line = 10;
};

struct SyntheticTeacherSpec {
    std::string id;
    std::vector<std::size_t> covers;  // language indices
    double noise = 0.0;               // 0 = exact conditional
};

struct SyntheticWorldSpec {
    std::vector<SyntheticLanguageSpec> languages;
    std::vector<SyntheticTeacherSpec> teachers;
    std::vector<std::vector<std::size_t>> assignment;  // language -> teacher indices
    std::uint64_t seed = 7;
    nlohmann::json training;  // merged into manifest["training"]
    nlohmann::json sampling;  // merged into manifest["sampling"]
};

class SyntheticWorld {
public:
    SyntheticWorld(const std::filesystem::path& dir, const SyntheticWorldSpec& spec)
        : dir_(dir), spec_(spec) {
        std::filesystem::create_directories(dir_);
        build_chains();
        write_corpora();
        write_teachers();
        write_manifest();
    }

    const std::filesystem::path& manifest_path() const { return manifest_path_; }
    const std::filesystem::path& dir() const { return dir_; }

    const std::vector<std::string>& words(std::size_t lang) const { return words_[lang]; }

private:
    static constexpr const char* kSpecials = "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n";

    void build_chains() {
        for (std::size_t li = 0; li < spec_.languages.size(); ++li) {
            const auto& lang = spec_.languages[li];
            std::vector<std::string> words;
            for (std::size_t w = 0; w < lang.n_words; ++w) {
                words.push_back(lang.tag + std::to_string(w));
            }
            words_.push_back(words);

            // Peaked conditional with a uniform floor so every transition
            // has nonzero mass.
            SplitMix64 rng(derive_stream(spec_.seed, {fnv1a("chain"), li}));
            const std::size_t n = lang.n_words;
            std::vector<std::vector<double>> chain(n, std::vector<double>(n));
            for (std::size_t from = 0; from < n; ++from) {
                for (auto& p : chain[from]) p = 0.2 / static_cast<double>(n);
                double peak = 0.4;
                for (int hot = 0; hot < 3; ++hot) {
                    chain[from][rng.next_below(n)] += peak;
                    peak *= 0.6;
                }
                double z = 0.0;
                for (const double p : chain[from]) z += p;
                for (auto& p : chain[from]) p /= z;
            }
            chains_.push_back(std::move(chain));
        }
    }

    void write_corpora() {
        for (std::size_t li = 0; li < spec_.languages.size(); ++li) {
            const auto& lang = spec_.languages[li];
            SplitMix64 rng(derive_stream(spec_.seed, {fnv1a("corpus"), li}));
            std::ofstream out(dir_ / (lang.tag + ".txt"), std::ios::binary);
            for (std::size_t line = 0; line < lang.n_lines; ++line) {
                std::size_t w = rng.next_below(lang.n_words);
                out << words_[li][w];
                for (std::size_t i = 1; i < lang.words_per_line; ++i) {
                    w = sample_row(chains_[li][w], rng);
                    out << ' ' << words_[li][w];
                }
                out << '\n';
            }
        }
    }

    static std::size_t sample_row(const std::vector<double>& probs, SplitMix64& rng) {
        const double u = rng.next_double();
        double cum = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) return i;
        }
        return probs.size() - 1;
    }

    void write_teachers() {
        for (std::size_t ti = 0; ti < spec_.teachers.size(); ++ti) {
            const auto& teacher = spec_.teachers[ti];

            std::vector<std::string> vocab;
            for (const std::size_t li : teacher.covers) {
                vocab.insert(vocab.end(), words_[li].begin(), words_[li].end());
            }

            std::ofstream vf(dir_ / (teacher.id + ".vocab"), std::ios::binary);
            vf << kSpecials;
            for (const auto& w : vocab) vf << w << '\n';
            vf.close();

            const std::size_t vocab_size = 5 + vocab.size();
            const auto index_of = [&](const std::string& w) {
                for (std::size_t i = 0; i < vocab.size(); ++i) {
                    if (vocab[i] == w) return 5 + i;
                }
                return std::size_t{1};  // [UNK]
            };

            SplitMix64 noise_rng(derive_stream(spec_.seed, {fnv1a("noise"), ti}));
            nlohmann::json doc;
            doc["default"] = default_row(vocab_size, vocab.size());
            nlohmann::json rows = nlohmann::json::object();
            for (const std::size_t li : teacher.covers) {
                for (std::size_t from = 0; from < words_[li].size(); ++from) {
                    std::vector<double> logits(vocab_size, -30.0);
                    std::vector<double> noisy = chains_[li][from];
                    if (teacher.noise > 0.0) {
                        double z = 0.0;
                        for (auto& p : noisy) {
                            p *= std::exp(teacher.noise *
                                          noise_rng.next_double(-1.0, 1.0));
                            z += p;
                        }
                        for (auto& p : noisy) p /= z;
                    }
                    for (std::size_t to = 0; to < words_[li].size(); ++to) {
                        logits[index_of(words_[li][to])] = std::log(noisy[to]);
                    }
                    rows[words_[li][from]] = logits;
                }
            }
            doc["rows"] = std::move(rows);
            std::ofstream of(dir_ / (teacher.id + ".oracle.json"), std::ios::binary);
            of << doc.dump();
        }
    }

    static std::vector<double> default_row(std::size_t vocab_size, std::size_t n_words) {
        // Uniform over the word ids, negligible mass on specials.
        std::vector<double> row(vocab_size, -30.0);
        for (std::size_t i = 5; i < vocab_size; ++i) {
            row[i] = std::log(1.0 / static_cast<double>(n_words));
        }
        return row;
    }

    void write_manifest() {
        nlohmann::json doc;
        doc["output_dir"] = "out";
        doc["teachers"] = nlohmann::json::array();
        for (const auto& teacher : spec_.teachers) {
            doc["teachers"].push_back(
                {{"id", teacher.id},
                 {"vocab", teacher.id + ".vocab"},
                 {"oracle", {{"type", "lookup"}, {"path", teacher.id + ".oracle.json"}}}});
        }
        doc["languages"] = nlohmann::json::array();
        for (std::size_t li = 0; li < spec_.languages.size(); ++li) {
            nlohmann::json ids = nlohmann::json::array();
            for (const std::size_t ti : spec_.assignment[li]) {
                ids.push_back(spec_.teachers[ti].id);
            }
            doc["languages"].push_back({{"tag", spec_.languages[li].tag},
                                        {"corpus", spec_.languages[li].tag + ".txt"},
                                        {"teachers", ids}});
        }
        doc["sampling"] = spec_.sampling.is_null() ? nlohmann::json::object() : spec_.sampling;
        doc["training"] = spec_.training.is_null() ? nlohmann::json::object() : spec_.training;

        manifest_path_ = dir_ / "manifest.json";
        std::ofstream out(manifest_path_, std::ios::binary);
        out << doc.dump(2);
    }

    std::filesystem::path dir_;
    SyntheticWorldSpec spec_;
    std::vector<std::vector<std::string>> words_;
    std::vector<std::vector<std::vector<double>>> chains_;
    std::filesystem::path manifest_path_;
};

}  // namespace mtkd::test
