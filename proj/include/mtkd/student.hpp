#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mtkd/example.hpp"

namespace mtkd {

inline constexpr char kCheckpointMagic[4] = {'M', 'D', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct StudentConfig {
    std::uint32_t vocab_size = 0;
    std::uint32_t embed_dim = 0;
    std::uint32_t context_window = 2;
    std::uint64_t vocab_checksum = 0;
};

// Small masked LM over the union vocabulary: token embeddings, one mixing
// layer over a +/-context_window neighborhood, tanh nonlinearity, output
// projection tied to the embedding table.
//
// For a masked position i with (corrupted) input x:
//   c = E[x_i] + sum_o a_left[o-1]  * E[x_{i-o}]   (o = 1..w, in range)
//             + sum_o a_right[o-1] * E[x_{i+o}]
//   h = tanh(M c + b)
//   logits = E h
//
// Parameter layout (flat, row-major): E (v*d) | M (d*d) | b (d) |
// a_left (w) | a_right (w). Checkpoints serialize this order as f32.
class StudentModel {
public:
    // Scaled uniform init: E, M ~ U(-1/sqrt(d), 1/sqrt(d)) from the given
    // seed; b = 0; neighbor scales start at 0.5.
    static StudentModel init(const StudentConfig& cfg, std::uint64_t seed);
    static StudentModel zeros(const StudentConfig& cfg);

    const StudentConfig& config() const { return cfg_; }
    std::size_t param_count() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    struct Forward {
        // One row per masked position.
        std::vector<std::vector<double>> logits;   // n x vocab_size
        std::vector<std::vector<double>> context;  // n x d, the c vectors
        std::vector<std::vector<double>> hidden;   // n x d, the h vectors
    };

    Forward forward(const MaskedExample& ex) const;

    // Accumulates dLoss/dParams into grad (same layout as params()) given
    // dLoss/dLogits per masked position. Reuses the forward caches; E is
    // read from the current parameters, so call before any update.
    void backward(const MaskedExample& ex, const Forward& fwd,
                  const std::vector<std::vector<double>>& dlogits,
                  std::span<double> grad) const;

    // Flat-parameter helpers (offsets into params()).
    std::size_t embedding_offset(TokenId id) const;
    std::size_t mix_offset() const;
    std::size_t bias_offset() const;
    std::size_t left_scale_offset() const;
    std::size_t right_scale_offset() const;

private:
    StudentModel(StudentConfig cfg, std::vector<double> params);

    void validate_ids(const MaskedExample& ex) const;

    StudentConfig cfg_;
    std::vector<double> params_;
};

std::size_t student_param_count(const StudentConfig& cfg);

// Header (dims, vocab checksum) + flat little-endian f32 blob + CRC.
void save_checkpoint(const StudentModel& model, const std::filesystem::path& path);
StudentModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mtkd
