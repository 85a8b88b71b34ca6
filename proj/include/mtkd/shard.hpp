#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtkd/example.hpp"

namespace mtkd {

inline constexpr char kShardMagic[4] = {'M', 'D', 'S', 'H'};
inline constexpr std::uint16_t kShardVersion = 1;

// One offline-evaluated example: the masked instance (already remapped to
// student ids by the prepare stage), the teacher's full-vocab MLM loss, and
// the per-position top-k predictions.
struct ShardRecord {
    std::uint64_t example_id = 0;
    std::string language;
    std::vector<TokenId> input_ids;
    std::vector<std::uint32_t> masked_positions;
    std::vector<TokenId> gold_ids;
    double teacher_loss = 0.0;
    std::vector<TopKPrediction> predictions;  // parallel to masked_positions

    MaskedExample to_example(std::string teacher_id) const;

    bool operator==(const ShardRecord&) const = default;
};

struct ShardHeader {
    std::uint16_t version = kShardVersion;
    std::string teacher_id;
    std::uint32_t k = 8;
    std::uint64_t vocab_checksum = 0;
    std::uint64_t record_count = 0;
};

struct Shard {
    ShardHeader header;
    std::vector<ShardRecord> records;
};

// Little-endian, length-prefixed records, CRC-guarded header; the layout is
// documented in the README. read_shard(write_shard(x)) == x, bit-exact for
// logits and losses.
void write_shard(const ShardHeader& header, std::span<const ShardRecord> records,
                 const std::filesystem::path& path);
Shard read_shard(const std::filesystem::path& path);

// Throws integrity_error when an artifact was produced against a different
// student vocabulary.
void require_vocab_checksum(const ShardHeader& header, std::uint64_t expected,
                            const std::string& what);

std::uint32_t crc32(const void* data, std::size_t size);

}  // namespace mtkd
