#include "mtkd/shard.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "mtkd/errors.hpp"

namespace mtkd {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int bit = 0; bit < 8; ++bit) {
            c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
        }
        table[i] = c;
    }
    return table;
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v));
        u8(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        u16(static_cast<std::uint16_t>(v));
        u16(static_cast<std::uint16_t>(v >> 16));
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const void* data, std::size_t n) {
        const char* p = static_cast<const char*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void short_string(const std::string& s) {
        if (s.size() > 0xFFFF) throw validation_error("string too long for shard field");
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }

    const std::vector<char>& data() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<char> buf_;
};

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size, std::string origin)
        : data_(data), size_(size), origin_(std::move(origin)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint16_t u16() {
        const std::uint16_t lo = u8();
        return static_cast<std::uint16_t>(lo | (static_cast<std::uint16_t>(u8()) << 8));
    }
    std::uint32_t u32() {
        const std::uint32_t lo = u16();
        return lo | (static_cast<std::uint32_t>(u16()) << 16);
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | (static_cast<std::uint64_t>(u32()) << 32);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string short_string() {
        const std::uint16_t len = u16();
        need(len);
        std::string s(data_ + pos_, len);
        pos_ += len;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

    void need(std::size_t n) const {
        if (size_ - pos_ < n) throw integrity_error("truncated shard file " + origin_);
    }

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string origin_;
};

void check_record(const ShardRecord& r) {
    if (r.predictions.size() != r.masked_positions.size() ||
        r.gold_ids.size() != r.masked_positions.size()) {
        throw validation_error("shard record fields are not parallel");
    }
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
        if (r.predictions[i].position != r.masked_positions[i]) {
            throw validation_error("prediction positions do not match masked positions");
        }
        if (r.predictions[i].ids.size() != r.predictions[i].logits.size()) {
            throw validation_error("prediction ids/logits are not parallel");
        }
    }
}

void write_record(ByteWriter& out, const ShardRecord& r) {
    ByteWriter body;
    body.u64(r.example_id);
    body.short_string(r.language);
    body.u32(static_cast<std::uint32_t>(r.input_ids.size()));
    for (const TokenId id : r.input_ids) body.u32(id);
    body.u32(static_cast<std::uint32_t>(r.masked_positions.size()));
    for (const std::uint32_t p : r.masked_positions) body.u32(p);
    for (const TokenId g : r.gold_ids) body.u32(g);
    body.f64(r.teacher_loss);
    for (const auto& pred : r.predictions) {
        body.u32(pred.k());
        for (const TokenId id : pred.ids) body.u32(id);
        for (const float logit : pred.logits) body.f32(logit);
    }
    out.u32(static_cast<std::uint32_t>(body.size()));
    out.bytes(body.data().data(), body.size());
}

ShardRecord read_record(ByteReader& in) {
    const std::uint32_t rec_len = in.u32();
    in.need(rec_len);
    const std::size_t end = in.pos() + rec_len;

    ShardRecord r;
    r.example_id = in.u64();
    r.language = in.short_string();
    const std::uint32_t input_len = in.u32();
    r.input_ids.reserve(input_len);
    for (std::uint32_t i = 0; i < input_len; ++i) r.input_ids.push_back(in.u32());
    const std::uint32_t n = in.u32();
    r.masked_positions.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) r.masked_positions.push_back(in.u32());
    r.gold_ids.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) r.gold_ids.push_back(in.u32());
    r.teacher_loss = in.f64();
    r.predictions.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        TopKPrediction pred;
        pred.position = r.masked_positions[i];
        const std::uint32_t k = in.u32();
        pred.ids.reserve(k);
        for (std::uint32_t j = 0; j < k; ++j) pred.ids.push_back(in.u32());
        pred.logits.reserve(k);
        for (std::uint32_t j = 0; j < k; ++j) pred.logits.push_back(in.f32());
        r.predictions.push_back(std::move(pred));
    }
    if (in.pos() != end) throw integrity_error("shard record length mismatch");
    return r;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t size) {
    static const auto table = make_crc_table();
    std::uint32_t crc = 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    }
    return crc ^ 0xFFFFFFFFu;
}

MaskedExample ShardRecord::to_example(std::string teacher_id) const {
    MaskedExample ex;
    ex.language = language;
    ex.teacher_id = std::move(teacher_id);
    ex.input_ids = input_ids;
    ex.masked_positions = masked_positions;
    ex.gold_ids = gold_ids;
    return ex;
}

void write_shard(const ShardHeader& header, std::span<const ShardRecord> records,
                 const std::filesystem::path& path) {
    for (const auto& r : records) check_record(r);

    ByteWriter head;
    head.bytes(kShardMagic, sizeof(kShardMagic));
    head.u16(header.version);
    head.u32(header.k);
    head.u64(header.vocab_checksum);
    head.u64(records.size());
    head.short_string(header.teacher_id);
    const std::uint32_t head_crc = crc32(head.data().data(), head.size());

    ByteWriter out;
    out.bytes(head.data().data(), head.size());
    out.u32(head_crc);
    for (const auto& r : records) write_record(out, r);

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw validation_error("cannot write shard file " + path.string());
    file.write(out.data().data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw validation_error("failed writing shard file " + path.string());
}

Shard read_shard(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw validation_error("cannot open shard file " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(file)),
                            std::istreambuf_iterator<char>());

    ByteReader in(bytes.data(), bytes.size(), path.string());
    in.need(sizeof(kShardMagic));
    char magic[4];
    for (auto& c : magic) c = static_cast<char>(in.u8());
    if (std::memcmp(magic, kShardMagic, sizeof(kShardMagic)) != 0) {
        throw integrity_error("bad magic in shard file " + path.string());
    }

    Shard shard;
    shard.header.version = in.u16();
    if (shard.header.version != kShardVersion) {
        throw integrity_error("unsupported shard version " +
                              std::to_string(shard.header.version) + " in " + path.string());
    }
    shard.header.k = in.u32();
    shard.header.vocab_checksum = in.u64();
    const std::uint64_t record_count = in.u64();
    shard.header.teacher_id = in.short_string();
    shard.header.record_count = record_count;

    const std::uint32_t stored_crc = in.u32();
    const std::uint32_t actual_crc = crc32(bytes.data(), in.pos() - 4);
    if (stored_crc != actual_crc) {
        throw integrity_error("header checksum mismatch in shard file " + path.string());
    }

    shard.records.reserve(record_count);
    for (std::uint64_t i = 0; i < record_count; ++i) {
        shard.records.push_back(read_record(in));
    }
    if (in.remaining() != 0) {
        throw integrity_error("trailing bytes in shard file " + path.string());
    }
    return shard;
}

void require_vocab_checksum(const ShardHeader& header, std::uint64_t expected,
                            const std::string& what) {
    if (header.vocab_checksum != expected) {
        throw integrity_error("vocab checksum mismatch: " + what +
                              " was built against a different vocabulary");
    }
}

}  // namespace mtkd
