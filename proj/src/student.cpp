#include "mtkd/student.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mtkd/errors.hpp"
#include "mtkd/kernels.hpp"
#include "mtkd/rng.hpp"
#include "mtkd/shard.hpp"

namespace mtkd {

std::size_t student_param_count(const StudentConfig& cfg) {
    const std::size_t v = cfg.vocab_size;
    const std::size_t d = cfg.embed_dim;
    const std::size_t w = cfg.context_window;
    return v * d + d * d + d + 2 * w;
}

StudentModel::StudentModel(StudentConfig cfg, std::vector<double> params)
    : cfg_(cfg), params_(std::move(params)) {}

StudentModel StudentModel::zeros(const StudentConfig& cfg) {
    if (cfg.vocab_size < 1 || cfg.embed_dim < 1) {
        throw validation_error("student model needs vocab_size >= 1 and embed_dim >= 1");
    }
    return StudentModel(cfg, std::vector<double>(student_param_count(cfg), 0.0));
}

StudentModel StudentModel::init(const StudentConfig& cfg, std::uint64_t seed) {
    StudentModel m = zeros(cfg);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    SplitMix64 rng(derive_stream(seed, {fnv1a("student-init")}));
    const std::size_t dense = static_cast<std::size_t>(cfg.vocab_size) * cfg.embed_dim +
                              static_cast<std::size_t>(cfg.embed_dim) * cfg.embed_dim;
    for (std::size_t i = 0; i < dense; ++i) {
        m.params_[i] = rng.next_double(-scale, scale);
    }
    // Bias stays zero; neighbor scales start at 0.5 so context contributes
    // from the first step.
    for (std::size_t i = 0; i < 2 * static_cast<std::size_t>(cfg.context_window); ++i) {
        m.params_[m.left_scale_offset() + i] = 0.5;
    }
    return m;
}

std::size_t StudentModel::embedding_offset(TokenId id) const {
    return static_cast<std::size_t>(id) * cfg_.embed_dim;
}
std::size_t StudentModel::mix_offset() const {
    return static_cast<std::size_t>(cfg_.vocab_size) * cfg_.embed_dim;
}
std::size_t StudentModel::bias_offset() const {
    return mix_offset() + static_cast<std::size_t>(cfg_.embed_dim) * cfg_.embed_dim;
}
std::size_t StudentModel::left_scale_offset() const {
    return bias_offset() + cfg_.embed_dim;
}
std::size_t StudentModel::right_scale_offset() const {
    return left_scale_offset() + cfg_.context_window;
}

void StudentModel::validate_ids(const MaskedExample& ex) const {
    for (const TokenId id : ex.input_ids) {
        if (id >= cfg_.vocab_size) {
            throw validation_error("input token id " + std::to_string(id) +
                                   " out of range for student vocab");
        }
    }
    for (const std::uint32_t p : ex.masked_positions) {
        if (p >= ex.input_ids.size()) {
            throw validation_error("masked position " + std::to_string(p) + " out of range");
        }
    }
}

StudentModel::Forward StudentModel::forward(const MaskedExample& ex) const {
    validate_ids(ex);
    const std::size_t d = cfg_.embed_dim;
    const std::size_t v = cfg_.vocab_size;
    const std::size_t w = cfg_.context_window;
    const std::size_t len = ex.input_ids.size();
    const double* E = params_.data();
    const double* M = params_.data() + mix_offset();
    const double* b = params_.data() + bias_offset();
    const double* a_left = params_.data() + left_scale_offset();
    const double* a_right = params_.data() + right_scale_offset();

    Forward fwd;
    fwd.logits.reserve(ex.mask_count());
    fwd.context.reserve(ex.mask_count());
    fwd.hidden.reserve(ex.mask_count());

    for (const std::uint32_t pos : ex.masked_positions) {
        std::vector<double> c(d, 0.0);
        kernels::axpy(1.0, E + embedding_offset(ex.input_ids[pos]), c.data(), d);
        for (std::size_t o = 1; o <= w; ++o) {
            if (pos >= o) {
                kernels::axpy(a_left[o - 1], E + embedding_offset(ex.input_ids[pos - o]),
                              c.data(), d);
            }
            if (pos + o < len) {
                kernels::axpy(a_right[o - 1], E + embedding_offset(ex.input_ids[pos + o]),
                              c.data(), d);
            }
        }

        std::vector<double> h(d);
        for (std::size_t row = 0; row < d; ++row) {
            h[row] = std::tanh(kernels::dot(M + row * d, c.data(), d) + b[row]);
        }

        std::vector<double> logits(v);
        for (std::size_t j = 0; j < v; ++j) {
            logits[j] = kernels::dot(E + static_cast<std::size_t>(j) * d, h.data(), d);
        }

        fwd.context.push_back(std::move(c));
        fwd.hidden.push_back(std::move(h));
        fwd.logits.push_back(std::move(logits));
    }
    return fwd;
}

void StudentModel::backward(const MaskedExample& ex, const Forward& fwd,
                            const std::vector<std::vector<double>>& dlogits,
                            std::span<double> grad) const {
    if (grad.size() != params_.size()) {
        throw validation_error("gradient buffer size mismatch");
    }
    if (dlogits.size() != ex.mask_count()) {
        throw validation_error("dlogits count does not match masked positions");
    }
    const std::size_t d = cfg_.embed_dim;
    const std::size_t v = cfg_.vocab_size;
    const std::size_t w = cfg_.context_window;
    const std::size_t len = ex.input_ids.size();
    const double* E = params_.data();
    const double* M = params_.data() + mix_offset();
    const double* a_left = params_.data() + left_scale_offset();
    const double* a_right = params_.data() + right_scale_offset();
    double* gE = grad.data();
    double* gM = grad.data() + mix_offset();
    double* gb = grad.data() + bias_offset();
    double* ga_left = grad.data() + left_scale_offset();
    double* ga_right = grad.data() + right_scale_offset();

    std::vector<double> dh(d);
    std::vector<double> du(d);
    std::vector<double> dc(d);

    for (std::size_t i = 0; i < ex.mask_count(); ++i) {
        const std::uint32_t pos = ex.masked_positions[i];
        const std::vector<double>& g_logits = dlogits[i];
        const std::vector<double>& h = fwd.hidden[i];
        const std::vector<double>& c = fwd.context[i];
        if (g_logits.size() != v) {
            throw validation_error("dlogits row has wrong width");
        }

        // Output projection: logits = E h (tied embeddings).
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t j = 0; j < v; ++j) {
            if (g_logits[j] == 0.0) continue;
            kernels::axpy(g_logits[j], E + static_cast<std::size_t>(j) * d, dh.data(), d);
            kernels::axpy(g_logits[j], h.data(), gE + static_cast<std::size_t>(j) * d, d);
        }

        // h = tanh(u), u = M c + b
        for (std::size_t row = 0; row < d; ++row) {
            du[row] = dh[row] * (1.0 - h[row] * h[row]);
        }
        std::fill(dc.begin(), dc.end(), 0.0);
        for (std::size_t row = 0; row < d; ++row) {
            if (du[row] == 0.0) continue;
            kernels::axpy(du[row], c.data(), gM + row * d, d);
            kernels::axpy(du[row], M + row * d, dc.data(), d);
            gb[row] += du[row];
        }

        // c = E[x_pos] + sum_o a * E[x_{pos +/- o}]
        kernels::axpy(1.0, dc.data(), gE + embedding_offset(ex.input_ids[pos]), d);
        for (std::size_t o = 1; o <= w; ++o) {
            if (pos >= o) {
                const std::size_t off = embedding_offset(ex.input_ids[pos - o]);
                ga_left[o - 1] += kernels::dot(E + off, dc.data(), d);
                kernels::axpy(a_left[o - 1], dc.data(), gE + off, d);
            }
            if (pos + o < len) {
                const std::size_t off = embedding_offset(ex.input_ids[pos + o]);
                ga_right[o - 1] += kernels::dot(E + off, dc.data(), d);
                kernels::axpy(a_right[o - 1], dc.data(), gE + off, d);
            }
        }
    }
}

void save_checkpoint(const StudentModel& model, const std::filesystem::path& path) {
    const auto& cfg = model.config();
    std::vector<char> buf;
    const auto put_u16 = [&buf](std::uint16_t x) {
        buf.push_back(static_cast<char>(x));
        buf.push_back(static_cast<char>(x >> 8));
    };
    const auto put_u32 = [&](std::uint32_t x) {
        put_u16(static_cast<std::uint16_t>(x));
        put_u16(static_cast<std::uint16_t>(x >> 16));
    };
    const auto put_u64 = [&](std::uint64_t x) {
        put_u32(static_cast<std::uint32_t>(x));
        put_u32(static_cast<std::uint32_t>(x >> 32));
    };

    buf.insert(buf.end(), kCheckpointMagic, kCheckpointMagic + 4);
    put_u16(kCheckpointVersion);
    put_u32(cfg.vocab_size);
    put_u32(cfg.embed_dim);
    put_u32(cfg.context_window);
    put_u64(cfg.vocab_checksum);
    put_u64(model.param_count());
    for (const double p : model.params()) {
        put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(p)));
    }
    put_u32(crc32(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw validation_error("failed writing checkpoint " + path.string());
}

StudentModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open checkpoint " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    const auto need = [&](std::size_t n) {
        if (buf.size() - pos < n) throw integrity_error("truncated checkpoint " + path.string());
    };
    const auto get_u16 = [&]() -> std::uint16_t {
        need(2);
        const auto lo = static_cast<std::uint8_t>(buf[pos++]);
        const auto hi = static_cast<std::uint8_t>(buf[pos++]);
        return static_cast<std::uint16_t>(lo | (hi << 8));
    };
    const auto get_u32 = [&]() -> std::uint32_t {
        const std::uint32_t lo = get_u16();
        return lo | (static_cast<std::uint32_t>(get_u16()) << 16);
    };
    const auto get_u64 = [&]() -> std::uint64_t {
        const std::uint64_t lo = get_u32();
        return lo | (static_cast<std::uint64_t>(get_u32()) << 32);
    };

    need(4);
    if (std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
        throw integrity_error("bad magic in checkpoint " + path.string());
    }
    pos += 4;
    const std::uint16_t version = get_u16();
    if (version != kCheckpointVersion) {
        throw integrity_error("unsupported checkpoint version in " + path.string());
    }
    StudentConfig cfg;
    cfg.vocab_size = get_u32();
    cfg.embed_dim = get_u32();
    cfg.context_window = get_u32();
    cfg.vocab_checksum = get_u64();
    const std::uint64_t count = get_u64();
    if (count != student_param_count(cfg)) {
        throw integrity_error("parameter count mismatch in checkpoint " + path.string());
    }

    StudentModel model = StudentModel::zeros(cfg);
    auto params = model.params();
    for (std::uint64_t i = 0; i < count; ++i) {
        params[i] = static_cast<double>(std::bit_cast<float>(get_u32()));
    }
    const std::uint32_t stored_crc = get_u32();
    if (pos != buf.size()) throw integrity_error("trailing bytes in checkpoint " + path.string());
    if (stored_crc != crc32(buf.data(), buf.size() - 4)) {
        throw integrity_error("checksum mismatch in checkpoint " + path.string());
    }
    return model;
}

}  // namespace mtkd
