#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision primitives behind the model forward/backward and
// the softmax paths. Each primitive has a scalar reference implementation
// and, where the target CPU provides them, an AVX2+FMA or NEON variant
// selected once at startup. Within a process the selected backend never
// changes, so repeated runs on one machine are bit-identical; set
// MTKD_KERNELS=scalar to pin results across machines.
namespace mtkd::kernels {

enum class Backend { scalar, avx2, neon };

// Backend chosen at startup: MTKD_KERNELS env var if set ("scalar", "avx2",
// "neon", "auto"), otherwise the widest one the CPU supports.
Backend active_backend();
bool backend_supported(Backend b);
// Force a backend (tests use this to compare variants). Returns false and
// leaves the active backend unchanged if unsupported on this CPU.
bool set_backend(Backend b);
std::string_view backend_name(Backend b);

double dot(const double* x, const double* y, std::size_t n);
// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);
// x *= a
void scal(double a, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
// n >= 1
double max(const double* x, std::size_t n);

// Composed on the primitives above; exp() is always std::exp per element so
// scalar and SIMD backends differ only in summation order.
void softmax(const double* logits, double* probs, std::size_t n);
double log_sum_exp(const double* logits, std::size_t n);

namespace detail {

struct Ops {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scal)(double, double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max)(const double*, std::size_t);
};

Ops scalar_ops();

}  // namespace detail

}  // namespace mtkd::kernels
