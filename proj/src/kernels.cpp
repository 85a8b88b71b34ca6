#include "mtkd/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

namespace mtkd::kernels {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal_scalar(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double max_scalar(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

}  // namespace

namespace detail {

Ops scalar_ops() {
    return Ops{dot_scalar, axpy_scalar, scal_scalar, sum_scalar, max_scalar};
}

#if defined(MTKD_HAVE_AVX2_TU)
Ops avx2_ops();
bool cpu_has_avx2();
#endif
#if defined(MTKD_HAVE_NEON_TU)
Ops neon_ops();
#endif

}  // namespace detail

namespace {

struct Dispatch {
    detail::Ops ops;
    Backend backend;
};

bool supported(Backend b) {
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
#if defined(MTKD_HAVE_AVX2_TU)
            return detail::cpu_has_avx2();
#else
            return false;
#endif
        case Backend::neon:
#if defined(MTKD_HAVE_NEON_TU)
            return true;
#else
            return false;
#endif
    }
    return false;
}

detail::Ops ops_for(Backend b) {
    switch (b) {
#if defined(MTKD_HAVE_AVX2_TU)
        case Backend::avx2:
            return detail::avx2_ops();
#endif
#if defined(MTKD_HAVE_NEON_TU)
        case Backend::neon:
            return detail::neon_ops();
#endif
        default:
            return detail::scalar_ops();
    }
}

Backend widest_supported() {
    if (supported(Backend::avx2)) return Backend::avx2;
    if (supported(Backend::neon)) return Backend::neon;
    return Backend::scalar;
}

Backend initial_backend() {
    if (const char* env = std::getenv("MTKD_KERNELS")) {
        const std::string v(env);
        if (v == "scalar") return Backend::scalar;
        if (v == "avx2" && supported(Backend::avx2)) return Backend::avx2;
        if (v == "neon" && supported(Backend::neon)) return Backend::neon;
        // "auto" or anything unusable falls through to detection.
    }
    return widest_supported();
}

Dispatch& dispatch() {
    static Dispatch d = [] {
        const Backend b = initial_backend();
        return Dispatch{ops_for(b), b};
    }();
    return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

bool backend_supported(Backend b) { return supported(b); }

bool set_backend(Backend b) {
    if (!supported(b)) return false;
    dispatch() = Dispatch{ops_for(b), b};
    return true;
}

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::scalar:
            return "scalar";
        case Backend::avx2:
            return "avx2";
        case Backend::neon:
            return "neon";
    }
    return "unknown";
}

double dot(const double* x, const double* y, std::size_t n) {
    return dispatch().ops.dot(x, y, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    dispatch().ops.axpy(a, x, y, n);
}

void scal(double a, double* x, std::size_t n) { dispatch().ops.scal(a, x, n); }

double sum(const double* x, std::size_t n) { return dispatch().ops.sum(x, n); }

double max(const double* x, std::size_t n) { return dispatch().ops.max(x, n); }

void softmax(const double* logits, double* probs, std::size_t n) {
    const double m = max(logits, n);
    for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp(logits[i] - m);
    const double z = sum(probs, n);
    scal(1.0 / z, probs, n);
}

double log_sum_exp(const double* logits, std::size_t n) {
    const double m = max(logits, n);
    if (std::isinf(m) && m < 0) return m;  // all -inf
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i] - m);
    return m + std::log(z);
}

}  // namespace mtkd::kernels
