// NEON variants of the dense primitives, built only on aarch64 where
// float64x2 arithmetic is baseline.

#include "mtkd/kernels.hpp"

#include <arm_neon.h>

namespace mtkd::kernels::detail {

namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
    }
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t av = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scal_neon(double a, double* x, std::size_t n) {
    const float64x2_t av = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(x + i, vmulq_f64(av, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) x[i] *= a;
}

double sum_neon(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double max_neon(const double* x, std::size_t n) {
    double m = x[0];
    std::size_t i = 0;
    if (n >= 2) {
        float64x2_t acc = vld1q_f64(x);
        for (i = 2; i + 2 <= n; i += 2) acc = vmaxq_f64(acc, vld1q_f64(x + i));
        m = vmaxvq_f64(acc);
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

}  // namespace

Ops neon_ops() { return Ops{dot_neon, axpy_neon, scal_neon, sum_neon, max_neon}; }

}  // namespace mtkd::kernels::detail
