// NEON (aarch64) variants. float64x2 lanes; NEON is baseline on aarch64 so no
// runtime probe is needed beyond the architecture check.

#include "telcos/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace telcos::kernels {
namespace neon {

void fill(double* dst, double v, std::size_t n) {
    const float64x2_t vv = vdupq_n_f64(v);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(dst + i, vv);
    for (; i < n; ++i) dst[i] = v;
}

void add(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale(double* dst, const double* a, double s, std::size_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vs));
    for (; i < n; ++i) dst[i] = a[i] * s;
}

void axpy(double* y, const double* x, double a, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_g2(double* y, const double* x, double a, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2x2_t pair = vld2q_f64(x + 2 * i);  // de-interleave even/odd
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, pair.val[0]));
    }
    for (; i < n; ++i) y[i] += a * x[2 * i];
}

void axpy_s2(double* y, const double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[2 * i] += a * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double dot_g2(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2x2_t pair = vld2q_f64(b + 2 * i);
        acc = vfmaq_f64(acc, vld1q_f64(a + i), pair.val[0]);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i] * b[2 * i];
    return s;
}

double sum(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

void relu(double* dst, const double* x, std::size_t n) {
    const float64x2_t z = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(x + i);
        uint64x2_t gt = vcgtq_f64(v, z);
        vst1q_f64(dst + i, vbslq_f64(gt, v, z));
    }
    for (; i < n; ++i) dst[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(double* dx, const double* x, const double* g, std::size_t n) {
    const float64x2_t z = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        uint64x2_t gt = vcgtq_f64(vld1q_f64(x + i), z);
        float64x2_t vg = vbslq_f64(gt, vld1q_f64(g + i), z);
        vst1q_f64(dx + i, vaddq_f64(vld1q_f64(dx + i), vg));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) dx[i] += g[i];
}

void minmax(const double* x, std::size_t n, double* mn, double* mx) {
    double lo = x[0], hi = x[0];
    std::size_t i = 0;
    if (n >= 2) {
        float64x2_t vlo = vld1q_f64(x);
        float64x2_t vhi = vlo;
        for (i = 2; i + 2 <= n; i += 2) {
            float64x2_t v = vld1q_f64(x + i);
            vlo = vminq_f64(vlo, v);
            vhi = vmaxq_f64(vhi, v);
        }
        lo = vminvq_f64(vlo);
        hi = vmaxvq_f64(vhi);
    }
    for (; i < n; ++i) {
        if (x[i] < lo) lo = x[i];
        if (x[i] > hi) hi = x[i];
    }
    *mn = lo;
    *mx = hi;
}

}  // namespace neon

const KernelTable* neon_table() {
    static const KernelTable t = {
        neon::fill, neon::add,    neon::sub, neon::mul,    neon::scale,
        neon::axpy, neon::axpy_g2, neon::axpy_s2, neon::dot, neon::dot_g2,
        neon::sum,  neon::relu,   neon::relu_bwd, neon::minmax,
    };
    return &t;
}

}  // namespace telcos::kernels

#else

namespace telcos::kernels {
const KernelTable* neon_table() { return nullptr; }
}  // namespace telcos::kernels

#endif
