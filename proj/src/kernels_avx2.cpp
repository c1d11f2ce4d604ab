// AVX2/FMA variants of the inner-loop kernels. This translation unit is the
// only one compiled with -mavx2 -mfma; nothing here runs unless the dispatcher
// confirmed host support at startup.

#include "telcos/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace telcos::kernels {
namespace avx2 {

void fill(double* dst, double v, std::size_t n) {
    const __m256d vv = _mm256_set1_pd(v);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(dst + i, vv);
    for (; i < n; ++i) dst[i] = v;
}

void add(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale(double* dst, const double* a, double s, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
    for (; i < n; ++i) dst[i] = a[i] * s;
}

void axpy(double* y, const double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

// Even-index gather: x[0], x[2], x[4], ...
static inline __m256d load_even(const double* x) {
    __m256d lo = _mm256_loadu_pd(x);       // x0 x1 x2 x3
    __m256d hi = _mm256_loadu_pd(x + 4);   // x4 x5 x6 x7
    __m256d evens = _mm256_unpacklo_pd(lo, hi);        // x0 x4 x2 x6
    return _mm256_permute4x64_pd(evens, 0b11011000);   // x0 x2 x4 x6
}

void axpy_g2(double* y, const double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    // load_even reads one double past x[2*i+6]; the contract only guarantees
    // x[2*(n-1)], so the last block must go through the scalar tail.
    for (; i + 5 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, load_even(x + 2 * i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[2 * i];
}

void axpy_s2(double* y, const double* x, double a, std::size_t n) {
    // Scatter store; kept scalar in every backend.
    for (std::size_t i = 0; i < n; ++i) y[2 * i] += a * x[i];
}

static inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double dot_g2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 5 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), load_even(b + 2 * i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[2 * i];
    return s;
}

double sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

void relu(double* dst, const double* x, std::size_t n) {
    const __m256d z = _mm256_setzero_pd();
    std::size_t i = 0;
    // max(x, 0) returns the second operand when x is not greater, matching
    // the scalar (x > 0 ? x : 0) including -0.0 and NaN handling.
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
    for (; i < n; ++i) dst[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(double* dx, const double* x, const double* g, std::size_t n) {
    const __m256d z = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
        __m256d vg = _mm256_and_pd(_mm256_loadu_pd(g + i), mask);
        _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), vg));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) dx[i] += g[i];
}

void minmax(const double* x, std::size_t n, double* mn, double* mx) {
    double lo = x[0], hi = x[0];
    std::size_t i = 0;
    if (n >= 4) {
        __m256d vlo = _mm256_loadu_pd(x);
        __m256d vhi = vlo;
        for (i = 4; i + 4 <= n; i += 4) {
            __m256d v = _mm256_loadu_pd(x + i);
            vlo = _mm256_min_pd(vlo, v);
            vhi = _mm256_max_pd(vhi, v);
        }
        alignas(32) double tmp[4];
        _mm256_store_pd(tmp, vlo);
        lo = tmp[0];
        for (int j = 1; j < 4; ++j) lo = tmp[j] < lo ? tmp[j] : lo;
        _mm256_store_pd(tmp, vhi);
        hi = tmp[0];
        for (int j = 1; j < 4; ++j) hi = tmp[j] > hi ? tmp[j] : hi;
    }
    for (; i < n; ++i) {
        if (x[i] < lo) lo = x[i];
        if (x[i] > hi) hi = x[i];
    }
    *mn = lo;
    *mx = hi;
}

}  // namespace avx2

const KernelTable* avx2_table() {
    static const KernelTable t = {
        avx2::fill, avx2::add,    avx2::sub, avx2::mul,    avx2::scale,
        avx2::axpy, avx2::axpy_g2, avx2::axpy_s2, avx2::dot, avx2::dot_g2,
        avx2::sum,  avx2::relu,   avx2::relu_bwd, avx2::minmax,
    };
    return &t;
}

}  // namespace telcos::kernels

#else

namespace telcos::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace telcos::kernels

#endif
