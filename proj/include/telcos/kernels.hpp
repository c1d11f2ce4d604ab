#pragma once

#include <cstddef>
#include <string_view>

namespace telcos::kernels {

// Data-parallel primitives behind the tensor ops. Scalar reference
// implementations always exist; the AVX2/NEON variants are picked once at
// startup from what the host actually supports. Reductions (dot/sum) and
// fused multiply-adds may differ from the scalar path in the last bits
// because of vector re-association; elementwise ops match bit for bit.
struct KernelTable {
    void (*fill)(double* dst, double v, std::size_t n);
    void (*add)(double* dst, const double* a, const double* b, std::size_t n);
    void (*sub)(double* dst, const double* a, const double* b, std::size_t n);
    void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
    void (*scale)(double* dst, const double* a, double s, std::size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double* y, const double* x, double a, std::size_t n);
    // y[i] += a * x[2*i]   (stride-2 gather, used by stride-2 convolutions)
    void (*axpy_g2)(double* y, const double* x, double a, std::size_t n);
    // y[2*i] += a * x[i]   (stride-2 scatter, conv input gradients)
    void (*axpy_s2)(double* y, const double* x, double a, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    // sum_i a[i] * b[2*i]
    double (*dot_g2)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    void (*relu)(double* dst, const double* x, std::size_t n);
    // dx[i] += g[i] where x[i] > 0
    void (*relu_bwd)(double* dx, const double* x, const double* g, std::size_t n);
    void (*minmax)(const double* x, std::size_t n, double* mn, double* mx);
};

// Backend selected at startup. TELCOS_FORCE_SCALAR=1 forces the reference path.
const KernelTable& active();

// Reference implementations, for equivalence tests.
const KernelTable& scalar();

std::string_view backend_name();

}  // namespace telcos::kernels
