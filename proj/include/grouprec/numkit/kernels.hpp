#pragma once

// Inner-loop kernels. Every kernel has a scalar reference implementation and,
// where the CPU allows, a SIMD variant. The active table is picked once at
// first use and can be forced with GROUPREC_SIMD=scalar|avx2.
//
// Rounding contract between variants:
//   axpy_*, adam_update  bit-identical to the scalar reference
//   dot_*                reductions; equal up to summation order

#include <cstddef>
#include <string_view>

namespace grouprec::nk {

struct AdamCoeffs {
    float lr;
    float beta1;
    float beta2;
    float epsilon;
    float bias_correction1;  // 1 - beta1^t
    float bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
    std::string_view name;

    // sum_i a[i] * b[i], accumulated in double
    double (*dot_ff)(const float* a, const float* b, std::size_t n);
    double (*dot_fd)(const float* a, const double* b, std::size_t n);

    // y[i] += alpha * x[i]   (double accumulator, float source)
    void (*axpy_fd)(double* y, double alpha, const float* x, std::size_t n);
    // y[i] += float(alpha * x[i])   (float gradient buffers)
    void (*axpy_acc_f)(float* y, double alpha, const float* x, std::size_t n);
    void (*axpy_acc_d)(float* y, double alpha, const double* x, std::size_t n);

    void (*adam_update)(float* param, const float* grad, float* m, float* v, std::size_t n,
                        const AdamCoeffs& c);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_kernels() noexcept;

/// The dispatched table used by every module.
const KernelTable& kernels() noexcept;

/// Override the dispatched table (tests, benchmarking). Not thread-safe.
void set_kernels(const KernelTable& table) noexcept;

}  // namespace grouprec::nk
