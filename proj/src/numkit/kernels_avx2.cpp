// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "grouprec/numkit/kernels.hpp"

#include <cmath>

#if defined(__x86_64__) && defined(__AVX2__)
#include <immintrin.h>

namespace grouprec::nk {
namespace {

double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_ff(const float* a, const float* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 va = _mm256_loadu_ps(a + i);
        const __m256 vb = _mm256_loadu_ps(b + i);
        // float*float is exact in double, so fmadd rounds like mul+add here
        acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(va)),
                               _mm256_cvtps_pd(_mm256_castps256_ps128(vb)), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(va, 1)),
                               _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1)), acc1);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

double dot_fd(const float* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(va, _mm256_loadu_pd(b + i)));
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += static_cast<double>(a[i]) * b[i];
    return r;
}

void axpy_fd(double* y, double alpha, const float* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vx = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(va, vx)));
    }
    for (; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

void axpy_acc_f(float* y, double alpha, const float* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_cvtps_pd(_mm_loadu_ps(x + i)));
        _mm_storeu_ps(y + i, _mm_add_ps(_mm_loadu_ps(y + i), _mm256_cvtpd_ps(prod)));
    }
    for (; i < n; ++i) y[i] += static_cast<float>(alpha * static_cast<double>(x[i]));
}

void axpy_acc_d(float* y, double alpha, const double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm_storeu_ps(y + i, _mm_add_ps(_mm_loadu_ps(y + i), _mm256_cvtpd_ps(prod)));
    }
    for (; i < n; ++i) y[i] += static_cast<float>(alpha * x[i]);
}

void adam_update(float* param, const float* grad, float* m, float* v, std::size_t n, const AdamCoeffs& c) {
    const __m256 b1 = _mm256_set1_ps(c.beta1);
    const __m256 b2 = _mm256_set1_ps(c.beta2);
    const __m256 omb1 = _mm256_set1_ps(1.0f - c.beta1);
    const __m256 omb2 = _mm256_set1_ps(1.0f - c.beta2);
    const __m256 bc1 = _mm256_set1_ps(c.bias_correction1);
    const __m256 bc2 = _mm256_set1_ps(c.bias_correction2);
    const __m256 lr = _mm256_set1_ps(c.lr);
    const __m256 eps = _mm256_set1_ps(c.epsilon);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 g = _mm256_loadu_ps(grad + i);
        const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(omb1, g));
        const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                        _mm256_mul_ps(omb2, _mm256_mul_ps(g, g)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        const __m256 m_hat = _mm256_div_ps(mi, bc1);
        const __m256 v_hat = _mm256_div_ps(vi, bc2);
        const __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, m_hat), _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps));
        _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), step));
    }
    const float one_minus_b1 = 1.0f - c.beta1;
    const float one_minus_b2 = 1.0f - c.beta2;
    for (; i < n; ++i) {
        const float g = grad[i];
        const float mi = c.beta1 * m[i] + one_minus_b1 * g;
        const float vi = c.beta2 * v[i] + one_minus_b2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        const float m_hat = mi / c.bias_correction1;
        const float v_hat = vi / c.bias_correction2;
        param[i] = param[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

constexpr KernelTable kAvx2{"avx2", dot_ff, dot_fd, axpy_fd, axpy_acc_f, axpy_acc_d, adam_update};

}  // namespace

const KernelTable* avx2_kernels() noexcept {
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &kAvx2 : nullptr;
}

}  // namespace grouprec::nk

#else

namespace grouprec::nk {
const KernelTable* avx2_kernels() noexcept { return nullptr; }
}  // namespace grouprec::nk

#endif
