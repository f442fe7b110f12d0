#include "grouprec/numkit/kernels.hpp"

#include <cmath>

namespace grouprec::nk {
namespace {

double dot_ff(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

double dot_fd(const float* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

void axpy_fd(double* y, double alpha, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

void axpy_acc_f(float* y, double alpha, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += static_cast<float>(alpha * static_cast<double>(x[i]));
}

void axpy_acc_d(float* y, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += static_cast<float>(alpha * x[i]);
}

void adam_update(float* param, const float* grad, float* m, float* v, std::size_t n, const AdamCoeffs& c) {
    const float one_minus_b1 = 1.0f - c.beta1;
    const float one_minus_b2 = 1.0f - c.beta2;
    for (std::size_t i = 0; i < n; ++i) {
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

constexpr KernelTable kScalar{"scalar", dot_ff, dot_fd, axpy_fd, axpy_acc_f, axpy_acc_d, adam_update};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

}  // namespace grouprec::nk
