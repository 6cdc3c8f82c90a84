#pragma once

#include <cmath>
#include <vector>

#include "moelens/tensor.hpp"

namespace moelens {

inline void softmax_row(double* x, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    for (std::size_t i = 0; i < n; ++i) x[i] /= sum;
}

// dx = (dy - dot(dy, p)) * p for p = softmax(x)
inline void softmax_backward_row(const double* p, const double* dy, double* dx, std::size_t n) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += dy[i] * p[i];
    for (std::size_t i = 0; i < n; ++i) dx[i] += (dy[i] - dot) * p[i];
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// --- RMSNorm ---------------------------------------------------------------

// y[i,:] = x[i,:] / sqrt(mean(x[i,:]^2) + eps) * gain; returns per-row inverse
// scale for the backward pass.
inline std::vector<double> rmsnorm(const Tensor& x, const Tensor& gain, double eps, Tensor& y) {
    const std::size_t l = x.dim(0), d = x.dim(1);
    std::vector<double> inv(l);
    for (std::size_t i = 0; i < l; ++i) {
        const double* xr = x.data() + i * d;
        double ms = 0.0;
        for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
        ms = ms / static_cast<double>(d) + eps;
        const double s = 1.0 / std::sqrt(ms);
        inv[i] = s;
        double* yr = y.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] * s * gain[j];
    }
    return inv;
}

inline Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
    Tensor y(x.shape());
    rmsnorm(x, gain, eps, y);
    return y;
}

inline void rmsnorm_backward(const Tensor& x, const Tensor& gain, const std::vector<double>& inv,
                             const Tensor& dy, Tensor& dx, Tensor& dgain) {
    const std::size_t l = x.dim(0), d = x.dim(1);
    for (std::size_t i = 0; i < l; ++i) {
        const double* xr = x.data() + i * d;
        const double* dyr = dy.data() + i * d;
        double* dxr = dx.data() + i * d;
        const double s = inv[i];
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dgain[j] += dyr[j] * xr[j] * s;
            dot += dyr[j] * gain[j] * xr[j];
        }
        const double coef = dot * s * s * s / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) dxr[j] += dyr[j] * gain[j] * s - coef * xr[j];
    }
}

// --- Rotary position embedding ---------------------------------------------

// In-place rotation of q or k laid out as [l][n_heads][head_dim].
inline void rope_apply(Tensor& t, const std::vector<std::size_t>& positions,
                       std::size_t n_heads, std::size_t head_dim, double base,
                       bool inverse = false) {
    const std::size_t l = t.dim(0);
    const std::size_t half = head_dim / 2;
    for (std::size_t i = 0; i < l; ++i) {
        const double p = static_cast<double>(positions[i]);
        for (std::size_t h = 0; h < n_heads; ++h) {
            double* v = t.data() + (i * n_heads + h) * head_dim;
            for (std::size_t j = 0; j < half; ++j) {
                const double theta =
                    std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(head_dim));
                double ang = p * theta;
                if (inverse) ang = -ang;
                const double c = std::cos(ang), s = std::sin(ang);
                const double a = v[2 * j], b = v[2 * j + 1];
                v[2 * j] = a * c - b * s;
                v[2 * j + 1] = a * s + b * c;
            }
        }
    }
}

}  // namespace moelens
