#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace moelens {

// Dense row-major real tensor. Double precision throughout; checkpoints
// narrow to float32 on disk.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        data_.assign(element_count(shape_), 0.0);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != element_count(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D access
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void zero() { fill(0.0); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// out[l x n] = x[l x m] * w[m x n]
inline void matmul(const Tensor& x, const Tensor& w, Tensor& out) {
    const std::size_t l = x.dim(0), m = x.dim(1), n = w.dim(1);
    for (std::size_t i = 0; i < l; ++i) {
        double* orow = out.data() + i * n;
        std::fill(orow, orow + n, 0.0);
        const double* xrow = x.data() + i * m;
        for (std::size_t k = 0; k < m; ++k) {
            const double xv = xrow[k];
            if (xv == 0.0) continue;
            const double* wrow = w.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += xv * wrow[j];
        }
    }
}

inline Tensor matmul(const Tensor& x, const Tensor& w) {
    Tensor out({x.dim(0), w.dim(1)});
    matmul(x, w, out);
    return out;
}

// Gradients of y = x*w given dy: dx += dy*w^T, dw += x^T*dy
inline void matmul_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                            Tensor& dx, Tensor& dw) {
    const std::size_t l = x.dim(0), m = x.dim(1), n = w.dim(1);
    for (std::size_t i = 0; i < l; ++i) {
        const double* dyrow = dy.data() + i * n;
        const double* xrow = x.data() + i * m;
        double* dxrow = dx.data() + i * m;
        for (std::size_t k = 0; k < m; ++k) {
            const double* wrow = w.data() + k * n;
            double* dwrow = dw.data() + k * n;
            double acc = 0.0;
            const double xv = xrow[k];
            for (std::size_t j = 0; j < n; ++j) {
                acc += dyrow[j] * wrow[j];
                dwrow[j] += xv * dyrow[j];
            }
            dxrow[k] += acc;
        }
    }
}

inline void fill_normal(Tensor& t, std::mt19937_64& rng, double std_dev) {
    std::normal_distribution<double> dist(0.0, std_dev);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

}  // namespace moelens
