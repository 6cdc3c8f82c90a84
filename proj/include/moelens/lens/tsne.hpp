#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "moelens/tensor.hpp"

namespace moelens::lens {

struct TsneConfig {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iters = 250;
    std::size_t momentum_switch_iter = 250;
    std::uint64_t seed = 0;
};

struct EmbeddingResult {
    Tensor coords;                   // n x 3
    std::vector<double> kl_history;  // true-P KL per iteration
    std::uint64_t seed = 0;
};

namespace detail {

inline Tensor pairwise_sq_dists(const Tensor& x) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor dist({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t m = 0; m < d; ++m) {
                const double diff = x.at(i, m) - x.at(j, m);
                s += diff * diff;
            }
            dist.at(i, j) = s;
            dist.at(j, i) = s;
        }
    return dist;
}

// Per-point precision found by bisection so the conditional distribution hits
// the target perplexity. Rows whose entropy cannot be matched (typically
// duplicate-heavy inputs) are reported back by index.
inline Tensor conditional_affinities(const Tensor& sqd, double perplexity,
                                     std::vector<std::size_t>& infeasible) {
    const std::size_t n = sqd.dim(0);
    const double target_entropy = std::log(perplexity);
    Tensor p({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
        double hdiff = 0.0;
        std::vector<double> row(n, 0.0);
        bool ok = false;
        for (int iter = 0; iter < 200; ++iter) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = (j == i) ? 0.0 : std::exp(-beta * sqd.at(i, j));
                sum += row[j];
            }
            if (sum <= 0.0) break;
            double entropy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (row[j] <= 0.0) continue;
                const double pj = row[j] / sum;
                entropy -= pj * std::log(pj);
            }
            hdiff = entropy - target_entropy;
            if (std::abs(hdiff) < 1e-7) {
                ok = true;
                break;
            }
            if (hdiff > 0) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta_lo + beta_hi);
            } else {
                beta_hi = beta;
                beta = (beta_lo == 0.0) ? beta / 2.0 : 0.5 * (beta_lo + beta_hi);
            }
        }
        if (!ok && std::abs(hdiff) > 1e-3) infeasible.push_back(i);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += row[j];
        if (sum <= 0.0) {
            infeasible.push_back(i);
            sum = 1.0;
        }
        for (std::size_t j = 0; j < n; ++j) p.at(i, j) = row[j] / sum;
    }
    std::sort(infeasible.begin(), infeasible.end());
    infeasible.erase(std::unique(infeasible.begin(), infeasible.end()), infeasible.end());
    return p;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenpairs sorted by
// descending eigenvalue.
inline void jacobi_eigen(Tensor a, std::vector<double>& eigvals, Tensor& eigvecs) {
    const std::size_t d = a.dim(0);
    eigvecs = Tensor({d, d});
    for (std::size_t i = 0; i < d; ++i) eigvecs.at(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                if (std::abs(a.at(p, q)) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = eigvecs.at(k, p), vkq = eigvecs.at(k, q);
                    eigvecs.at(k, p) = c * vkp - s * vkq;
                    eigvecs.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.resize(d);
    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) {
        eigvals[i] = a.at(i, i);
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return eigvals[x] > eigvals[y]; });
    std::vector<double> sorted_vals(d);
    Tensor sorted_vecs({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        sorted_vals[i] = eigvals[order[i]];
        for (std::size_t k = 0; k < d; ++k) sorted_vecs.at(k, i) = eigvecs.at(k, order[i]);
        // fix the sign so the init is deterministic regardless of rotation path
        double mx = 0.0;
        std::size_t mi = 0;
        for (std::size_t k = 0; k < d; ++k)
            if (std::abs(sorted_vecs.at(k, i)) > mx) {
                mx = std::abs(sorted_vecs.at(k, i));
                mi = k;
            }
        if (sorted_vecs.at(mi, i) < 0)
            for (std::size_t k = 0; k < d; ++k) sorted_vecs.at(k, i) = -sorted_vecs.at(k, i);
    }
    eigvals = std::move(sorted_vals);
    eigvecs = std::move(sorted_vecs);
}

// Projection onto the top-3 principal components, rescaled to std 1e-4.
inline Tensor pca_init(const Tensor& x, std::uint64_t seed) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
    for (auto& m : mean) m /= static_cast<double>(n);
    Tensor cov({d, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = x.at(i, a) - mean[a];
            for (std::size_t b = a; b < d; ++b)
                cov.at(a, b) += xa * (x.at(i, b) - mean[b]);
        }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < a; ++b) cov.at(a, b) = cov.at(b, a);
    std::vector<double> vals;
    Tensor vecs;
    jacobi_eigen(cov, vals, vecs);

    Tensor y({n, 3});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3 && c < d; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += (x.at(i, j) - mean[j]) * vecs.at(j, c);
            y.at(i, c) = acc;
        }
    double var = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) var += y[i] * y[i];
    var /= static_cast<double>(y.size());
    if (var > 0) {
        const double scale = 1e-4 / std::sqrt(var);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= scale;
    } else {
        // degenerate input: fall back to seeded gaussian noise
        std::mt19937_64 rng(seed);
        fill_normal(y, rng, 1e-4);
    }
    return y;
}

}  // namespace detail

// Symmetrized joint affinities: symmetric, zero diagonal, sums to one.
inline Tensor input_affinities(const Tensor& profiles, double perplexity) {
    const std::size_t n = profiles.dim(0);
    auto sqd = detail::pairwise_sq_dists(profiles);
    std::vector<std::size_t> infeasible;
    Tensor cond = detail::conditional_affinities(sqd, perplexity, infeasible);
    if (!infeasible.empty()) {
        std::string rows;
        for (auto i : infeasible) rows += (rows.empty() ? "" : ", ") + std::to_string(i);
        throw std::runtime_error("tsne_reduce: perplexity calibration infeasible for rows [" +
                                 rows + "] (duplicate-heavy input)");
    }
    Tensor p({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            p.at(i, j) = (cond.at(i, j) + cond.at(j, i)) / (2.0 * static_cast<double>(n));
    return p;
}

// Exact t-SNE to three dimensions: Gaussian input affinities calibrated by
// per-point bisection, Student-t output kernel, gradient descent with early
// exaggeration, momentum and adaptive gains. Single-threaded and fully
// deterministic for a given seed.
inline EmbeddingResult tsne_reduce(const Tensor& profiles, const TsneConfig& cfg) {
    const std::size_t n = profiles.dim(0);
    if (n < 4) throw std::invalid_argument("tsne_reduce: need at least 4 points");
    if (cfg.perplexity >= static_cast<double>(n - 1) / 3.0)
        throw std::invalid_argument("tsne_reduce: perplexity must be < (n-1)/3");
    if (cfg.perplexity <= 0) throw std::invalid_argument("tsne_reduce: perplexity must be > 0");

    Tensor p = input_affinities(profiles, cfg.perplexity);

    EmbeddingResult result;
    result.seed = cfg.seed;
    Tensor y = detail::pca_init(profiles, cfg.seed);
    Tensor vel({n, 3}), gains({n, 3}), grad({n, 3});
    gains.fill(1.0);

    const double lr = static_cast<double>(n) / 12.0;
    Tensor q_num({n, n});
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const double exag = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch_iter ? 0.5 : 0.8;

        double q_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < 3; ++c) {
                    const double diff = y.at(i, c) - y.at(j, c);
                    d2 += diff * diff;
                }
                const double num = 1.0 / (1.0 + d2);
                q_num.at(i, j) = num;
                q_num.at(j, i) = num;
                q_sum += 2.0 * num;
            }

        grad.zero();
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double pij = p.at(i, j);
                const double num = q_num.at(i, j);
                const double qij = std::max(num / q_sum, 1e-12);
                const double mult = (exag * pij - qij) * num;
                for (std::size_t c = 0; c < 3; ++c)
                    grad.at(i, c) += 4.0 * mult * (y.at(i, c) - y.at(j, c));
                if (pij > 0 && i < j) kl += 2.0 * pij * std::log(pij / qij);
            }
        result.kl_history.push_back(kl);

        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 3; ++c) {
                const bool same_sign = (grad.at(i, c) > 0) == (vel.at(i, c) > 0);
                double& g = gains.at(i, c);
                g = same_sign ? std::max(g * 0.8, 0.01) : g + 0.2;
                vel.at(i, c) = momentum * vel.at(i, c) - lr * g * grad.at(i, c);
                y.at(i, c) += vel.at(i, c);
            }
        // re-center
        for (std::size_t c = 0; c < 3; ++c) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += y.at(i, c);
            m /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y.at(i, c) -= m;
        }
    }
    result.coords = std::move(y);
    if (!result.coords.all_finite())
        throw std::runtime_error("tsne_reduce: embedding diverged to non-finite coordinates");
    return result;
}

}  // namespace moelens::lens
