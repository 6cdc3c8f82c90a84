#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "moelens/model/ops.hpp"

using namespace moelens;

TEST_CASE("rmsnorm maps a constant row to the gain") {
    Tensor x({1, 8});
    x.fill(3.0);
    Tensor gain({8});
    gain.fill(1.0);
    auto y = rmsnorm(x, gain, 1e-5);
    for (std::size_t j = 0; j < 8; ++j) CHECK(y[j] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("rmsnorm maps the zero row to zero") {
    Tensor x({1, 8});
    Tensor gain({8});
    gain.fill(1.0);
    auto y = rmsnorm(x, gain, 1e-5);
    for (std::size_t j = 0; j < 8; ++j) CHECK(y[j] == 0.0);
}

TEST_CASE("rmsnorm matches the scalar formula") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 2.0);
    const std::size_t d = 16;
    Tensor x({3, d}), gain({d});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = nd(rng);
    for (std::size_t i = 0; i < d; ++i) gain[i] = nd(rng);
    const double eps = 1e-5;
    auto y = rmsnorm(x, gain, eps);
    for (std::size_t r = 0; r < 3; ++r) {
        double ms = 0;
        for (std::size_t j = 0; j < d; ++j) ms += x.at(r, j) * x.at(r, j);
        ms /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double want = x.at(r, j) / std::sqrt(ms + eps) * gain[j];
            CHECK(std::abs(y.at(r, j) - want) <= 1e-12);
        }
    }
}

TEST_CASE("rotation at position zero is the identity") {
    std::mt19937_64 rng(2);
    Tensor q({1, 1 * 8});
    fill_normal(q, rng, 1.0);
    Tensor orig = q;
    rope_apply(q, {0}, 1, 8, 10000.0);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(q[i] == orig[i]);
}

TEST_CASE("rotation preserves per-pair norms") {
    std::mt19937_64 rng(3);
    Tensor q({4, 2 * 8});
    fill_normal(q, rng, 1.0);
    Tensor orig = q;
    rope_apply(q, {0, 1, 5, 64}, 2, 8, 10000.0);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t j = 0; j < 4; ++j) {
                const std::size_t base = (t * 2 + h) * 8 + 2 * j;
                const double n0 = orig[base] * orig[base] + orig[base + 1] * orig[base + 1];
                const double n1 = q[base] * q[base] + q[base + 1] * q[base + 1];
                CHECK(std::abs(n0 - n1) <= 1e-12);
            }
}

TEST_CASE("attention scores depend only on relative position") {
    std::mt19937_64 rng(4);
    const std::size_t hd = 8;
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> qv(hd), kv(hd);
    for (auto& v : qv) v = nd(rng);
    for (auto& v : kv) v = nd(rng);

    auto score_at = [&](std::size_t pq, std::size_t pk) {
        Tensor q({1, hd}), k({1, hd});
        std::copy(qv.begin(), qv.end(), q.data());
        std::copy(kv.begin(), kv.end(), k.data());
        rope_apply(q, {pq}, 1, hd, 10000.0);
        rope_apply(k, {pk}, 1, hd, 10000.0);
        double dot = 0;
        for (std::size_t j = 0; j < hd; ++j) dot += q[j] * k[j];
        return dot;
    };

    const double base = score_at(7, 3);
    for (std::size_t shift : {1u, 5u, 64u})
        CHECK(std::abs(score_at(7 + shift, 3 + shift) - base) <= 1e-6);
}

TEST_CASE("inverse rotation undoes the forward rotation") {
    std::mt19937_64 rng(5);
    Tensor q({3, 2 * 6});
    fill_normal(q, rng, 1.0);
    Tensor orig = q;
    rope_apply(q, {0, 10, 100}, 2, 6, 10000.0);
    rope_apply(q, {0, 10, 100}, 2, 6, 10000.0, /*inverse=*/true);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(q[i] - orig[i]) <= 1e-12);
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd(0.0, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> row(7);
        for (auto& v : row) v = nd(rng);
        softmax_row(row.data(), row.size());
        double sum = 0;
        for (double v : row) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}
