#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "moelens/model/ops.hpp"
#include "moelens/tensor.hpp"

namespace moelens {

struct RouterDecision {
    Tensor gate_logits;  // l x e
    Tensor gate_probs;   // l x e, full softmax per token
    std::size_t topk = 0;
    std::size_t capacity = 0;
    std::vector<std::vector<std::size_t>> selected;  // per token, k expert indices
    std::vector<std::vector<double>> combine_weights;
    std::vector<std::vector<bool>> dropped;

    std::size_t seq_len() const { return gate_logits.dim(0); }
    std::size_t num_experts() const { return gate_logits.dim(1); }
};

inline std::size_t expert_capacity(double c, std::size_t l, std::size_t k, std::size_t e) {
    return static_cast<std::size_t>(
        std::ceil(c * static_cast<double>(l) * static_cast<double>(k) / static_cast<double>(e)));
}

// Top-k gating with softmax combine weights over the selected logits and
// position-priority capacity dropping. Ties break toward the lower expert
// index.
inline RouterDecision route(const Tensor& h, const Tensor& w_gate, std::size_t k, double c) {
    const std::size_t l = h.dim(0);
    const std::size_t e = w_gate.dim(1);
    RouterDecision d;
    d.topk = k;
    d.gate_logits = matmul(h, w_gate);
    d.gate_probs = d.gate_logits;
    for (std::size_t t = 0; t < l; ++t) softmax_row(d.gate_probs.data() + t * e, e);
    d.capacity = expert_capacity(c, l, k, e);
    d.selected.resize(l);
    d.combine_weights.resize(l);
    d.dropped.resize(l);

    std::vector<std::size_t> order(e);
    std::vector<std::size_t> load(e, 0);
    for (std::size_t t = 0; t < l; ++t) {
        const double* logits = d.gate_logits.data() + t * e;
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return logits[a] > logits[b];
        });
        auto& sel = d.selected[t];
        sel.assign(order.begin(), order.begin() + k);
        auto& w = d.combine_weights[t];
        w.resize(k);
        for (std::size_t s = 0; s < k; ++s) w[s] = logits[sel[s]];
        softmax_row(w.data(), k);
        auto& drop = d.dropped[t];
        drop.assign(k, false);
        for (std::size_t s = 0; s < k; ++s) {
            if (load[sel[s]] >= d.capacity)
                drop[s] = true;
            else
                ++load[sel[s]];
        }
    }
    return d;
}

// Pre-drop routing fractions f_j: assignments to expert j over l*k.
inline std::vector<double> routing_fractions(const RouterDecision& d) {
    const std::size_t e = d.num_experts();
    std::vector<double> f(e, 0.0);
    for (const auto& sel : d.selected)
        for (auto j : sel) f[j] += 1.0;
    const double total = static_cast<double>(d.seq_len()) * static_cast<double>(d.topk);
    for (auto& v : f) v /= total;
    return f;
}

// Load-balancing loss e * sum_j f_j * P_j; equals 1 at perfectly uniform
// routing and approaches e when everything lands on one expert.
inline double aux_loss(const RouterDecision& d) {
    const std::size_t l = d.seq_len(), e = d.num_experts();
    auto f = routing_fractions(d);
    double acc = 0.0;
    for (std::size_t j = 0; j < e; ++j) {
        double pj = 0.0;
        for (std::size_t t = 0; t < l; ++t) pj += d.gate_probs.at(t, j);
        acc += f[j] * pj / static_cast<double>(l);
    }
    return static_cast<double>(e) * acc;
}

// d(scale * aux_loss)/d(gate_logits), accumulated into dlogits. The discrete
// assignment fractions f are treated as constants; the gradient flows through
// the mean softmax probabilities only.
inline void aux_loss_backward(const RouterDecision& d, double scale, Tensor& dlogits) {
    const std::size_t l = d.seq_len(), e = d.num_experts();
    auto f = routing_fractions(d);
    std::vector<double> dprob(e);
    const double coef = scale * static_cast<double>(e) / static_cast<double>(l);
    for (std::size_t j = 0; j < e; ++j) dprob[j] = coef * f[j];
    for (std::size_t t = 0; t < l; ++t)
        softmax_backward_row(d.gate_probs.data() + t * e, dprob.data(),
                             dlogits.data() + t * e, e);
}

}  // namespace moelens
