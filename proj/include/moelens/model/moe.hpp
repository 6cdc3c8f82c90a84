#pragma once

#include <vector>

#include "moelens/model/ops.hpp"
#include "moelens/model/router.hpp"
#include "moelens/tensor.hpp"

namespace moelens {

struct ExpertWeights {
    Tensor w1, w3, w2;  // gate proj d x f, up proj d x f, down proj f x d
    Tensor dw1, dw3, dw2;
};

struct MoeCache {
    Tensor slot_pre, slot_up, slot_out;  // per (token, slot) expert activations
    Tensor out;                          // l x d combined output
};

// Sparse dispatch: each token is processed by its non-dropped selected experts
// only, outputs mixed by the combine weights. A fully dropped token yields a
// zero contribution.
inline void moe_forward(const Tensor& x, const RouterDecision& decision,
                        const std::vector<ExpertWeights>& experts, MoeCache& C) {
    const std::size_t l = x.dim(0), d = x.dim(1);
    const std::size_t f = experts.front().w1.dim(1);
    const std::size_t k = decision.topk;
    C.slot_pre = Tensor({l * k, f});
    C.slot_up = Tensor({l * k, f});
    C.slot_out = Tensor({l * k, d});
    C.out = Tensor({l, d});
    for (std::size_t t = 0; t < l; ++t) {
        const double* xr = x.data() + t * d;
        double* yout = C.out.data() + t * d;
        for (std::size_t s = 0; s < k; ++s) {
            if (decision.dropped[t][s]) continue;
            const auto& ex = experts[decision.selected[t][s]];
            double* pre = C.slot_pre.data() + (t * k + s) * f;
            double* up = C.slot_up.data() + (t * k + s) * f;
            double* eout = C.slot_out.data() + (t * k + s) * d;
            for (std::size_t j = 0; j < f; ++j) {
                double a = 0.0, b = 0.0;
                for (std::size_t m = 0; m < d; ++m) {
                    a += xr[m] * ex.w1.at(m, j);
                    b += xr[m] * ex.w3.at(m, j);
                }
                pre[j] = a;
                up[j] = b;
            }
            for (std::size_t m = 0; m < d; ++m) {
                double acc = 0.0;
                for (std::size_t j = 0; j < f; ++j) acc += silu(pre[j]) * up[j] * ex.w2.at(j, m);
                eout[m] = acc;
            }
            const double w = decision.combine_weights[t][s];
            for (std::size_t m = 0; m < d; ++m) yout[m] += w * eout[m];
        }
    }
}

inline void moe_backward(const Tensor& x, const RouterDecision& decision,
                         std::vector<ExpertWeights>& experts, const MoeCache& C,
                         const Tensor& dout, Tensor& dx) {
    const std::size_t l = x.dim(0), d = x.dim(1);
    const std::size_t f = experts.front().w1.dim(1);
    const std::size_t k = decision.topk;
    for (std::size_t t = 0; t < l; ++t) {
        const double* xr = x.data() + t * d;
        const double* dy = dout.data() + t * d;
        double* dxr = dx.data() + t * d;
        for (std::size_t s = 0; s < k; ++s) {
            if (decision.dropped[t][s]) continue;
            auto& ex = experts[decision.selected[t][s]];
            const double w = decision.combine_weights[t][s];
            const double* pre = C.slot_pre.data() + (t * k + s) * f;
            const double* up = C.slot_up.data() + (t * k + s) * f;
            for (std::size_t j = 0; j < f; ++j) {
                const double act = silu(pre[j]) * up[j];
                double dact = 0.0;
                for (std::size_t m = 0; m < d; ++m) {
                    const double g = w * dy[m];
                    ex.dw2.at(j, m) += act * g;
                    dact += g * ex.w2.at(j, m);
                }
                const double dpre = dact * up[j] * silu_grad(pre[j]);
                const double dup = dact * silu(pre[j]);
                for (std::size_t m = 0; m < d; ++m) {
                    ex.dw1.at(m, j) += xr[m] * dpre;
                    ex.dw3.at(m, j) += xr[m] * dup;
                    dxr[m] += dpre * ex.w1.at(m, j) + dup * ex.w3.at(m, j);
                }
            }
        }
    }
}

// Gradient of the combine-weight softmax, scattered back onto the gate logits
// at the selected expert indices. Dropped slots receive zero upstream.
inline void moe_combine_backward(const RouterDecision& decision, const MoeCache& C,
                                 const Tensor& dout, Tensor& dgate) {
    const std::size_t l = dout.dim(0), d = dout.dim(1);
    const std::size_t k = decision.topk, e = decision.num_experts();
    for (std::size_t t = 0; t < l; ++t) {
        const double* dy = dout.data() + t * d;
        std::vector<double> dcombine(k, 0.0);
        for (std::size_t s = 0; s < k; ++s) {
            if (decision.dropped[t][s]) continue;
            const double* eout = C.slot_out.data() + (t * k + s) * d;
            double acc = 0.0;
            for (std::size_t m = 0; m < d; ++m) acc += dy[m] * eout[m];
            dcombine[s] = acc;
        }
        std::vector<double> dsel(k, 0.0);
        softmax_backward_row(decision.combine_weights[t].data(), dcombine.data(), dsel.data(), k);
        for (std::size_t s = 0; s < k; ++s)
            dgate[t * e + decision.selected[t][s]] += dsel[s];
    }
}

}  // namespace moelens
