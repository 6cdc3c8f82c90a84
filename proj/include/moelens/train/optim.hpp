#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "moelens/model/model.hpp"
#include "moelens/tensor.hpp"

namespace moelens {

struct TrainConfig {
    double lr_init = 3e-4;
    std::size_t total_steps = 500;
    std::size_t warmup_steps = 0;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double weight_decay = 0.1;
    double clip_norm = 1.0;
    std::size_t seq_len = 32;
    std::size_t batch_seqs = 1;  // sequences per macro step
    std::uint64_t seed = 0;

    void validate() const {
        if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
            throw std::invalid_argument("train config: betas must lie in (0,1)");
        if (lr_init < 0) throw std::invalid_argument("train config: lr_init < 0");
        if (clip_norm <= 0) throw std::invalid_argument("train config: clip_norm <= 0");
        if (warmup_steps >= total_steps && total_steps > 0)
            throw std::invalid_argument("train config: warmup_steps must be < total_steps");
        if (seq_len < 2) throw std::invalid_argument("train config: seq_len must be >= 2");
    }
};

// Linear warmup then cosine decay to 10% of the peak rate at the final step.
inline double cosine_lr(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.total_steps)
        throw std::out_of_range("cosine_lr: step beyond total_steps");
    if (step < cfg.warmup_steps)
        return cfg.lr_init * static_cast<double>(step + 1) /
               static_cast<double>(cfg.warmup_steps);
    const double lr_final = 0.1 * cfg.lr_init;
    const std::size_t span = cfg.total_steps - cfg.warmup_steps;
    if (span == 0) return cfg.lr_init;
    const double progress =
        static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span);
    return lr_final + 0.5 * (cfg.lr_init - lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

// Global-norm clipping over all parameter gradients; returns the pre-clip norm.
inline double clip_grad_norm(std::vector<ParamRef>& params, double clip_norm) {
    if (clip_norm <= 0) throw std::invalid_argument("clip_grad_norm: clip_norm <= 0");
    double sq = 0.0;
    for (const auto& p : params) {
        for (std::size_t i = 0; i < p.grad->size(); ++i) {
            const double g = (*p.grad)[i];
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in tensor '" + p.name + "'");
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& p : params)
            for (std::size_t i = 0; i < p.grad->size(); ++i) (*p.grad)[i] *= scale;
    }
    return norm;
}

struct OptimizerState {
    std::vector<Tensor> m, v;
    std::size_t t = 0;

    static OptimizerState init(const std::vector<ParamRef>& params) {
        OptimizerState s;
        for (const auto& p : params) {
            s.m.emplace_back(p.value->shape());
            s.v.emplace_back(p.value->shape());
        }
        return s;
    }
};

// AdamW with decoupled weight decay. Decay touches matrix weights only
// (ParamRef::decay), independent of the gradient path.
inline void adamw_step(std::vector<ParamRef>& params, OptimizerState& state, double lr,
                       const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        Tensor& m = state.m[pi];
        Tensor& v = state.v[pi];
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double g = (*p.grad)[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            double theta = (*p.value)[i];
            if (p.decay) theta -= lr * cfg.weight_decay * theta;
            theta -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
            if (!std::isfinite(theta))
                throw std::runtime_error("non-finite update in tensor '" + p.name + "'");
            (*p.value)[i] = theta;
        }
    }
}

}  // namespace moelens
