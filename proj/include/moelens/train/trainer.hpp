#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "moelens/model/model.hpp"
#include "moelens/train/optim.hpp"

namespace moelens {

struct StepRecord {
    std::size_t step;
    double lr;
    double lm_loss;
    double aux_loss;
    double grad_norm;
};

struct TrainResult {
    std::vector<StepRecord> history;
    bool data_exhausted = false;
};

// Fixed-length non-overlapping windows over the token stream; the remainder
// is discarded. Consumption order is sequential and deterministic.
inline std::vector<std::vector<int>> make_windows(const std::vector<int>& stream,
                                                  std::size_t seq_len) {
    std::vector<std::vector<int>> windows;
    for (std::size_t pos = 0; pos + seq_len <= stream.size(); pos += seq_len)
        windows.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(pos),
                             stream.begin() + static_cast<std::ptrdiff_t>(pos + seq_len));
    return windows;
}

// One optimization pass: forward (lm + alpha*aux), backward, clip, AdamW with
// the cosine schedule. Windows are cycled so small corpora can train for many
// steps; a stream too short for a single batch stops cleanly.
inline TrainResult train(Model& model, const std::vector<int>& stream, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;
    auto windows = make_windows(stream, cfg.seq_len);
    if (windows.size() < cfg.batch_seqs) {
        result.data_exhausted = true;
        return result;
    }
    auto params = model.params();
    auto state = OptimizerState::init(params);
    std::size_t cursor = 0;
    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        model.zero_grads();
        double lm = 0.0, aux = 0.0;
        for (std::size_t b = 0; b < cfg.batch_seqs; ++b) {
            ForwardCache cache;
            auto out = model.forward(windows[cursor], cache);
            model.backward(cache);
            lm += out.lm_loss;
            aux += out.aux_loss;
            cursor = (cursor + 1) % windows.size();
        }
        const double inv_b = 1.0 / static_cast<double>(cfg.batch_seqs);
        lm *= inv_b;
        aux *= inv_b;
        for (auto& p : params)
            for (std::size_t i = 0; i < p.grad->size(); ++i) (*p.grad)[i] *= inv_b;
        const double gnorm = clip_grad_norm(params, cfg.clip_norm);
        const double lr = cosine_lr(step, cfg);
        adamw_step(params, state, lr, cfg);
        result.history.push_back({step, lr, lm, aux, gnorm});
    }
    return result;
}

inline void write_history(const std::vector<StepRecord>& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write loss history: " + path);
    out << "step,lr,lm_loss,aux_loss,grad_norm\n";
    char buf[256];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.lr, r.lm_loss,
                      r.aux_loss, r.grad_norm);
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace moelens
