#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "moelens/model/config.hpp"
#include "moelens/model/moe.hpp"
#include "moelens/model/ops.hpp"
#include "moelens/model/router.hpp"
#include "moelens/tensor.hpp"

namespace moelens {

struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
    bool decay;  // weight decay applies to matrices only, not gains/embeddings
};

struct ForwardOutput {
    double lm_loss = 0.0;
    double aux_loss = 0.0;
    double total_loss = 0.0;
};

struct LayerCache {
    Tensor x_in, x_norm;
    std::vector<double> attn_norm_inv;
    Tensor q, k, v;        // l x d, q/k post-rotation
    Tensor attn_probs;     // n_heads x l x l, causal
    Tensor attn_concat;    // l x d, pre output projection
    Tensor attn_proj;      // l x d, after output projection
    Tensor h;              // after attention residual
    std::vector<double> ffn_norm_inv;
    Tensor h_norm;
    RouterDecision decision;
    MoeCache moe;
    Tensor x_out;
};

struct ForwardCache {
    std::vector<int> tokens;
    Tensor emb;
    std::vector<LayerCache> layers;
    std::vector<double> final_norm_inv;
    Tensor final_norm_out;
    Tensor logits;      // l x vocab
    Tensor next_probs;  // softmax of logits, for the loss backward
};

struct LayerWeights {
    Tensor attn_norm, wq, wk, wv, wo;
    Tensor ffn_norm, w_gate;
    std::vector<ExpertWeights> experts;
    Tensor dattn_norm, dwq, dwk, dwv, dwo, dffn_norm, dw_gate;
};

class Model {
public:
    explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const auto d = cfg_.dim, f = cfg_.ffn_hidden_dim, v = cfg_.vocab_size,
                   e = cfg_.num_experts;
        tok_embed_ = Tensor({v, d});
        dtok_embed_ = Tensor({v, d});
        layers_.resize(cfg_.n_layers);
        for (auto& L : layers_) {
            L.attn_norm = Tensor({d});
            L.wq = Tensor({d, d});
            L.wk = Tensor({d, d});
            L.wv = Tensor({d, d});
            L.wo = Tensor({d, d});
            L.ffn_norm = Tensor({d});
            L.w_gate = Tensor({d, e});
            L.experts.resize(e);
            for (auto& ex : L.experts) {
                ex.w1 = Tensor({d, f});
                ex.w3 = Tensor({d, f});
                ex.w2 = Tensor({f, d});
                ex.dw1 = Tensor({d, f});
                ex.dw3 = Tensor({d, f});
                ex.dw2 = Tensor({f, d});
            }
            L.dattn_norm = Tensor({d});
            L.dwq = Tensor({d, d});
            L.dwk = Tensor({d, d});
            L.dwv = Tensor({d, d});
            L.dwo = Tensor({d, d});
            L.dffn_norm = Tensor({d});
            L.dw_gate = Tensor({d, e});
        }
        final_norm_ = Tensor({d});
        dfinal_norm_ = Tensor({d});
        out_head_ = Tensor({d, v});
        dout_head_ = Tensor({d, v});
        for (auto& L : layers_) {
            L.attn_norm.fill(1.0);
            L.ffn_norm.fill(1.0);
        }
        final_norm_.fill(1.0);
    }

    const ModelConfig& config() const { return cfg_; }

    // Scaled-normal init: std 0.02, output projections shrunk by 1/sqrt(2N).
    void init_weights(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const double std0 = 0.02;
        const double resid = std0 / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers));
        fill_normal(tok_embed_, rng, std0);
        for (auto& L : layers_) {
            fill_normal(L.wq, rng, std0);
            fill_normal(L.wk, rng, std0);
            fill_normal(L.wv, rng, std0);
            fill_normal(L.wo, rng, resid);
            fill_normal(L.w_gate, rng, std0);
            for (auto& ex : L.experts) {
                fill_normal(ex.w1, rng, std0);
                fill_normal(ex.w3, rng, std0);
                fill_normal(ex.w2, rng, resid);
            }
        }
        fill_normal(out_head_, rng, std0);
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        out.push_back({"tok_embed", &tok_embed_, &dtok_embed_, false});
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto& L = layers_[i];
            const std::string p = "layer" + std::to_string(i) + ".";
            out.push_back({p + "attn_norm", &L.attn_norm, &L.dattn_norm, false});
            out.push_back({p + "wq", &L.wq, &L.dwq, true});
            out.push_back({p + "wk", &L.wk, &L.dwk, true});
            out.push_back({p + "wv", &L.wv, &L.dwv, true});
            out.push_back({p + "wo", &L.wo, &L.dwo, true});
            out.push_back({p + "ffn_norm", &L.ffn_norm, &L.dffn_norm, false});
            out.push_back({p + "w_gate", &L.w_gate, &L.dw_gate, true});
            for (std::size_t j = 0; j < L.experts.size(); ++j) {
                auto& ex = L.experts[j];
                const std::string q = p + "expert" + std::to_string(j) + ".";
                out.push_back({q + "w1", &ex.w1, &ex.dw1, true});
                out.push_back({q + "w3", &ex.w3, &ex.dw3, true});
                out.push_back({q + "w2", &ex.w2, &ex.dw2, true});
            }
        }
        out.push_back({"final_norm", &final_norm_, &dfinal_norm_, false});
        out.push_back({"out_head", &out_head_, &dout_head_, true});
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->zero();
    }

    ForwardOutput forward(const std::vector<int>& tokens, ForwardCache& cache) const {
        const std::size_t l = tokens.size();
        if (l == 0) throw std::invalid_argument("forward: empty token sequence");
        if (l > cfg_.context_len)
            throw std::invalid_argument("forward: sequence length " + std::to_string(l) +
                                        " exceeds context_len " +
                                        std::to_string(cfg_.context_len));
        const auto d = cfg_.dim, v = cfg_.vocab_size;
        cache.tokens = tokens;
        cache.emb = Tensor({l, d});
        for (std::size_t t = 0; t < l; ++t) {
            if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= v)
                throw std::invalid_argument("forward: token id out of range");
            const double* row = tok_embed_.data() + static_cast<std::size_t>(tokens[t]) * d;
            std::copy(row, row + d, cache.emb.data() + t * d);
        }

        cache.layers.assign(cfg_.n_layers, {});
        const Tensor* x = &cache.emb;
        double aux_sum = 0.0;
        for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
            auto& C = cache.layers[i];
            const auto& L = layers_[i];
            C.x_in = *x;
            C.x_norm = Tensor({l, d});
            C.attn_norm_inv = rmsnorm(C.x_in, L.attn_norm, cfg_.rms_eps, C.x_norm);
            attention_forward(C, L);
            C.h = Tensor({l, d});
            for (std::size_t n = 0; n < l * d; ++n) C.h[n] = C.x_in[n] + C.attn_proj[n];
            C.h_norm = Tensor({l, d});
            C.ffn_norm_inv = rmsnorm(C.h, L.ffn_norm, cfg_.rms_eps, C.h_norm);
            C.decision = route(C.h_norm, L.w_gate, cfg_.topk_experts, cfg_.capacity_factor);
            aux_sum += aux_loss(C.decision);
            moe_forward(C.h_norm, C.decision, L.experts, C.moe);
            C.x_out = Tensor({l, d});
            for (std::size_t n = 0; n < l * d; ++n) C.x_out[n] = C.h[n] + C.moe.out[n];
            x = &C.x_out;
        }

        cache.final_norm_out = Tensor({l, d});
        cache.final_norm_inv = rmsnorm(*x, final_norm_, cfg_.rms_eps, cache.final_norm_out);
        cache.logits = matmul(cache.final_norm_out, out_head_);

        ForwardOutput out;
        out.aux_loss = aux_sum / static_cast<double>(cfg_.n_layers);
        if (l >= 2) {
            cache.next_probs = cache.logits;
            double ce = 0.0;
            for (std::size_t t = 0; t < l; ++t) {
                double* row = cache.next_probs.data() + t * v;
                softmax_row(row, v);
                if (t + 1 < l) ce += -std::log(std::max(row[tokens[t + 1]], 1e-300));
            }
            out.lm_loss = ce / static_cast<double>(l - 1);
        }
        out.total_loss = out.lm_loss + cfg_.aux_loss_factor * out.aux_loss;
        return out;
    }

    // Reverse-mode gradients of lm_loss + alpha * aux_loss, accumulated into
    // the grad tensors. Top-k selection is treated as constant.
    void backward(const ForwardCache& cache) {
        const std::size_t l = cache.tokens.size();
        const auto d = cfg_.dim, v = cfg_.vocab_size;
        if (l < 2) throw std::invalid_argument("backward: need sequence length >= 2");

        Tensor dlogits({l, v});
        const double inv_n = 1.0 / static_cast<double>(l - 1);
        for (std::size_t t = 0; t + 1 < l; ++t) {
            const double* p = cache.next_probs.data() + t * v;
            double* g = dlogits.data() + t * v;
            for (std::size_t j = 0; j < v; ++j) g[j] = p[j] * inv_n;
            g[cache.tokens[t + 1]] -= inv_n;
        }

        Tensor dfno({l, d});
        matmul_backward(cache.final_norm_out, out_head_, dlogits, dfno, dout_head_);

        const Tensor& last_x =
            cfg_.n_layers > 0 ? cache.layers.back().x_out : cache.emb;
        Tensor dx({l, d});
        rmsnorm_backward(last_x, final_norm_, cache.final_norm_inv, dfno, dx, dfinal_norm_);

        const double aux_scale = cfg_.aux_loss_factor / static_cast<double>(cfg_.n_layers);
        for (std::size_t i = cfg_.n_layers; i-- > 0;) {
            const auto& C = cache.layers[i];
            auto& L = layers_[i];
            // dx holds dL/d(x_out); residual split
            Tensor dh = dx;
            Tensor dh_norm({l, d});
            moe_backward(C.h_norm, C.decision, L.experts, C.moe, dx, dh_norm);

            Tensor dgate({l, cfg_.num_experts});
            moe_combine_backward(C.decision, C.moe, dx, dgate);
            aux_loss_backward(C.decision, aux_scale, dgate);
            matmul_backward(C.h_norm, L.w_gate, dgate, dh_norm, L.dw_gate);

            rmsnorm_backward(C.h, L.ffn_norm, C.ffn_norm_inv, dh_norm, dh, L.dffn_norm);

            // dh now holds dL/dh; attention residual split
            Tensor dx_in = dh;
            Tensor dx_norm({l, d});
            attention_backward(C, L, dh, dx_norm);
            rmsnorm_backward(C.x_in, L.attn_norm, C.attn_norm_inv, dx_norm, dx_in, L.dattn_norm);
            dx = std::move(dx_in);
        }

        for (std::size_t t = 0; t < l; ++t) {
            double* g = dtok_embed_.data() + static_cast<std::size_t>(cache.tokens[t]) * d;
            const double* src = dx.data() + t * d;
            for (std::size_t j = 0; j < d; ++j) g[j] += src[j];
        }
    }

    // Greedy argmax continuation.
    std::vector<int> generate(const std::vector<int>& prompt, std::size_t max_tokens) const {
        if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
        std::vector<int> seq = prompt;
        for (std::size_t step = 0; step < max_tokens; ++step) {
            if (seq.size() >= cfg_.context_len)
                throw std::runtime_error("generate: context window exhausted");
            ForwardCache cache;
            forward(seq, cache);
            const double* row = cache.logits.data() + (seq.size() - 1) * cfg_.vocab_size;
            std::size_t best = 0;
            for (std::size_t j = 1; j < cfg_.vocab_size; ++j)
                if (row[j] > row[best]) best = j;
            seq.push_back(static_cast<int>(best));
        }
        return seq;
    }

private:
    void attention_forward(LayerCache& C, const LayerWeights& L) const {
        const std::size_t l = C.x_in.dim(0), d = cfg_.dim, H = cfg_.n_heads,
                          hd = cfg_.head_dim;
        C.q = matmul(C.x_norm, L.wq);
        C.k = matmul(C.x_norm, L.wk);
        C.v = matmul(C.x_norm, L.wv);
        std::vector<std::size_t> pos(l);
        for (std::size_t t = 0; t < l; ++t) pos[t] = t;
        rope_apply(C.q, pos, H, hd, cfg_.rope_base);
        rope_apply(C.k, pos, H, hd, cfg_.rope_base);

        C.attn_probs = Tensor({H, l, l});
        C.attn_concat = Tensor({l, d});
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t t = 0; t < l; ++t) {
                double* prow = C.attn_probs.data() + (h * l + t) * l;
                const double* qv = C.q.data() + t * d + h * hd;
                for (std::size_t s = 0; s <= t; ++s) {
                    const double* kv = C.k.data() + s * d + h * hd;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < hd; ++j) dot += qv[j] * kv[j];
                    prow[s] = dot * scale;
                }
                softmax_row(prow, t + 1);
                double* orow = C.attn_concat.data() + t * d + h * hd;
                for (std::size_t s = 0; s <= t; ++s) {
                    const double* vv = C.v.data() + s * d + h * hd;
                    for (std::size_t j = 0; j < hd; ++j) orow[j] += prow[s] * vv[j];
                }
            }
        }
        C.attn_proj = matmul(C.attn_concat, L.wo);
    }

    void attention_backward(const LayerCache& C, LayerWeights& L, const Tensor& dout,
                            Tensor& dx_norm) {
        const std::size_t l = C.x_in.dim(0), d = cfg_.dim, H = cfg_.n_heads,
                          hd = cfg_.head_dim;
        Tensor dconcat({l, d});
        matmul_backward(C.attn_concat, L.wo, dout, dconcat, L.dwo);

        Tensor dq({l, d}), dk({l, d}), dv({l, d});
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
        std::vector<double> dscores;
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t t = 0; t < l; ++t) {
                const double* prow = C.attn_probs.data() + (h * l + t) * l;
                const double* dorow = dconcat.data() + t * d + h * hd;
                dscores.assign(t + 1, 0.0);
                std::vector<double> dprobs(t + 1, 0.0);
                for (std::size_t s = 0; s <= t; ++s) {
                    const double* vv = C.v.data() + s * d + h * hd;
                    double* dvv = dv.data() + s * d + h * hd;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < hd; ++j) {
                        acc += dorow[j] * vv[j];
                        dvv[j] += prow[s] * dorow[j];
                    }
                    dprobs[s] = acc;
                }
                softmax_backward_row(prow, dprobs.data(), dscores.data(), t + 1);
                const double* qv = C.q.data() + t * d + h * hd;
                double* dqv = dq.data() + t * d + h * hd;
                for (std::size_t s = 0; s <= t; ++s) {
                    const double ds = dscores[s] * scale;
                    const double* kv = C.k.data() + s * d + h * hd;
                    double* dkv = dk.data() + s * d + h * hd;
                    for (std::size_t j = 0; j < hd; ++j) {
                        dqv[j] += ds * kv[j];
                        dkv[j] += ds * qv[j];
                    }
                }
            }
        }
        std::vector<std::size_t> pos(l);
        for (std::size_t t = 0; t < l; ++t) pos[t] = t;
        rope_apply(dq, pos, H, hd, cfg_.rope_base, /*inverse=*/true);
        rope_apply(dk, pos, H, hd, cfg_.rope_base, /*inverse=*/true);
        matmul_backward(C.x_norm, L.wq, dq, dx_norm, L.dwq);
        matmul_backward(C.x_norm, L.wk, dk, dx_norm, L.dwk);
        matmul_backward(C.x_norm, L.wv, dv, dx_norm, L.dwv);
    }

    ModelConfig cfg_;
    Tensor tok_embed_, dtok_embed_;
    std::vector<LayerWeights> layers_;
    Tensor final_norm_, dfinal_norm_;
    Tensor out_head_, dout_head_;
};

}  // namespace moelens
