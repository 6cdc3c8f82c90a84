#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace moelens {

struct ModelConfig {
    std::size_t dim = 32;
    std::size_t n_layers = 2;
    std::size_t head_dim = 8;
    std::size_t ffn_hidden_dim = 64;
    std::size_t n_heads = 4;
    std::size_t n_kv_heads = 4;
    std::size_t context_len = 256;
    std::size_t vocab_size = 512;
    std::size_t num_experts = 4;
    std::size_t topk_experts = 2;
    double aux_loss_factor = 0.02;
    double capacity_factor = 1.0;
    double rms_eps = 1e-5;
    double rope_base = 10000.0;

    void validate() const {
        if (head_dim * n_heads != dim)
            throw std::invalid_argument("config: head_dim * n_heads must equal dim");
        if (n_kv_heads != n_heads)
            throw std::invalid_argument("config: n_kv_heads must equal n_heads");
        if (head_dim % 2 != 0)
            throw std::invalid_argument("config: head_dim must be even for rotary pairs");
        if (topk_experts < 1 || topk_experts > num_experts)
            throw std::invalid_argument("config: need 1 <= topk_experts <= num_experts");
        if (aux_loss_factor < 0) throw std::invalid_argument("config: aux_loss_factor < 0");
        if (capacity_factor <= 0) throw std::invalid_argument("config: capacity_factor <= 0");
        if (vocab_size == 0 || context_len == 0 || n_layers == 0)
            throw std::invalid_argument("config: zero-sized model");
    }

    static ModelConfig tiny() {
        ModelConfig c;
        c.dim = 32;
        c.n_layers = 2;
        c.head_dim = 8;
        c.ffn_hidden_dim = 64;
        c.n_heads = 4;
        c.n_kv_heads = 4;
        c.context_len = 256;
        c.vocab_size = 512;
        c.num_experts = 4;
        c.topk_experts = 2;
        c.validate();
        return c;
    }

    // Full-size reference configuration. Construction-only at desk scale.
    static ModelConfig table1() {
        ModelConfig c;
        c.dim = 3200;
        c.n_layers = 26;
        c.head_dim = 100;
        c.ffn_hidden_dim = 8640;
        c.n_heads = 32;
        c.n_kv_heads = 32;
        c.context_len = 8192;
        c.vocab_size = 32192;
        c.num_experts = 8;
        c.topk_experts = 2;
        c.validate();
        return c;
    }

    nlohmann::json to_json() const {
        return {{"dim", dim},
                {"n_layers", n_layers},
                {"head_dim", head_dim},
                {"ffn_hidden_dim", ffn_hidden_dim},
                {"n_heads", n_heads},
                {"n_kv_heads", n_kv_heads},
                {"context_len", context_len},
                {"vocab_size", vocab_size},
                {"num_experts", num_experts},
                {"topk_experts", topk_experts},
                {"aux_loss_factor", aux_loss_factor},
                {"capacity_factor", capacity_factor},
                {"rms_eps", rms_eps},
                {"rope_base", rope_base}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.dim = j.at("dim");
        c.n_layers = j.at("n_layers");
        c.head_dim = j.at("head_dim");
        c.ffn_hidden_dim = j.at("ffn_hidden_dim");
        c.n_heads = j.at("n_heads");
        c.n_kv_heads = j.at("n_kv_heads");
        c.context_len = j.at("context_len");
        c.vocab_size = j.at("vocab_size");
        c.num_experts = j.at("num_experts");
        c.topk_experts = j.at("topk_experts");
        c.aux_loss_factor = j.at("aux_loss_factor");
        c.capacity_factor = j.at("capacity_factor");
        c.rms_eps = j.value("rms_eps", 1e-5);
        c.rope_base = j.value("rope_base", 10000.0);
        c.validate();
        return c;
    }
};

}  // namespace moelens
