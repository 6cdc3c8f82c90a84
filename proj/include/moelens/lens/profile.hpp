#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "moelens/model/model.hpp"
#include "moelens/model/ops.hpp"
#include "moelens/tensor.hpp"

namespace moelens::lens {

struct ExpertChoiceProfile {
    std::vector<std::vector<double>> per_layer;  // N simplex vectors of length e
    std::vector<double> concatenated;            // length N*e
    std::string label;
};

// Per layer: sum the raw gate logits over the token axis, softmax, concat in
// layer order. mean_normalize divides the sum by the token count first, which
// keeps the softmax sharpness independent of document length.
inline ExpertChoiceProfile expert_profile(const std::vector<Tensor>& gate_logits_per_layer,
                                          bool mean_normalize = false) {
    if (gate_logits_per_layer.empty())
        throw std::invalid_argument("expert_profile: no layers given");
    ExpertChoiceProfile prof;
    const std::size_t e = gate_logits_per_layer.front().dim(1);
    for (const auto& g : gate_logits_per_layer) {
        if (g.rank() != 2 || g.dim(1) != e || g.dim(0) == 0)
            throw std::invalid_argument("expert_profile: inconsistent gate logit shapes");
        const std::size_t l = g.dim(0);
        std::vector<double> summed(e, 0.0);
        for (std::size_t t = 0; t < l; ++t)
            for (std::size_t j = 0; j < e; ++j) summed[j] += g.at(t, j);
        if (mean_normalize)
            for (auto& v : summed) v /= static_cast<double>(l);
        softmax_row(summed.data(), e);
        prof.concatenated.insert(prof.concatenated.end(), summed.begin(), summed.end());
        prof.per_layer.push_back(std::move(summed));
    }
    return prof;
}

struct LabeledDocument {
    std::string label;
    std::vector<int> tokens;
};

struct CollectResult {
    std::vector<ExpertChoiceProfile> profiles;
    std::size_t skipped_empty = 0;
};

// One profile per document. Documents longer than the context window are
// truncated; empty documents are skipped and counted.
inline CollectResult collect_profiles(const Model& model,
                                      const std::vector<LabeledDocument>& documents,
                                      bool mean_normalize = false) {
    CollectResult out;
    for (const auto& doc : documents) {
        if (doc.tokens.empty()) {
            ++out.skipped_empty;
            continue;
        }
        std::vector<int> tokens = doc.tokens;
        if (tokens.size() > model.config().context_len)
            tokens.resize(model.config().context_len);
        ForwardCache cache;
        model.forward(tokens, cache);
        std::vector<Tensor> gates;
        gates.reserve(cache.layers.size());
        for (const auto& L : cache.layers) gates.push_back(L.decision.gate_logits);
        auto prof = expert_profile(gates, mean_normalize);
        prof.label = doc.label;
        out.profiles.push_back(std::move(prof));
    }
    return out;
}

}  // namespace moelens::lens
