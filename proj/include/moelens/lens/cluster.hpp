#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "moelens/lens/profile.hpp"
#include "moelens/lens/tsne.hpp"

namespace moelens::lens {

struct PairSeparation {
    std::string label_a, label_b;
    double mean_cosine_distance;
};

struct ClusterReport {
    double mean_intra_cosine = 0.0;  // on the raw profile vectors
    double mean_inter_cosine = 0.0;
    double silhouette = 0.0;  // on the 3-D embedding, euclidean
    std::vector<PairSeparation> pairs;
};

namespace detail {

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return 1.0 - dot / std::sqrt(na * nb);
}

inline double euclid(const Tensor& y, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < y.dim(1); ++c) {
        const double d = y.at(i, c) - y.at(j, c);
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace detail

inline double silhouette_score(const Tensor& coords, const std::vector<std::string>& labels) {
    const std::size_t n = coords.dim(0);
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
    if (groups.size() < 2) throw std::invalid_argument("silhouette: need at least 2 labels");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& own = groups[labels[i]];
        if (own.size() < 2) continue;  // singleton clusters score 0
        double a = 0.0;
        for (auto j : own)
            if (j != i) a += detail::euclid(coords, i, j);
        a /= static_cast<double>(own.size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [lab, members] : groups) {
            if (lab == labels[i]) continue;
            double m = 0.0;
            for (auto j : members) m += detail::euclid(coords, i, j);
            b = std::min(b, m / static_cast<double>(members.size()));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

// Separation statistics: mean intra/inter-label cosine distances on the raw
// profiles, silhouette on the embedding (skipped when coords are absent).
inline ClusterReport cluster_report(const std::vector<ExpertChoiceProfile>& profiles,
                                    const Tensor* coords = nullptr) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < profiles.size(); ++i) groups[profiles[i].label].push_back(i);
    if (groups.size() < 2)
        throw std::invalid_argument("cluster_report: need at least 2 labels");
    for (const auto& [lab, members] : groups)
        if (members.size() < 2)
            throw std::invalid_argument("cluster_report: label '" + lab +
                                        "' has fewer than 2 profiles");

    ClusterReport rep;
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> pair_acc;
    for (std::size_t i = 0; i < profiles.size(); ++i)
        for (std::size_t j = i + 1; j < profiles.size(); ++j) {
            const double d =
                detail::cosine_distance(profiles[i].concatenated, profiles[j].concatenated);
            if (profiles[i].label == profiles[j].label) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
                auto key = std::minmax(profiles[i].label, profiles[j].label);
                auto& acc = pair_acc[{key.first, key.second}];
                acc.first += d;
                acc.second += 1;
            }
        }
    rep.mean_intra_cosine = n_intra ? intra / static_cast<double>(n_intra) : 0.0;
    rep.mean_inter_cosine = n_inter ? inter / static_cast<double>(n_inter) : 0.0;
    for (const auto& [key, acc] : pair_acc)
        rep.pairs.push_back({key.first, key.second, acc.first / static_cast<double>(acc.second)});

    if (coords) {
        std::vector<std::string> labels;
        labels.reserve(profiles.size());
        for (const auto& p : profiles) labels.push_back(p.label);
        rep.silhouette = silhouette_score(*coords, labels);
    }
    return rep;
}

}  // namespace moelens::lens
