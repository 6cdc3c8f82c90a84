#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "moelens/lens/profile.hpp"
#include "moelens/lens/tsne.hpp"

namespace moelens::lens {

inline void write_profiles(const std::vector<ExpertChoiceProfile>& profiles,
                           const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write profile table: " + path);
    char buf[64];
    for (const auto& p : profiles) {
        out << p.label;
        for (double v : p.concatenated) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_embedding(const EmbeddingResult& embedding,
                            const std::vector<std::string>& labels, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write embedding table: " + path);
    char buf[256];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", labels[i].c_str(),
                      embedding.coords.at(i, 0), embedding.coords.at(i, 1),
                      embedding.coords.at(i, 2));
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace moelens::lens
