#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "moelens/lens/tsne.hpp"

namespace moelens::lens {

// Fixed palette; colors are assigned to labels in sorted label order.
inline const std::vector<std::string>& plot_palette() {
    static const std::vector<std::string> colors = {
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
        "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors;
}

// Three 2-D scatter panels (xy, xz, yz projections of the 3-D embedding) with
// a shared legend, written as a standalone SVG document.
inline void emit_plot(const EmbeddingResult& embedding, const std::vector<std::string>& labels,
                      const std::string& path) {
    const std::size_t n = labels.empty() ? 0 : embedding.coords.dim(0);
    std::set<std::string> unique(labels.begin(), labels.end());
    std::map<std::string, std::string> color;
    std::size_t ci = 0;
    for (const auto& lab : unique)
        color[lab] = plot_palette()[ci++ % plot_palette().size()];

    const double panel = 300.0, margin = 40.0, gap = 30.0;
    const double width = 3 * panel + 2 * gap + 2 * margin;
    const double height = panel + 2 * margin + 20.0 * static_cast<double>(unique.size()) + 20.0;

    double lo[3] = {-1, -1, -1}, hi[3] = {1, 1, 1};
    if (n > 0) {
        for (std::size_t c = 0; c < 3; ++c) {
            lo[c] = hi[c] = embedding.coords.at(0, c);
            for (std::size_t i = 1; i < n; ++i) {
                lo[c] = std::min(lo[c], embedding.coords.at(i, c));
                hi[c] = std::max(hi[c], embedding.coords.at(i, c));
            }
            if (hi[c] - lo[c] < 1e-12) {
                lo[c] -= 1.0;
                hi[c] += 1.0;
            }
        }
    }
    auto scale = [&](double v, std::size_t axis, bool flip) {
        double t = (v - lo[axis]) / (hi[axis] - lo[axis]);
        if (flip) t = 1.0 - t;
        return 10.0 + t * (panel - 20.0);
    };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write plot file: " + path);
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "viewBox=\"0 0 %.0f %.0f\">\n",
                  width, height, width, height);
    out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    const std::pair<std::size_t, std::size_t> axes[3] = {{0, 1}, {0, 2}, {1, 2}};
    const char* names[3] = {"x / y", "x / z", "y / z"};
    for (std::size_t pidx = 0; pidx < 3; ++pidx) {
        const double ox = margin + static_cast<double>(pidx) * (panel + gap);
        const double oy = margin;
        std::snprintf(buf, sizeof(buf),
                      "<g transform=\"translate(%.1f,%.1f)\">\n"
                      "<rect width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"#333\"/>\n"
                      "<text x=\"%.0f\" y=\"-8\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                      "font-size=\"12\">%s</text>\n",
                      ox, oy, panel, panel, panel / 2, names[pidx]);
        out << buf;
        for (std::size_t i = 0; i < n; ++i) {
            const double px = scale(embedding.coords.at(i, axes[pidx].first), axes[pidx].first, false);
            const double py = scale(embedding.coords.at(i, axes[pidx].second), axes[pidx].second, true);
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" "
                          "fill-opacity=\"0.7\"/>\n",
                          px, py, color[labels[i]].c_str());
            out << buf;
        }
        out << "</g>\n";
    }

    double ly = margin + panel + 25.0;
    for (const auto& lab : unique) {
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"5\" fill=\"%s\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" "
                      "font-size=\"12\">%s</text>\n",
                      margin + 5.0, ly, color[lab].c_str(), margin + 16.0, ly + 4.0, lab.c_str());
        out << buf;
        ly += 20.0;
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace moelens::lens
