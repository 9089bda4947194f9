#ifndef GDR_SVG_HPP
#define GDR_SVG_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "embedding.hpp"

namespace gdr {

/// Categorical palette; labels cycle through it.
inline constexpr std::array<const char*, 20> svg_palette{
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5"};

struct SvgOptions {
    double width = 800;
    double height = 800;
    double margin = 20;
    double radius = 2;
    double opacity = 0.8;
    std::string title;
};

namespace internal {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += ch;
        }
    }
    return out;
}

inline const char* label_color(std::int64_t label) {
    const auto m = static_cast<std::int64_t>(svg_palette.size());
    return svg_palette[static_cast<std::size_t>(((label % m) + m) % m)];
}

}

/**
 * Scatter plot of the first two embedding coordinates. The bounding box of the
 * points is mapped onto the drawing area with a common scale for both axes, so
 * distances are not distorted. A 1-D embedding is drawn on a horizontal line.
 * Without labels every point uses the first palette entry.
 */
inline void write_svg(std::ostream& out, const EmbeddingState& Y, const std::vector<std::int64_t>* labels,
                      const SvgOptions& opt = {}) {
    if (labels && labels->size() != Y.n) {
        throw std::invalid_argument("label count does not match the embedding");
    }
    double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double hi[2] = {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    auto coord = [&](std::size_t i, std::size_t c) { return c < Y.dim ? Y.coords[i * Y.dim + c] : 0.0; };
    for (std::size_t i = 0; i < Y.n; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            lo[c] = std::min(lo[c], coord(i, c));
            hi[c] = std::max(hi[c], coord(i, c));
        }
    }
    if (Y.n == 0) {
        lo[0] = lo[1] = 0;
        hi[0] = hi[1] = 1;
    }
    const double inner_w = std::max(1.0, opt.width - 2 * opt.margin);
    const double inner_h = std::max(1.0, opt.height - 2 * opt.margin);
    const double span_x = hi[0] - lo[0];
    const double span_y = hi[1] - lo[1];
    double scale = std::min(span_x > 0 ? inner_w / span_x : std::numeric_limits<double>::infinity(),
                            span_y > 0 ? inner_h / span_y : std::numeric_limits<double>::infinity());
    if (!std::isfinite(scale)) {
        scale = 1.0;
    }
    const double off_x = opt.margin + (inner_w - span_x * scale) / 2;
    const double off_y = opt.margin + (inner_h - span_y * scale) / 2;

    std::ostringstream body;
    body.precision(6);
    body << std::fixed;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
        << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opt.title.empty()) {
        out << "<title>" << internal::xml_escape(opt.title) << "</title>\n";
    }
    out << "<g fill-opacity=\"" << opt.opacity << "\">\n";
    for (std::size_t i = 0; i < Y.n; ++i) {
        const double x = off_x + (coord(i, 0) - lo[0]) * scale;
        // SVG y grows downwards
        const double y = opt.height - (off_y + (coord(i, 1) - lo[1]) * scale);
        const char* color = labels ? internal::label_color((*labels)[i]) : svg_palette[0];
        body.str("");
        body << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << opt.radius << "\" fill=\"" << color << "\"/>\n";
        out << body.str();
    }
    out << "</g>\n</svg>\n";
}

inline void save_svg(const std::string& path, const EmbeddingState& Y, const std::vector<std::int64_t>* labels,
                     const SvgOptions& opt = {}) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_svg(out, Y, labels, opt);
}

}

#endif
