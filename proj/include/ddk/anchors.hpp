#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ddk/geometry.hpp"

namespace ddk {

// Anchor geometry: scale s at aspect ratio r (width:height) yields a box of
// width s*sqrt(r) and height s/sqrt(r), so every ratio preserves area s^2.
struct AnchorConfig {
    std::vector<double> scales = {64, 128, 256};
    std::vector<double> ratios = {0.5, 1.0, 2.0};
    double stride = 16;

    void validate() const {
        if (scales.empty() || ratios.empty()) throw std::invalid_argument("AnchorConfig: empty scales or ratios");
        for (double s : scales)
            if (!(s > 0)) throw std::invalid_argument("AnchorConfig: scales must be positive");
        for (double r : ratios)
            if (!(r > 0)) throw std::invalid_argument("AnchorConfig: ratios must be positive");
        if (!(stride > 0)) throw std::invalid_argument("AnchorConfig: stride must be positive");
    }

    int anchors_per_center() const { return static_cast<int>(scales.size() * ratios.size()); }
};

inline std::vector<BBox> anchors_at_center(const AnchorConfig& cfg, double cx, double cy) {
    std::vector<BBox> out;
    out.reserve(cfg.anchors_per_center());
    for (double s : cfg.scales) {
        for (double r : cfg.ratios) {
            const double w = s * std::sqrt(r);
            const double h = s / std::sqrt(r);
            out.emplace_back(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
        }
    }
    return out;
}

// Anchors at every stride-spaced center covering the extent. Boxes may extend
// past the image; clipping is deferred to decode time so border anchors still
// take part in label assignment.
inline std::vector<BBox> generate_anchors(const AnchorConfig& cfg, const ImageExtent& extent) {
    cfg.validate();
    const int nx = static_cast<int>(std::ceil(extent.width / cfg.stride));
    const int ny = static_cast<int>(std::ceil(extent.height / cfg.stride));
    std::vector<BBox> out;
    out.reserve(static_cast<std::size_t>(nx) * ny * cfg.anchors_per_center());
    for (int iy = 0; iy < ny; ++iy) {
        const double cy = (iy + 0.5) * cfg.stride;
        for (int ix = 0; ix < nx; ++ix) {
            const double cx = (ix + 0.5) * cfg.stride;
            for (const BBox& b : anchors_at_center(cfg, cx, cy)) out.push_back(b);
        }
    }
    return out;
}

}  // namespace ddk
