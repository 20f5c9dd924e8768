#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddk {

// Axis-aligned box in continuous pixel coordinates, x2 >= x1, y2 >= y1.
// Area is (x2-x1)*(y2-y1) with no +1 correction so that box arithmetic
// stays consistent with sub-pixel bilinear pooling.
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    BBox() = default;
    BBox(double x1_, double y1_, double x2_, double y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {}

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double center_x() const { return 0.5 * (x1 + x2); }
    double center_y() const { return 0.5 * (y1 + y2); }

    bool valid() const {
        return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
               x2 >= x1 && y2 >= y1;
    }
    bool degenerate() const { return x2 <= x1 || y2 <= y1; }

    bool operator==(const BBox& o) const {
        return x1 == o.x1 && y1 == o.y1 && x2 == o.x2 && y2 == o.y2;
    }
};

// Center offsets normalized by anchor size plus log-scale size ratios.
struct RegressionDelta {
    double dx = 0, dy = 0, dw = 0, dh = 0;

    bool finite() const {
        return std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dw) && std::isfinite(dh);
    }
};

struct ImageExtent {
    int width = 0;
    int height = 0;

    ImageExtent() = default;
    ImageExtent(int w, int h) : width(w), height(h) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("ImageExtent: width and height must be positive");
    }
};

inline double area(const BBox& b) {
    return b.width() * b.height();
}

inline double intersection_area(const BBox& a, const BBox& b) {
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

// Intersection over union; 0 when the union has zero area.
inline double iou(const BBox& a, const BBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = area(a) + area(b) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

// Center/log-size deltas of target relative to anchor.
inline RegressionDelta encode(const BBox& target, const BBox& anchor) {
    const double aw = anchor.width();
    const double ah = anchor.height();
    if (aw <= 0 || ah <= 0) throw std::invalid_argument("encode: degenerate anchor");
    RegressionDelta d;
    d.dx = (target.center_x() - anchor.center_x()) / aw;
    d.dy = (target.center_y() - anchor.center_y()) / ah;
    d.dw = std::log(target.width() / aw);
    d.dh = std::log(target.height() / ah);
    return d;
}

inline BBox clip_box(const BBox& b, const ImageExtent& extent) {
    const double w = static_cast<double>(extent.width);
    const double h = static_cast<double>(extent.height);
    return BBox(std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h),
                std::clamp(b.x2, 0.0, w), std::clamp(b.y2, 0.0, h));
}

// Inverse of encode, clipped to [0,width] x [0,height].
inline BBox decode(const RegressionDelta& delta, const BBox& anchor, const ImageExtent& clip) {
    const double aw = anchor.width();
    const double ah = anchor.height();
    if (aw <= 0 || ah <= 0) throw std::invalid_argument("decode: degenerate anchor");
    if (!delta.finite()) throw std::invalid_argument("decode: non-finite delta");
    const double cx = anchor.center_x() + delta.dx * aw;
    const double cy = anchor.center_y() + delta.dy * ah;
    const double w = aw * std::exp(delta.dw);
    const double h = ah * std::exp(delta.dh);
    return clip_box(BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h), clip);
}

}  // namespace ddk
