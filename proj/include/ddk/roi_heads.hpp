#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddk/geometry.hpp"
#include "ddk/taxonomy.hpp"
#include "ddk/tensor.hpp"

namespace ddk {

// Configuration of the two-branch head. The detection score map carries
// (K+1)*P*P channels (one position-sensitive bank per super-class plus
// background), the regression map 4*P*P (class-agnostic), and the
// classification map C channels (no position sensitivity).
struct HeadConfig {
    int num_superclasses = 1;   // K
    int num_classes = 1;        // C
    int pool_grid = 7;          // P
    int cls_pool_grid = 3;      // bins per side for RoI average pooling on the class map
    Taxonomy taxonomy;

    int detection_channels() const { return (num_superclasses + 1) * pool_grid * pool_grid; }
    int regression_channels() const { return 4 * pool_grid * pool_grid; }
};

struct RoIScores {
    std::vector<double> superclass_probs;  // K+1 entries, background last
    std::vector<double> class_probs;       // C entries
    RegressionDelta deltas;
    std::vector<double> final_scores;      // C entries
};

struct PooledVector {
    std::vector<double> values;
    bool degenerate = false;
};

namespace detail {

// One bilinear sample as four weighted cell reads within a channel plane.
// Taps are built once per RoI and reused across channels; out-of-bounds
// cells are dropped, which equals the zero-padding convention.
struct BilinearTap {
    int idx[4];
    double w[4];
    int count = 0;
};

inline BilinearTap make_tap(int height, int width, double x, double y) {
    const double u = x - 0.5, v = y - 0.5;
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    const double fx = u - x0, fy = v - y0;
    const double weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    BilinearTap tap;
    for (int i = 0; i < 4; ++i) {
        if (xs[i] < 0 || ys[i] < 0 || xs[i] >= width || ys[i] >= height) continue;
        tap.idx[tap.count] = ys[i] * width + xs[i];
        tap.w[tap.count] = weights[i];
        tap.count++;
    }
    return tap;
}

inline double eval_tap(const float* plane, const BilinearTap& tap) {
    double acc = 0.0;
    for (int i = 0; i < tap.count; ++i) acc += plane[tap.idx[i]] * tap.w[i];
    return acc;
}

// The 2x2 quarter-position sample taps for every bin of a grid x grid
// division of the RoI, in feature-cell coordinates; 4 consecutive taps per
// bin, row-major over bins.
inline std::vector<BilinearTap> bin_taps(const FeatureMap& map, const BBox& roi, int grid) {
    const double fx1 = roi.x1 / map.stride;
    const double fy1 = roi.y1 / map.stride;
    const double bin_w = (roi.x2 - roi.x1) / map.stride / grid;
    const double bin_h = (roi.y2 - roi.y1) / map.stride / grid;
    std::vector<BilinearTap> taps;
    taps.reserve(static_cast<std::size_t>(grid) * grid * 4);
    for (int i = 0; i < grid; ++i) {
        const double y0 = fy1 + i * bin_h;
        for (int j = 0; j < grid; ++j) {
            const double x0 = fx1 + j * bin_w;
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx)
                    taps.push_back(make_tap(map.height, map.width,
                                            x0 + bin_w * (0.25 + 0.5 * sx), y0 + bin_h * (0.25 + 0.5 * sy)));
        }
    }
    return taps;
}

}  // namespace detail

// Position-sensitive RoI pooling: the RoI is divided into a P x P grid of
// equal bins and bin (i,j) of group g reads only channel g*P*P + i*P + j.
// Each group's output is the mean of its P*P bin averages. RoI coordinates
// are in image pixels and are scaled by the map stride; bins are continuous.
inline PooledVector psroi_pool(const FeatureMap& map, const BBox& roi, int pool_grid, int groups) {
    const int p = pool_grid;
    if (p < 1 || groups < 1) throw std::invalid_argument("psroi_pool: P and G must be >= 1");
    if (map.channels != groups * p * p)
        throw std::invalid_argument("psroi_pool: map has " + std::to_string(map.channels) +
                                    " channels, expected G*P*P = " + std::to_string(groups * p * p));
    if (!roi.valid()) throw std::invalid_argument("psroi_pool: invalid roi");

    PooledVector out;
    out.values.assign(groups, 0.0);
    if (roi.degenerate()) {
        out.degenerate = true;
        return out;
    }

    const std::vector<detail::BilinearTap> taps = detail::bin_taps(map, roi, p);
    const std::size_t plane = static_cast<std::size_t>(map.height) * map.width;
    for (int g = 0; g < groups; ++g) {
        double acc = 0.0;
        for (int bin = 0; bin < p * p; ++bin) {
            const float* channel = map.data.data() + (static_cast<std::size_t>(g) * p * p + bin) * plane;
            double bin_sum = 0.0;
            for (int s = 0; s < 4; ++s) bin_sum += detail::eval_tap(channel, taps[bin * 4 + s]);
            acc += 0.25 * bin_sum;
        }
        out.values[g] = acc / (p * p);
    }
    return out;
}

// Numerically stable softmax (max-subtracted) over all entries.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

// Softmax over the K+1 pooled detection logits, background included.
inline std::vector<double> superclass_probabilities(const std::vector<double>& pooled) {
    return softmax(pooled);
}

// Per-channel average of bilinear samples inside the RoI, then softmax over
// the C classes. A zero-area RoI yields the uniform distribution.
inline PooledVector classify_roi(const FeatureMap& class_map, const BBox& roi, int avg_grid = 3) {
    if (avg_grid < 1) throw std::invalid_argument("classify_roi: avg_grid must be >= 1");
    if (!roi.valid()) throw std::invalid_argument("classify_roi: invalid roi");
    const int c_num = class_map.channels;

    PooledVector out;
    if (roi.degenerate()) {
        out.values.assign(c_num, 1.0 / c_num);
        out.degenerate = true;
        return out;
    }

    // All channels share one RoI sample pattern, so the taps are built once
    // and streamed over the channel planes.
    const std::vector<detail::BilinearTap> taps = detail::bin_taps(class_map, roi, avg_grid);
    const std::size_t plane = static_cast<std::size_t>(class_map.height) * class_map.width;
    const int bins = avg_grid * avg_grid;
    std::vector<double> pooled(c_num, 0.0);
    for (int c = 0; c < c_num; ++c) {
        const float* channel = class_map.data.data() + c * plane;
        double acc = 0.0;
        for (int bin = 0; bin < bins; ++bin) {
            double bin_sum = 0.0;
            for (int s = 0; s < 4; ++s) bin_sum += detail::eval_tap(channel, taps[bin * 4 + s]);
            acc += 0.25 * bin_sum;
        }
        pooled[c] = acc / bins;
    }
    out.values = softmax(pooled);
    return out;
}

// final[c] = superclass_probs[sc(c)] * class_probs[c]; the background entry
// never contributes.
inline std::vector<double> combine_scores(const std::vector<double>& superclass_probs,
                                          const std::vector<double>& class_probs,
                                          const Taxonomy& taxonomy) {
    if (static_cast<int>(superclass_probs.size()) != taxonomy.num_superclasses + 1)
        throw std::invalid_argument("combine_scores: expected K+1 super-class probabilities");
    if (static_cast<int>(class_probs.size()) != taxonomy.num_classes)
        throw std::invalid_argument("combine_scores: expected C class probabilities");
    std::vector<double> final_scores(class_probs.size());
    for (int c = 0; c < taxonomy.num_classes; ++c)
        final_scores[c] = superclass_probs[taxonomy.assignment[c]] * class_probs[c];
    return final_scores;
}

// Full per-RoI head: position-sensitive pooling for detection (K+1 groups)
// and regression (4 groups), plain average pooling plus softmax for the
// fine-grained classes, then the multiplicative score combination.
inline RoIScores score_roi(const FeatureMap& detection_map, const FeatureMap& regression_map,
                           const FeatureMap& class_map, const BBox& roi, const HeadConfig& cfg) {
    if (detection_map.channels != cfg.detection_channels())
        throw std::invalid_argument("score_roi: detection map must carry (K+1)*P*P channels");
    if (regression_map.channels != cfg.regression_channels())
        throw std::invalid_argument("score_roi: regression map must carry 4*P*P channels");
    if (class_map.channels != cfg.num_classes)
        throw std::invalid_argument("score_roi: classification map must carry C channels");

    RoIScores s;
    s.superclass_probs = superclass_probabilities(psroi_pool(detection_map, roi, cfg.pool_grid, cfg.num_superclasses + 1).values);
    const PooledVector reg = psroi_pool(regression_map, roi, cfg.pool_grid, 4);
    s.deltas = RegressionDelta{reg.values[0], reg.values[1], reg.values[2], reg.values[3]};
    s.class_probs = classify_roi(class_map, roi, cfg.cls_pool_grid).values;
    s.final_scores = combine_scores(s.superclass_probs, s.class_probs, cfg.taxonomy);
    return s;
}

// Objectness taken from an external proposal score instead of the
// position-sensitive branch; bounding-box regression is optional.
struct RpnModeResult {
    std::vector<double> final_scores;
    BBox box;
};

inline RpnModeResult rpn_objectness_mode(double rpn_score, const std::vector<double>& class_probs,
                                         bool use_bbr, const RegressionDelta& deltas,
                                         const BBox& anchor, const ImageExtent& extent) {
    RpnModeResult r;
    r.final_scores.resize(class_probs.size());
    for (std::size_t c = 0; c < class_probs.size(); ++c) r.final_scores[c] = rpn_score * class_probs[c];
    r.box = use_bbr ? decode(deltas, anchor, extent) : anchor;
    return r;
}

}  // namespace ddk
