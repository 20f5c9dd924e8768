#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddk/anchors.hpp"
#include "ddk/detection_io.hpp"
#include "ddk/geometry.hpp"
#include "ddk/random.hpp"
#include "ddk/roi_heads.hpp"
#include "ddk/targets.hpp"
#include "ddk/taxonomy.hpp"
#include "ddk/tensor.hpp"

namespace ddk {

struct ScenarioConfig {
    std::uint64_t seed = 1;
    int num_classes = 50;       // C
    int num_superclasses = 1;   // K
    int pool_grid = 7;          // P
    int num_objects = 5;
    ImageExtent extent{640, 480};
    double stride = 16.0;
    // Planted logits exceed the noise floor by this gap (after normalizing
    // out the class/super-class count), so softmax scores clear the
    // detection floor robustly.
    double gap = 4.0;
    double noise_sigma = 0.25;
    int rois_per_object = 3;    // one grid-aligned anchor plus jittered copies
    int background_rois = 20;

    void validate() const {
        if (num_classes < 2) throw std::invalid_argument("ScenarioConfig: C must be >= 2");
        if (num_superclasses < 1 || num_superclasses > num_classes)
            throw std::invalid_argument("ScenarioConfig: need 1 <= K <= C");
        if (pool_grid < 1) throw std::invalid_argument("ScenarioConfig: P must be >= 1");
        if (num_objects < 0) throw std::invalid_argument("ScenarioConfig: num_objects must be >= 0");
        if (rois_per_object < 1) throw std::invalid_argument("ScenarioConfig: rois_per_object must be >= 1");
        if (!(gap > 0)) throw std::invalid_argument("ScenarioConfig: gap must be positive");
    }
};

struct RenderedMaps {
    FeatureMap detection;
    FeatureMap regression;
    FeatureMap classification;
};

// Synthetic inputs for one image: score maps consistent with the planted
// objects, the RoIs to score, and the matching ground truth.
struct Scenario {
    ScenarioConfig config;
    Taxonomy taxonomy;
    std::vector<GroundTruth> objects;
    std::vector<BBox> anchors;  // grid-aligned anchor per object
    FeatureMap detection_map;
    FeatureMap regression_map;
    FeatureMap classification_map;
    std::vector<BBox> rois;
};

namespace detail {

// Simple modular taxonomy for synthetic scenes: class c -> c mod K. Real
// clustering runs through build_taxonomy; scenarios only need a valid
// partition shared by the maps and the scorer.
inline Taxonomy modular_taxonomy(int num_classes, int num_superclasses) {
    Taxonomy tax;
    tax.num_classes = num_classes;
    tax.num_superclasses = num_superclasses;
    tax.assignment.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) tax.assignment[c] = c % num_superclasses;
    tax.centroids.assign(num_superclasses, std::vector<double>(4, 0.0));
    for (int k = 0; k < num_superclasses; ++k) tax.centroids[k][k % 4] = 1.0 + k;
    tax.rebuild_members();
    tax.validate();
    return tax;
}

// Paint value over the feature cells whose centers fall inside the pixel
// rectangle.
inline void paint_rect(FeatureMap& map, int channel, const BBox& pixel_rect, float value) {
    const double x1 = pixel_rect.x1 / map.stride;
    const double y1 = pixel_rect.y1 / map.stride;
    const double x2 = pixel_rect.x2 / map.stride;
    const double y2 = pixel_rect.y2 / map.stride;
    const int cy0 = std::max(0, static_cast<int>(std::floor(y1 - 0.5)));
    const int cy1 = std::min(map.height - 1, static_cast<int>(std::ceil(y2)));
    const int cx0 = std::max(0, static_cast<int>(std::floor(x1 - 0.5)));
    const int cx1 = std::min(map.width - 1, static_cast<int>(std::ceil(x2)));
    for (int cy = cy0; cy <= cy1; ++cy) {
        if (cy + 0.5 < y1 || cy + 0.5 >= y2) continue;
        for (int cx = cx0; cx <= cx1; ++cx) {
            if (cx + 0.5 < x1 || cx + 0.5 >= x2) continue;
            map.at(channel, cy, cx) = value;
        }
    }
}

inline BBox expand(const BBox& b, double by) {
    return BBox(b.x1 - by, b.y1 - by, b.x2 + by, b.y2 + by);
}

inline void fill_noise(FeatureMap& map, Rng& rng, double sigma) {
    for (float& v : map.data) v = static_cast<float>(rng.normal(0.0, sigma));
}

// Pad covers the RoI jitter around the anchor plus the bilinear sampling
// reach of one and a half feature cells.
inline BBox padded_region(const BBox& box, const BBox& anchor, double stride) {
    const double pad = 0.1 * anchor.width() + 1.5 * stride;
    return BBox(std::min(box.x1, anchor.x1) - pad, std::min(box.y1, anchor.y1) - pad,
                std::max(box.x2, anchor.x2) + pad, std::max(box.y2, anchor.y2) + pad);
}

}  // namespace detail

// Paint the three score maps for the given plants at an arbitrary stride.
// The detection map carries elevated logits for the correct super-class bank
// inside each planted box (each bin channel over its own sub-rectangle, so
// the maps stay position sensitive), the classification map elevates the
// true class, and the regression map holds the exact deltas from each
// object's anchor to its box — constant over a padded region, so pooling the
// anchor reproduces the delta and decoding it reproduces the object.
inline RenderedMaps render_scenario_maps(const ScenarioConfig& cfg, const Taxonomy& taxonomy,
                                         const std::vector<GroundTruth>& objects,
                                         const std::vector<BBox>& anchors, double stride,
                                         std::uint64_t noise_seed) {
    const int fh = static_cast<int>(std::ceil(cfg.extent.height / stride));
    const int fw = static_cast<int>(std::ceil(cfg.extent.width / stride));
    const int k_num = cfg.num_superclasses;
    const int p = cfg.pool_grid;

    RenderedMaps maps{FeatureMap(fh, fw, (k_num + 1) * p * p, stride),
                      FeatureMap(fh, fw, 4 * p * p, stride),
                      FeatureMap(fh, fw, cfg.num_classes, stride)};

    Rng map_rng(noise_seed);
    detail::fill_noise(maps.detection, map_rng, cfg.noise_sigma);
    detail::fill_noise(maps.regression, map_rng, cfg.noise_sigma);
    detail::fill_noise(maps.classification, map_rng, cfg.noise_sigma);

    // Lifts normalized so the planted softmax scores stay near sigmoid(gap)
    // regardless of K and C.
    const float det_lift = static_cast<float>(cfg.gap + std::log(static_cast<double>(k_num)));
    const float cls_lift =
        static_cast<float>(cfg.gap + std::log(static_cast<double>(std::max(cfg.num_classes - 1, 1))));

    for (std::size_t obj = 0; obj < objects.size(); ++obj) {
        const BBox& box = objects[obj].box;
        const int class_id = objects[obj].class_id;
        const int sclass = taxonomy.assignment[class_id];

        // The paint extends half a cell so bilinear samples just inside the
        // box read the full lift; objects sit in disjoint slots, so expanded
        // paints never collide.
        const BBox paint = detail::expand(box, 0.5 * stride);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j)
                detail::paint_rect(maps.detection, sclass * p * p + i * p + j, paint, det_lift);

        detail::paint_rect(maps.classification, class_id, paint, cls_lift);

        const RegressionDelta delta = encode(box, anchors[obj]);
        const BBox region = detail::padded_region(box, anchors[obj], cfg.stride);
        const double components[4] = {delta.dx, delta.dy, delta.dw, delta.dh};
        for (int t = 0; t < 4; ++t)
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j)
                    detail::paint_rect(maps.regression, t * p * p + i * p + j, region,
                                       static_cast<float>(components[t]));
    }
    return maps;
}

// Deterministic synthetic scene. Object placement draws from its own random
// stream, so the same seed yields the same objects for every K and P.
inline Scenario generate_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    Scenario sc;
    sc.config = cfg;
    sc.taxonomy = detail::modular_taxonomy(cfg.num_classes, cfg.num_superclasses);

    Rng plant_rng(cfg.seed);
    Rng roi_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

    // Objects live in shuffled, disjoint slots so their padded regions (the
    // space reserved for the constant regression fields) never collide. The
    // slot grid is the density bound.
    const double slot = 10.0 * cfg.stride;
    const int slots_x = static_cast<int>(cfg.extent.width / slot);
    const int slots_y = static_cast<int>(cfg.extent.height / slot);
    if (cfg.num_objects > slots_x * slots_y)
        throw std::runtime_error("generate_scenario: " + std::to_string(cfg.num_objects) +
                                 " objects exceed the density bound of " +
                                 std::to_string(slots_x * slots_y) + " for this extent");
    std::vector<int> slot_order(static_cast<std::size_t>(slots_x) * slots_y);
    for (std::size_t i = 0; i < slot_order.size(); ++i) slot_order[i] = static_cast<int>(i);
    for (std::size_t i = slot_order.size(); i > 1; --i)
        std::swap(slot_order[i - 1], slot_order[plant_rng.uniform_index(i)]);

    const std::vector<double> anchor_scales = {2.0 * cfg.stride, 4.0 * cfg.stride, 8.0 * cfg.stride};
    for (int obj = 0; obj < cfg.num_objects; ++obj) {
        const double slot_x = (slot_order[obj] % slots_x) * slot;
        const double slot_y = (slot_order[obj] / slots_x) * slot;

        const double size = plant_rng.uniform(2.25 * cfg.stride, 4.5 * cfg.stride);
        const double aspect = plant_rng.uniform(0.8, 1.25);
        const double w = size * std::sqrt(aspect);
        const double h = size / std::sqrt(aspect);
        const double jitter = 0.5 * cfg.stride;
        const double cx = slot_x + slot / 2 + plant_rng.uniform(-jitter, jitter);
        const double cy = slot_y + slot / 2 + plant_rng.uniform(-jitter, jitter);
        const BBox box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2);

        // Grid-aligned anchor: center snapped to the stride grid, side equal
        // to the nearest anchor scale in log space.
        double best_scale = anchor_scales[0];
        for (double s : anchor_scales)
            if (std::abs(std::log(s / size)) < std::abs(std::log(best_scale / size))) best_scale = s;
        const double acx = std::round(box.center_x() / cfg.stride) * cfg.stride;
        const double acy = std::round(box.center_y() / cfg.stride) * cfg.stride;
        const BBox anchor(acx - best_scale / 2, acy - best_scale / 2,
                          acx + best_scale / 2, acy + best_scale / 2);

        const int class_id = static_cast<int>(plant_rng.uniform_index(cfg.num_classes));
        sc.objects.push_back({box, class_id});
        sc.anchors.push_back(anchor);
    }

    RenderedMaps maps = render_scenario_maps(sc.config, sc.taxonomy, sc.objects, sc.anchors, cfg.stride,
                                             cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    sc.detection_map = std::move(maps.detection);
    sc.regression_map = std::move(maps.regression);
    sc.classification_map = std::move(maps.classification);

    // RoI source: the exact anchor per object plus jittered copies, then
    // scattered background boxes.
    for (std::size_t obj = 0; obj < sc.objects.size(); ++obj) {
        sc.rois.push_back(sc.anchors[obj]);
        for (int r = 1; r < cfg.rois_per_object; ++r) {
            const BBox& a = sc.anchors[obj];
            const double shift = 0.06 * a.width();
            const double dx = roi_rng.uniform(-shift, shift);
            const double dy = roi_rng.uniform(-shift, shift);
            const double grow = roi_rng.uniform(0.94, 1.06);
            const double w = a.width() * grow / 2, h = a.height() * grow / 2;
            sc.rois.push_back(BBox(a.center_x() + dx - w, a.center_y() + dy - h,
                                   a.center_x() + dx + w, a.center_y() + dy + h));
        }
    }
    for (int b = 0; b < cfg.background_rois; ++b) {
        const double w = roi_rng.uniform(48.0, 160.0);
        const double h = roi_rng.uniform(48.0, 160.0);
        const double x1 = roi_rng.uniform(0.0, std::max(1.0, cfg.extent.width - w));
        const double y1 = roi_rng.uniform(0.0, std::max(1.0, cfg.extent.height - h));
        sc.rois.push_back(BBox(x1, y1, x1 + w, y1 + h));
    }

    return sc;
}

inline HeadConfig scenario_head_config(const Scenario& sc) {
    HeadConfig cfg;
    cfg.num_superclasses = sc.config.num_superclasses;
    cfg.num_classes = sc.config.num_classes;
    cfg.pool_grid = sc.config.pool_grid;
    cfg.taxonomy = sc.taxonomy;
    return cfg;
}

// File layout used by the CLI: maps as DDK1 tensors plus JSON side files.
// With two_scale set, a second map set rendered at half the stride (double
// resolution) lands next to the primary one.
inline void write_scenario(const Scenario& sc, const std::string& dir, bool two_scale = false) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_tensor(dir + "/detection.ddk1", sc.detection_map.to_tensor());
    write_tensor(dir + "/regression.ddk1", sc.regression_map.to_tensor());
    write_tensor(dir + "/classification.ddk1", sc.classification_map.to_tensor());
    save_taxonomy(dir + "/taxonomy.json", sc.taxonomy);
    write_ground_truth(dir + "/groundtruth.jsonl", sc.objects);
    write_boxes(dir + "/rois.jsonl", sc.rois);
    if (two_scale) {
        const RenderedMaps fine = render_scenario_maps(sc.config, sc.taxonomy, sc.objects, sc.anchors,
                                                       sc.config.stride / 2.0,
                                                       sc.config.seed ^ 0xc2b2ae3d27d4eb4fULL);
        write_tensor(dir + "/detection2.ddk1", fine.detection.to_tensor());
        write_tensor(dir + "/regression2.ddk1", fine.regression.to_tensor());
        write_tensor(dir + "/classification2.ddk1", fine.classification.to_tensor());
    }
    nlohmann::json manifest{{"width", sc.config.extent.width},
                            {"height", sc.config.extent.height},
                            {"stride", sc.config.stride},
                            {"C", sc.config.num_classes},
                            {"K", sc.config.num_superclasses},
                            {"P", sc.config.pool_grid},
                            {"num_objects", sc.config.num_objects},
                            {"seed", sc.config.seed},
                            {"two_scale", two_scale}};
    std::ofstream os(dir + "/scenario.json");
    if (!os) throw std::runtime_error("write_scenario: cannot open " + dir + "/scenario.json");
    os << manifest.dump(2) << "\n";
}

}  // namespace ddk
