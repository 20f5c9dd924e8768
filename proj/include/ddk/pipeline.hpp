#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ddk/anchors.hpp"
#include "ddk/geometry.hpp"
#include "ddk/nms.hpp"
#include "ddk/random.hpp"
#include "ddk/roi_heads.hpp"
#include "ddk/tensor.hpp"

namespace ddk {

enum class NmsMode { PerClass, Clustered, Agnostic };

inline NmsMode nms_mode_from_string(const std::string& s) {
    if (s == "per-class") return NmsMode::PerClass;
    if (s == "clustered") return NmsMode::Clustered;
    if (s == "agnostic") return NmsMode::Agnostic;
    throw std::invalid_argument("unknown nms mode \"" + s + "\" (per-class|clustered|agnostic)");
}

struct PipelineConfig {
    int num_classes = 50;      // C
    int num_superclasses = 1;  // K
    int pool_grid = 7;         // P
    AnchorConfig anchors;
    NmsMode nms_mode = NmsMode::PerClass;
    int nms_clusters = 1;      // M, used in clustered mode
    double nms_iou = 0.3;
    double score_floor = 0.25;
    std::size_t top_k = 100;
    std::uint64_t seed = 1;
    double w_cls = 0.05;
    std::size_t roi_budget = 300;
    int threads = 0;  // 0 = hardware concurrency; never affects results

    void validate() const {
        if (num_superclasses > num_classes) throw std::invalid_argument("PipelineConfig: K must be <= C");
        if (num_superclasses < 1 || num_classes < 1) throw std::invalid_argument("PipelineConfig: K, C must be >= 1");
        if (nms_mode == NmsMode::Clustered && (nms_clusters < 1 || nms_clusters > num_classes))
            throw std::invalid_argument("PipelineConfig: need 1 <= nms_clusters <= C");
        if (!(nms_iou > 0 && nms_iou < 1)) throw std::invalid_argument("PipelineConfig: nms_iou must be in (0,1)");
    }
};

// Index-chunked parallel map; the output only depends on the index, never on
// the thread count or schedule.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, 64));
    if (threads == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct ScoredRoI {
    BBox refined;  // decoded from the pooled deltas, clipped to the image
    RoIScores scores;
};

// Score every RoI against the three maps; scoring is pure per RoI, so it
// fans out across threads with results written by index.
inline std::vector<ScoredRoI> score_rois(const FeatureMap& detection_map, const FeatureMap& regression_map,
                                         const FeatureMap& class_map, const std::vector<BBox>& rois,
                                         const HeadConfig& head, const ImageExtent& extent, int threads = 0) {
    std::vector<ScoredRoI> out(rois.size());
    parallel_for(rois.size(), threads, [&](std::size_t i) {
        out[i].scores = score_roi(detection_map, regression_map, class_map, rois[i], head);
        out[i].refined = decode(out[i].scores.deltas, rois[i], extent);
    });
    return out;
}

// Full post-backbone pipeline for one image: score RoIs, refine boxes, emit
// per-class detections above the floor, suppress per the configured mode,
// keep the top k.
inline std::vector<Detection> detect_image(const FeatureMap& detection_map, const FeatureMap& regression_map,
                                           const FeatureMap& class_map, const std::vector<BBox>& rois,
                                           const Taxonomy& taxonomy, const ImageExtent& extent,
                                           const PipelineConfig& cfg) {
    cfg.validate();
    HeadConfig head;
    head.num_superclasses = cfg.num_superclasses;
    head.num_classes = cfg.num_classes;
    head.pool_grid = cfg.pool_grid;
    head.taxonomy = taxonomy;

    std::vector<BBox> budgeted(rois.begin(),
                               rois.begin() + std::min(cfg.roi_budget, rois.size()));
    const std::vector<ScoredRoI> scored =
        score_rois(detection_map, regression_map, class_map, budgeted, head, extent, cfg.threads);

    std::vector<Detection> dets;
    for (const auto& s : scored)
        for (int c = 0; c < cfg.num_classes; ++c)
            if (s.scores.final_scores[c] >= cfg.score_floor)
                dets.push_back({s.refined, c, s.scores.final_scores[c]});

    std::vector<Detection> kept;
    switch (cfg.nms_mode) {
        case NmsMode::PerClass:
            kept = clustered_nms(dets, NmsClusters::singletons(cfg.num_classes), cfg.nms_iou);
            break;
        case NmsMode::Clustered:
            kept = clustered_nms(dets, NmsClusters::contiguous(cfg.num_classes, cfg.nms_clusters), cfg.nms_iou);
            break;
        case NmsMode::Agnostic:
            kept = clustered_nms(dets, NmsClusters::single(cfg.num_classes), cfg.nms_iou);
            break;
    }
    return topk_filter(kept, cfg.top_k, cfg.score_floor);
}

// ---- NMS benchmark harness -------------------------------------------------

struct BenchRow {
    int clusters = 0;
    std::size_t detections = 0;
    double wall_time_ms = 0.0;
};

// Synthetic benchmark workload shaped like large-class-count detector output:
// blocks of adjacent classes fire on the same 10 scene locations, one box
// per location per class. Within a cluster the boxes at one location
// collapse to a single survivor, so finer partitions keep (re-rank, copy
// out) proportionally more boxes while the suppression scan cost stays flat
// across the sweep.
inline std::vector<Detection> bench_workload(std::uint64_t seed, std::size_t num_detections, int num_classes) {
    Rng rng(seed);
    const int block_classes = std::max(1, num_classes / 20);
    std::vector<Detection> dets;
    dets.reserve(num_detections);
    for (std::size_t i = 0; i < num_detections; ++i) {
        const int class_id = static_cast<int>(i % num_classes);
        const int copy = static_cast<int>(i / num_classes);
        const int block = class_id / block_classes;
        const int slot = (class_id * 7 + copy) % 10;
        const int cell = block * 10 + slot;
        const double cx = (cell % 25) * 150.0 + 75.0 + rng.uniform(-3.0, 3.0);
        const double cy = (cell / 25) * 150.0 + 75.0 + rng.uniform(-3.0, 3.0);
        const double half = 50.0 * rng.uniform(0.97, 1.03);
        dets.push_back({BBox(cx - half, cy - half, cx + half, cy + half), class_id, rng.uniform(0.05, 1.0)});
    }
    return dets;
}

// Median wall-time of clustered NMS per cluster count on a monotonic clock.
// One warm-up pass, then `repetitions` timed passes interleaved round-robin
// across the cluster counts so clock drift hits every configuration equally.
inline std::vector<BenchRow> run_nms_benchmark(const std::vector<Detection>& dets, int num_classes,
                                               const std::vector<int>& cluster_counts, int repetitions,
                                               double iou_thresh = 0.3) {
    std::vector<NmsClusters> clusterings;
    for (int m : cluster_counts) clusterings.push_back(NmsClusters::contiguous(num_classes, m));
    std::vector<std::vector<double>> times(cluster_counts.size());
    for (int rep = 0; rep <= repetitions; ++rep) {
        for (std::size_t c = 0; c < clusterings.size(); ++c) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto kept = clustered_nms(dets, clusterings[c], iou_thresh);
            const auto t1 = std::chrono::steady_clock::now();
            volatile std::size_t keep_alive = kept.size();  // defeat dead-code elimination
            (void)keep_alive;
            if (rep > 0)  // first pass is warm-up
                times[c].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    }
    std::vector<BenchRow> rows;
    for (std::size_t c = 0; c < cluster_counts.size(); ++c) {
        std::sort(times[c].begin(), times[c].end());
        BenchRow row;
        row.clusters = cluster_counts[c];
        row.detections = dets.size();
        row.wall_time_ms = times[c].empty() ? 0.0 : times[c][times[c].size() / 2];
        rows.push_back(row);
    }
    return rows;
}

inline std::string bench_rows_to_csv(const std::vector<BenchRow>& rows) {
    std::string csv = "clusters,detections,wall_time_ms\n";
    for (const auto& r : rows)
        csv += std::to_string(r.clusters) + "," + std::to_string(r.detections) + "," +
               std::to_string(r.wall_time_ms) + "\n";
    return csv;
}

}  // namespace ddk
