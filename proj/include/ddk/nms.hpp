#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddk/geometry.hpp"
#include "ddk/taxonomy.hpp"

namespace ddk {

struct Detection {
    BBox box;
    int class_id = 0;
    double score = 0.0;

    bool operator==(const Detection& o) const {
        return box == o.box && class_id == o.class_id && score == o.score;
    }
};

// Total mapping class_id -> NMS cluster id in [0, num_clusters).
struct NmsClusters {
    std::vector<int> class_to_cluster;
    int num_clusters = 0;

    int cluster_of(int class_id) const {
        if (class_id < 0 || class_id >= static_cast<int>(class_to_cluster.size()))
            throw std::invalid_argument("NmsClusters: class " + std::to_string(class_id) + " is not mapped");
        return class_to_cluster[class_id];
    }

    // One class per cluster: clustered NMS degenerates to per-class NMS.
    static NmsClusters singletons(int num_classes) {
        NmsClusters c;
        c.num_clusters = num_classes;
        c.class_to_cluster.resize(num_classes);
        std::iota(c.class_to_cluster.begin(), c.class_to_cluster.end(), 0);
        return c;
    }

    // All classes in one cluster: degenerates to class-agnostic NMS.
    static NmsClusters single(int num_classes) {
        NmsClusters c;
        c.num_clusters = 1;
        c.class_to_cluster.assign(num_classes, 0);
        return c;
    }

    // Contiguous class ranges, class c -> floor(c*M/C).
    static NmsClusters contiguous(int num_classes, int num_clusters) {
        if (num_clusters < 1 || num_clusters > num_classes)
            throw std::invalid_argument("NmsClusters: need 1 <= M <= C");
        NmsClusters c;
        c.num_clusters = num_clusters;
        c.class_to_cluster.resize(num_classes);
        for (int i = 0; i < num_classes; ++i)
            c.class_to_cluster[i] = static_cast<int>(static_cast<long long>(i) * num_clusters / num_classes);
        return c;
    }

    static NmsClusters from_taxonomy(const Taxonomy& tax) {
        NmsClusters c;
        c.num_clusters = tax.num_superclasses;
        c.class_to_cluster = tax.assignment;
        return c;
    }
};

namespace detail {

// Candidate permutation in suppression priority: score descending, then
// class ascending, then insertion order.
inline std::vector<int> nms_order(const std::vector<Detection>& dets) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return dets[a].class_id < dets[b].class_id;
    });
    return order;
}

// Greedy pass over candidates already in priority order: a candidate is kept
// iff it does not overlap (IoU >= thresh) any previously kept detection in
// the same group. Suppressed boxes never suppress others.
inline void greedy_keep(const std::vector<Detection>& dets, const int* candidates, std::size_t count,
                        double iou_thresh, bool same_class_only, std::vector<int>& kept_out) {
    const std::size_t first_kept = kept_out.size();
    for (std::size_t i = 0; i < count; ++i) {
        const int c = candidates[i];
        bool keep = true;
        for (std::size_t k = first_kept; k < kept_out.size(); ++k) {
            const int kept_idx = kept_out[k];
            if (same_class_only && dets[kept_idx].class_id != dets[c].class_id) continue;
            if (iou(dets[kept_idx].box, dets[c].box) >= iou_thresh) {
                keep = false;
                break;
            }
        }
        if (keep) kept_out.push_back(c);
    }
}

}  // namespace detail

// Greedy NMS. Only detections of the same class suppress each other unless
// ignore_class is set. Kept detections come back in priority order.
inline std::vector<int> nms_indices(const std::vector<Detection>& dets, double iou_thresh = 0.3,
                                    bool ignore_class = false) {
    const std::vector<int> order = detail::nms_order(dets);
    std::vector<int> kept;
    kept.reserve(dets.size());
    detail::greedy_keep(dets, order.data(), order.size(), iou_thresh, !ignore_class, kept);
    return kept;
}

inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh = 0.3,
                                  bool ignore_class = false) {
    std::vector<Detection> out;
    for (int i : nms_indices(dets, iou_thresh, ignore_class)) out.push_back(dets[i]);
    return out;
}

// Class-agnostic greedy NMS within each cluster. Detections are bucketed in
// a single counting pass so empty classes and clusters cost nothing, and the
// merged result is re-ordered deterministically regardless of how buckets
// were processed.
inline std::vector<int> clustered_nms_indices(const std::vector<Detection>& dets,
                                              const NmsClusters& clusters, double iou_thresh = 0.3) {
    const std::size_t n = dets.size();
    std::vector<int> cluster_of(n);
    for (std::size_t i = 0; i < n; ++i) cluster_of[i] = clusters.cluster_of(dets[i].class_id);

    const std::vector<int> order = detail::nms_order(dets);
    std::vector<int> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[order[i]] = static_cast<int>(i);

    // Counting sort of the priority-ordered candidates by cluster keeps each
    // bucket internally in priority order.
    std::vector<int> counts(clusters.num_clusters + 1, 0);
    for (std::size_t i = 0; i < n; ++i) counts[cluster_of[i] + 1]++;
    for (int c = 0; c < clusters.num_clusters; ++c) counts[c + 1] += counts[c];
    std::vector<int> bucketed(n);
    std::vector<int> cursor(counts.begin(), counts.end() - 1);
    for (int idx : order) bucketed[cursor[cluster_of[idx]]++] = idx;

    std::vector<int> kept;
    kept.reserve(n);
    for (int c = 0; c < clusters.num_clusters; ++c) {
        const int begin = counts[c];
        const int end = counts[c + 1];
        if (begin == end) continue;
        detail::greedy_keep(dets, bucketed.data() + begin, static_cast<std::size_t>(end - begin),
                            iou_thresh, /*same_class_only=*/false, kept);
    }
    std::sort(kept.begin(), kept.end(), [&](int a, int b) { return rank[a] < rank[b]; });
    return kept;
}

inline std::vector<Detection> clustered_nms(const std::vector<Detection>& dets, const NmsClusters& clusters,
                                            double iou_thresh = 0.3) {
    std::vector<Detection> out;
    for (int i : clustered_nms_indices(dets, clusters, iou_thresh)) out.push_back(dets[i]);
    return out;
}

// Concatenate detections from two inference scales (same coordinate frame)
// and resolve duplicates with per-class NMS.
inline std::vector<Detection> multiscale_merge(const std::vector<Detection>& dets_scale_a,
                                               const std::vector<Detection>& dets_scale_b,
                                               double iou_thresh = 0.3) {
    std::vector<Detection> all;
    all.reserve(dets_scale_a.size() + dets_scale_b.size());
    all.insert(all.end(), dets_scale_a.begin(), dets_scale_a.end());
    all.insert(all.end(), dets_scale_b.begin(), dets_scale_b.end());
    return nms(all, iou_thresh, /*ignore_class=*/false);
}

// Detections with score >= score_floor, top k by priority order.
inline std::vector<Detection> topk_filter(const std::vector<Detection>& dets, std::size_t k,
                                          double score_floor = 0.0) {
    std::vector<Detection> filtered;
    for (const auto& d : dets)
        if (d.score >= score_floor) filtered.push_back(d);
    const std::vector<int> order = detail::nms_order(filtered);
    std::vector<Detection> out;
    out.reserve(std::min(k, order.size()));
    for (std::size_t i = 0; i < order.size() && i < k; ++i) out.push_back(filtered[order[i]]);
    return out;
}

}  // namespace ddk
