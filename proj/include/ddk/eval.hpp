#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "ddk/geometry.hpp"
#include "ddk/nms.hpp"
#include "ddk/targets.hpp"

namespace ddk {

struct EvalConfig {
    double iou_thresh = 0.5;
    std::optional<std::vector<int>> class_subset;

    void validate() const {
        if (!(iou_thresh > 0.0 && iou_thresh < 1.0))
            throw std::invalid_argument("EvalConfig: iou_thresh must lie in (0,1)");
    }
};

struct PRCurve {
    std::vector<double> recall;     // non-decreasing
    std::vector<double> precision;  // raw, before the envelope
    double ap = 0.0;
};

struct ClassAP {
    int class_id = 0;
    double ap = 0.0;
    int num_gt = 0;
};

struct EvalReport {
    double map = 0.0;
    std::vector<ClassAP> per_class;
};

// Greedy matching for one class: detections must already be sorted by
// descending score (ties by insertion order). Each detection claims the
// still-unmatched ground truth of highest IoU >= thresh; every ground truth
// matches at most once.
inline std::vector<bool> match_detections(const std::vector<BBox>& dets, const std::vector<BBox>& gts,
                                          double iou_thresh) {
    std::vector<bool> tp(dets.size(), false);
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double best = 0.0;
        int best_g = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double v = iou(dets[d], gts[g]);
            if (v >= iou_thresh && v > best) {
                best = v;
                best_g = static_cast<int>(g);
            }
        }
        if (best_g >= 0) {
            tp[d] = true;
            taken[best_g] = true;
        }
    }
    return tp;
}

// All-points interpolated area under the precision-recall curve: the
// precision envelope is made non-increasing before integration. With no
// ground truth, AP is 1 when there are also no detections and 0 otherwise.
inline PRCurve precision_recall(const std::vector<bool>& tp_flags, int num_gt) {
    if (num_gt < 0) throw std::invalid_argument("precision_recall: num_gt must be >= 0");
    PRCurve curve;
    if (num_gt == 0) {
        curve.ap = tp_flags.empty() ? 1.0 : 0.0;
        return curve;
    }
    int tp = 0, fp = 0;
    curve.recall.reserve(tp_flags.size());
    curve.precision.reserve(tp_flags.size());
    for (bool is_tp : tp_flags) {
        is_tp ? ++tp : ++fp;
        curve.recall.push_back(static_cast<double>(tp) / num_gt);
        curve.precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    std::vector<double> envelope(curve.precision);
    for (int i = static_cast<int>(envelope.size()) - 2; i >= 0; --i)
        envelope[i] = std::max(envelope[i], envelope[i + 1]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < envelope.size(); ++i) {
        ap += (curve.recall[i] - prev_recall) * envelope[i];
        prev_recall = curve.recall[i];
    }
    curve.ap = ap;
    return curve;
}

inline double average_precision(const std::vector<bool>& tp_flags, int num_gt) {
    return precision_recall(tp_flags, num_gt).ap;
}

// Dataset mAP. Detections and ground truth are grouped per image (a
// detection can only match ground truth of its own image); AP pools all
// images' detections of one class by score. Classes without ground truth are
// excluded from the mean.
inline EvalReport mean_ap(const std::vector<std::vector<Detection>>& dets_per_image,
                          const std::vector<std::vector<GroundTruth>>& gts_per_image,
                          const EvalConfig& cfg = {}) {
    cfg.validate();
    if (dets_per_image.size() != gts_per_image.size())
        throw std::invalid_argument("mean_ap: detection and ground-truth image counts differ");

    struct ScoredDet {
        double score;
        int image;
        int order;  // insertion order within the image, for stable ties
        BBox box;
    };
    std::map<int, std::vector<ScoredDet>> dets_by_class;
    std::map<int, std::vector<std::vector<BBox>>> gts_by_class;  // class -> per-image boxes
    std::map<int, int> gt_counts;

    const int num_images = static_cast<int>(gts_per_image.size());
    for (int img = 0; img < num_images; ++img) {
        for (const auto& gt : gts_per_image[img]) {
            auto& per_image = gts_by_class[gt.class_id];
            per_image.resize(num_images);
            gts_by_class[gt.class_id][img].push_back(gt.box);
            gt_counts[gt.class_id]++;
        }
        int order = 0;
        for (const auto& d : dets_per_image[img])
            dets_by_class[d.class_id].push_back({d.score, img, order++, d.box});
    }

    EvalReport report;
    double ap_sum = 0.0;
    int counted = 0;
    for (auto& [class_id, gt_images] : gts_by_class) {
        if (cfg.class_subset) {
            const auto& subset = *cfg.class_subset;
            if (std::find(subset.begin(), subset.end(), class_id) == subset.end()) continue;
        }
        gt_images.resize(num_images);
        auto it = dets_by_class.find(class_id);
        std::vector<ScoredDet> dets = it == dets_by_class.end() ? std::vector<ScoredDet>{} : it->second;
        std::stable_sort(dets.begin(), dets.end(), [](const ScoredDet& a, const ScoredDet& b) {
            return a.score > b.score;
        });

        // Match per image against that image's ground truth, walking the
        // pooled score ranking.
        std::vector<std::vector<bool>> taken(num_images);
        for (int img = 0; img < num_images; ++img) taken[img].assign(gt_images[img].size(), false);
        std::vector<bool> flags(dets.size(), false);
        for (std::size_t d = 0; d < dets.size(); ++d) {
            const auto& gt_boxes = gt_images[dets[d].image];
            auto& used = taken[dets[d].image];
            double best = 0.0;
            int best_g = -1;
            for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
                if (used[g]) continue;
                const double v = iou(dets[d].box, gt_boxes[g]);
                if (v >= cfg.iou_thresh && v > best) {
                    best = v;
                    best_g = static_cast<int>(g);
                }
            }
            if (best_g >= 0) {
                flags[d] = true;
                used[best_g] = true;
            }
        }

        const double ap = average_precision(flags, gt_counts[class_id]);
        report.per_class.push_back({class_id, ap, gt_counts[class_id]});
        ap_sum += ap;
        counted++;
    }
    report.map = counted > 0 ? ap_sum / counted : 0.0;
    return report;
}

// Single-image convenience overload.
inline EvalReport mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                          const EvalConfig& cfg = {}) {
    return mean_ap(std::vector<std::vector<Detection>>{dets}, std::vector<std::vector<GroundTruth>>{gts}, cfg);
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& c : r.per_class)
        per_class.push_back({{"class", c.class_id}, {"ap", c.ap}, {"num_gt", c.num_gt}});
    return nlohmann::json{{"map", r.map}, {"per_class", std::move(per_class)}};
}

}  // namespace ddk
