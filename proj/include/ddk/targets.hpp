#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "ddk/geometry.hpp"
#include "ddk/roi_heads.hpp"
#include "ddk/taxonomy.hpp"

namespace ddk {

struct GroundTruth {
    BBox box;
    int class_id = 0;
};

// Per-RoI training targets. Detection labels use super-classes 0..K-1 with
// background at index K; the classification label and regression target
// exist only for positives.
struct RoITarget {
    int detection_label = 0;
    std::optional<int> classification_label;
    std::optional<RegressionDelta> regression_target;
    std::optional<int> matched_gt;
};

struct TargetSet {
    int num_superclasses = 0;  // K; background label is K
    std::vector<RoITarget> targets;

    int background_label() const { return num_superclasses; }
};

struct LossReport {
    double detection_loss = 0;
    double regression_loss = 0;
    double classification_loss = 0;
    double total = 0;
    std::vector<int> selected_rois;
};

// An RoI is positive for the super-class of its highest-IoU ground truth when
// that IoU exceeds fg_thresh, and inherits that ground truth's class label and
// regression target; otherwise it is background.
inline TargetSet assign_detection_labels(const std::vector<BBox>& rois, const std::vector<GroundTruth>& gts,
                                         const Taxonomy& taxonomy, double fg_thresh = 0.5) {
    for (const auto& gt : gts)
        if (gt.class_id < 0 || gt.class_id >= taxonomy.num_classes)
            throw std::invalid_argument("assign_detection_labels: gt class outside taxonomy");

    TargetSet ts;
    ts.num_superclasses = taxonomy.num_superclasses;
    ts.targets.resize(rois.size());
    for (std::size_t r = 0; r < rois.size(); ++r) {
        double best_iou = 0.0;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double v = iou(rois[r], gts[g].box);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            }
        }
        RoITarget& t = ts.targets[r];
        if (best_gt >= 0 && best_iou > fg_thresh) {
            const GroundTruth& gt = gts[best_gt];
            t.detection_label = taxonomy.superclass_of(gt.class_id);
            t.classification_label = gt.class_id;
            t.regression_target = encode(gt.box, rois[r]);
            t.matched_gt = best_gt;
        } else {
            t.detection_label = ts.background_label();
        }
    }
    return ts;
}

enum class RpnLabel { Positive, Negative, Ignore };

// Threshold rule plus the argmax rule: the best anchor for each ground truth
// is positive even below pos_thresh, so every ground truth keeps at least one
// positive anchor. Argmax ties break toward the lower anchor index.
inline std::vector<RpnLabel> assign_rpn_labels(const std::vector<BBox>& anchors,
                                               const std::vector<GroundTruth>& gts,
                                               double pos_thresh, double neg_thresh) {
    if (!(pos_thresh > neg_thresh))
        throw std::invalid_argument("assign_rpn_labels: pos_thresh must exceed neg_thresh");
    std::vector<RpnLabel> labels(anchors.size(), RpnLabel::Ignore);
    if (anchors.empty()) return labels;

    std::vector<double> max_iou(anchors.size(), 0.0);
    std::vector<int> gt_argmax(gts.size(), 0);
    std::vector<double> gt_max(gts.size(), -1.0);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double v = iou(anchors[a], gts[g].box);
            max_iou[a] = std::max(max_iou[a], v);
            if (v > gt_max[g]) {
                gt_max[g] = v;
                gt_argmax[g] = static_cast<int>(a);
            }
        }
    }
    for (std::size_t a = 0; a < anchors.size(); ++a) {
        if (max_iou[a] <= neg_thresh) labels[a] = RpnLabel::Negative;
        if (max_iou[a] >= pos_thresh) labels[a] = RpnLabel::Positive;
    }
    for (std::size_t g = 0; g < gts.size(); ++g) labels[gt_argmax[g]] = RpnLabel::Positive;
    return labels;
}

// 0.5 x^2 below |x| = 1, |x| - 0.5 beyond; both branches meet at 0.5.
inline double smooth_l1(double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

// -ln P[label] with the probability floored at 1e-12 so adversarial inputs
// stay finite.
inline double cross_entropy(const std::vector<double>& probs, int label) {
    if (label < 0 || label >= static_cast<int>(probs.size()))
        throw std::invalid_argument("cross_entropy: label out of range");
    return -std::log(std::max(probs[label], 1e-12));
}

// Indices of the B largest losses, ties broken toward the lower index;
// returned in ascending index order.
inline std::vector<int> ohem_select(const std::vector<double>& per_roi_losses, int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("ohem_select: B must be >= 1");
    std::vector<int> order(per_roi_losses.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (per_roi_losses[a] != per_roi_losses[b]) return per_roi_losses[a] > per_roi_losses[b];
        return a < b;
    });
    const std::size_t take = std::min<std::size_t>(batch_size, order.size());
    std::vector<int> selected(order.begin(), order.begin() + take);
    std::sort(selected.begin(), selected.end());
    return selected;
}

// Composite loss on given predictions. Hard-example selection ranks RoIs by
// detection cross-entropy plus smooth-L1 regression loss; the fine-grained
// classification term covers every positive RoI and enters the total with
// weight w_cls. Detection and regression are averaged over the selected set
// (regression over selected positives), classification over all positives.
inline LossReport total_loss(const std::vector<RoIScores>& predictions, const TargetSet& targets,
                             int batch_size, double w_cls = 0.05) {
    if (predictions.size() != targets.targets.size())
        throw std::invalid_argument("total_loss: predictions and targets are misaligned");

    const std::size_t n = predictions.size();
    std::vector<double> det_ce(n, 0.0), reg_loss(n, 0.0), rank_loss(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const RoITarget& t = targets.targets[i];
        det_ce[i] = cross_entropy(predictions[i].superclass_probs, t.detection_label);
        if (t.regression_target) {
            const RegressionDelta& p = predictions[i].deltas;
            const RegressionDelta& g = *t.regression_target;
            reg_loss[i] = smooth_l1(p.dx - g.dx) + smooth_l1(p.dy - g.dy) +
                          smooth_l1(p.dw - g.dw) + smooth_l1(p.dh - g.dh);
        }
        rank_loss[i] = det_ce[i] + reg_loss[i];
    }

    LossReport report;
    if (n == 0) return report;
    report.selected_rois = ohem_select(rank_loss, batch_size);

    int selected_positives = 0;
    for (int i : report.selected_rois) {
        report.detection_loss += det_ce[i];
        if (targets.targets[i].regression_target) {
            report.regression_loss += reg_loss[i];
            selected_positives++;
        }
    }
    report.detection_loss /= static_cast<double>(report.selected_rois.size());
    if (selected_positives > 0) report.regression_loss /= selected_positives;

    int positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (targets.targets[i].classification_label) {
            report.classification_loss += cross_entropy(predictions[i].class_probs,
                                                        *targets.targets[i].classification_label);
            positives++;
        }
    }
    if (positives > 0) report.classification_loss /= positives;

    report.total = report.detection_loss + report.regression_loss + w_cls * report.classification_loss;
    return report;
}

inline nlohmann::json target_set_to_json(const TargetSet& ts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : ts.targets) {
        nlohmann::json j;
        j["detection_label"] = t.detection_label;
        j["classification_label"] = t.classification_label ? nlohmann::json(*t.classification_label) : nlohmann::json();
        j["regression_target"] = t.regression_target
            ? nlohmann::json({t.regression_target->dx, t.regression_target->dy,
                              t.regression_target->dw, t.regression_target->dh})
            : nlohmann::json();
        j["matched_gt"] = t.matched_gt ? nlohmann::json(*t.matched_gt) : nlohmann::json();
        arr.push_back(std::move(j));
    }
    return nlohmann::json{{"K", ts.num_superclasses}, {"targets", std::move(arr)}};
}

inline nlohmann::json loss_report_to_json(const LossReport& r) {
    return nlohmann::json{{"detection_loss", r.detection_loss},
                          {"regression_loss", r.regression_loss},
                          {"classification_loss", r.classification_loss},
                          {"total", r.total},
                          {"selected_rois", r.selected_rois}};
}

}  // namespace ddk
