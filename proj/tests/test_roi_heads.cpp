#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ddk/random.hpp"
#include "ddk/roi_heads.hpp"

using namespace ddk;

namespace {

// Independent reference for position-sensitive pooling: plain nested loops
// with its own bilinear lookup, one sample at a time.
double reference_bilinear(const FeatureMap& map, int c, double x, double y) {
    const double u = x - 0.5, v = y - 0.5;
    const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
    double result = 0.0;
    for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
            const int cx = x0 + dx, cy = y0 + dy;
            if (cx < 0 || cy < 0 || cx >= map.width || cy >= map.height) continue;
            const double wx = dx == 0 ? 1.0 - (u - x0) : u - x0;
            const double wy = dy == 0 ? 1.0 - (v - y0) : v - y0;
            result += wx * wy * map.at(c, cy, cx);
        }
    }
    return result;
}

std::vector<double> psroi_reference(const FeatureMap& map, const BBox& roi, int p, int g) {
    std::vector<double> out(g, 0.0);
    const double x1 = roi.x1 / map.stride, y1 = roi.y1 / map.stride;
    const double bw = (roi.x2 - roi.x1) / map.stride / p;
    const double bh = (roi.y2 - roi.y1) / map.stride / p;
    for (int group = 0; group < g; ++group) {
        double group_sum = 0.0;
        for (int i = 0; i < p; ++i) {
            for (int j = 0; j < p; ++j) {
                double bin_sum = 0.0;
                for (double fy : {0.25, 0.75})
                    for (double fx : {0.25, 0.75})
                        bin_sum += reference_bilinear(map, group * p * p + i * p + j,
                                                      x1 + (j + fx) * bw, y1 + (i + fy) * bh);
                group_sum += bin_sum / 4.0;
            }
        }
        out[group] = group_sum / (p * p);
    }
    return out;
}

FeatureMap random_map(Rng& rng, int h, int w, int ch, double stride) {
    FeatureMap m(h, w, ch, stride);
    for (float& v : m.data) v = static_cast<float>(rng.normal(0, 2));
    return m;
}

}  // namespace

TEST_CASE("psroi pooling of a constant map returns the constant") {
    for (int p : {1, 3, 7}) {
        for (int g : {1, 2, 5}) {
            FeatureMap m(20, 20, g * p * p, 1.0);
            std::fill(m.data.begin(), m.data.end(), 3.25f);
            const auto pooled = psroi_pool(m, BBox(2.3, 4.1, 15.9, 17.2), p, g);
            REQUIRE(pooled.values.size() == static_cast<std::size_t>(g));
            for (double v : pooled.values) CHECK_THAT(v, Catch::Matchers::WithinAbs(3.25, 1e-6));
        }
    }
}

TEST_CASE("psroi with P=1, G=1 averages the four sampled points") {
    Rng rng(5);
    FeatureMap m = random_map(rng, 10, 10, 1, 1.0);
    const BBox roi(2, 3, 8, 7);
    double expected = 0.0;
    for (double fy : {0.25, 0.75})
        for (double fx : {0.25, 0.75})
            expected += reference_bilinear(m, 0, roi.x1 + fx * roi.width(), roi.y1 + fy * roi.height());
    expected /= 4.0;
    CHECK_THAT(psroi_pool(m, roi, 1, 1).values[0], Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("psroi matches the nested-loop reference on a linear ramp") {
    FeatureMap m(4, 4, 4, 1.0);  // single group, P=2
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 4; ++c) m.at(c, y, x) = static_cast<float>(x + 2 * y);
    const BBox roi(0.5, 0.5, 3.5, 3.5);
    const auto pooled = psroi_pool(m, roi, 2, 1);
    const auto expected = psroi_reference(m, roi, 2, 1);
    CHECK_THAT(pooled.values[0], Catch::Matchers::WithinAbs(expected[0], 1e-5));
}

TEST_CASE("psroi matches the reference on randomized cases") {
    Rng rng(9);
    for (int p : {1, 3, 7}) {
        for (int g : {1, 2, 5}) {
            for (int trial = 0; trial < 5; ++trial) {
                const double stride = trial % 2 == 0 ? 1.0 : 16.0;
                FeatureMap m = random_map(rng, 12 + static_cast<int>(rng.uniform_index(8)),
                                          12 + static_cast<int>(rng.uniform_index(8)), g * p * p, stride);
                const double x1 = rng.uniform(0, 4 * stride), y1 = rng.uniform(0, 4 * stride);
                const BBox roi(x1, y1, x1 + rng.uniform(2, 7) * stride, y1 + rng.uniform(2, 7) * stride);
                const auto pooled = psroi_pool(m, roi, p, g);
                const auto expected = psroi_reference(m, roi, p, g);
                for (int i = 0; i < g; ++i)
                    CHECK_THAT(pooled.values[i], Catch::Matchers::WithinAbs(expected[i], 1e-5));
            }
        }
    }
}

TEST_CASE("psroi is equivariant to integer cell shifts") {
    Rng rng(21);
    const int shift_x = 3, shift_y = 2;
    FeatureMap a = random_map(rng, 16, 16, 2 * 2 * 2, 4.0);
    FeatureMap b(16, 16, 8, 4.0);
    for (int c = 0; c < 8; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const int sy = y - shift_y, sx = x - shift_x;
                b.at(c, y, x) = (sy >= 0 && sx >= 0 && sy < 16 && sx < 16) ? a.at(c, sy, sx) : 0.0f;
            }
    const BBox roi(8, 8, 36, 32);  // interior in both maps
    const BBox shifted(roi.x1 + shift_x * 4.0, roi.y1 + shift_y * 4.0,
                       roi.x2 + shift_x * 4.0, roi.y2 + shift_y * 4.0);
    const auto va = psroi_pool(a, roi, 2, 2);
    const auto vb = psroi_pool(b, shifted, 2, 2);
    for (int i = 0; i < 2; ++i) CHECK_THAT(va.values[i], Catch::Matchers::WithinAbs(vb.values[i], 1e-9));
}

TEST_CASE("psroi validates channels and flags degenerate rois") {
    FeatureMap m(4, 4, 5, 1.0);
    CHECK_THROWS_AS(psroi_pool(m, BBox(0, 0, 2, 2), 2, 1), std::invalid_argument);

    FeatureMap ok(4, 4, 4, 1.0);
    std::fill(ok.data.begin(), ok.data.end(), 7.0f);
    const auto pooled = psroi_pool(ok, BBox(1, 1, 1, 3), 2, 1);
    CHECK(pooled.degenerate);
    CHECK(pooled.values == std::vector<double>{0.0});
}

TEST_CASE("softmax over pooled logits") {
    const auto uniform = superclass_probabilities({1.5, 1.5, 1.5});
    for (double v : uniform) CHECK_THAT(v, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));

    // Hand evaluation with K=1: logits (0, ln 3) -> (1/4, 3/4).
    const auto probs = superclass_probabilities({0.0, std::log(3.0)});
    CHECK_THAT(probs[0], Catch::Matchers::WithinAbs(0.25, 1e-12));
    CHECK_THAT(probs[1], Catch::Matchers::WithinAbs(0.75, 1e-12));

    const auto shifted = superclass_probabilities({100.0, 100.0 + std::log(3.0)});
    CHECK_THAT(shifted[0], Catch::Matchers::WithinAbs(0.25, 1e-12));
    CHECK_THAT(shifted[1], Catch::Matchers::WithinAbs(0.75, 1e-12));

    const auto huge = superclass_probabilities({1e4, 0.0});
    CHECK(std::isfinite(huge[0]));
    CHECK_THAT(huge[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("classify_roi averages then softmaxes") {
    FeatureMap m(10, 10, 2, 1.0);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            m.at(0, y, x) = 0.0f;
            m.at(1, y, x) = static_cast<float>(std::log(3.0));
        }
    const auto probs = classify_roi(m, BBox(2, 2, 8, 8));
    CHECK_THAT(probs.values[0], Catch::Matchers::WithinAbs(0.25, 1e-6));
    CHECK_THAT(probs.values[1], Catch::Matchers::WithinAbs(0.75, 1e-6));

    // All channels identical -> uniform.
    FeatureMap same(10, 10, 4, 1.0);
    Rng rng(2);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            const float v = static_cast<float>(rng.normal());
            for (int c = 0; c < 4; ++c) same.at(c, y, x) = v;
        }
    const auto u = classify_roi(same, BBox(1, 1, 9, 9));
    for (double v : u.values) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.25, 1e-9));

    // Zero-area RoI -> uniform, flagged degenerate.
    const auto degen = classify_roi(same, BBox(3, 3, 3, 3));
    CHECK(degen.degenerate);
    for (double v : degen.values) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.25, 1e-12));
}

TEST_CASE("classify_roi output sums to 1 on random maps and rois") {
    Rng rng(33);
    for (int trial = 0; trial < 1000; ++trial) {
        FeatureMap m = random_map(rng, 8, 8, 3, 1.0);
        const double x1 = rng.uniform(0, 5), y1 = rng.uniform(0, 5);
        const auto probs = classify_roi(m, BBox(x1, y1, x1 + rng.uniform(0.5, 3), y1 + rng.uniform(0.5, 3)));
        double sum = 0.0;
        for (double v : probs.values) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
}

TEST_CASE("combine_scores multiplies through the taxonomy") {
    Taxonomy tax;
    tax.num_classes = 3;
    tax.num_superclasses = 1;
    tax.assignment = {0, 0, 0};
    tax.centroids = {{0.0}};
    tax.rebuild_members();

    const auto combined = combine_scores({0.8, 0.2}, {0.5, 0.3, 0.2}, tax);
    CHECK_THAT(combined[0], Catch::Matchers::WithinAbs(0.40, 1e-12));
    CHECK_THAT(combined[1], Catch::Matchers::WithinAbs(0.24, 1e-12));
    CHECK_THAT(combined[2], Catch::Matchers::WithinAbs(0.16, 1e-12));

    const auto zeros = combine_scores({0.0, 1.0}, {0.5, 0.3, 0.2}, tax);
    for (double v : zeros) CHECK(v == 0.0);

    const auto onehot = combine_scores({0.6, 0.4}, {0.0, 1.0, 0.0}, tax);
    CHECK(onehot[0] == 0.0);
    CHECK_THAT(onehot[1], Catch::Matchers::WithinAbs(0.6, 1e-12));
    CHECK(onehot[2] == 0.0);

    CHECK_THROWS_AS(combine_scores({0.5, 0.5, 0.0}, {0.5, 0.3, 0.2}, tax), std::invalid_argument);
    CHECK_THROWS_AS(combine_scores({0.5, 0.5}, {0.5, 0.5}, tax), std::invalid_argument);
}

TEST_CASE("combined scores are bounded by the largest super-class probability") {
    Rng rng(55);
    Taxonomy tax;
    tax.num_classes = 6;
    tax.num_superclasses = 2;
    tax.assignment = {0, 1, 0, 1, 0, 1};
    tax.centroids = {{0.0}, {1.0}};
    tax.rebuild_members();
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> sp(3), cp(6);
        for (double& v : sp) v = rng.uniform(0, 1);
        for (double& v : cp) v = rng.uniform(0, 1);
        double zs = sp[0] + sp[1] + sp[2], zc = 0;
        for (double v : cp) zc += v;
        for (double& v : sp) v /= zs;
        for (double& v : cp) v /= zc;
        const auto combined = combine_scores(sp, cp, tax);
        double total = 0.0;
        for (int c = 0; c < 6; ++c) {
            CHECK_THAT(combined[c], Catch::Matchers::WithinAbs(sp[tax.assignment[c]] * cp[c], 1e-15));
            total += combined[c];
        }
        CHECK(total <= std::max(sp[0], std::max(sp[1], sp[2])) + 1e-12);
        CHECK(total <= 1.0 + 1e-12);
    }
}

TEST_CASE("score_roi composes the head on constant maps") {
    HeadConfig cfg;
    cfg.num_superclasses = 2;
    cfg.num_classes = 4;
    cfg.pool_grid = 3;
    cfg.taxonomy = [] {
        Taxonomy t;
        t.num_classes = 4;
        t.num_superclasses = 2;
        t.assignment = {0, 0, 1, 1};
        t.centroids = {{0.0}, {1.0}};
        t.rebuild_members();
        return t;
    }();

    FeatureMap det(16, 16, cfg.detection_channels(), 1.0);
    FeatureMap reg(16, 16, cfg.regression_channels(), 1.0);
    FeatureMap cls(16, 16, cfg.num_classes, 1.0);
    std::fill(det.data.begin(), det.data.end(), 1.0f);
    std::fill(cls.data.begin(), cls.data.end(), -2.0f);

    const RoIScores s = score_roi(det, reg, cls, BBox(4, 4, 12, 12), cfg);
    for (double v : s.superclass_probs) CHECK_THAT(v, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-9));
    for (double v : s.class_probs) CHECK_THAT(v, Catch::Matchers::WithinAbs(0.25, 1e-9));
    CHECK_THAT(s.deltas.dx, Catch::Matchers::WithinAbs(0.0, 1e-9));
    CHECK_THAT(s.deltas.dh, Catch::Matchers::WithinAbs(0.0, 1e-9));
    for (int c = 0; c < 4; ++c)
        CHECK_THAT(s.final_scores[c], Catch::Matchers::WithinAbs(s.superclass_probs[cfg.taxonomy.assignment[c]] * 0.25, 1e-12));

    FeatureMap bad(16, 16, 5, 1.0);
    CHECK_THROWS_AS(score_roi(bad, reg, cls, BBox(1, 1, 4, 4), cfg), std::invalid_argument);
}

TEST_CASE("K=1 reproduces the objectness-times-classification detector") {
    HeadConfig cfg;
    cfg.num_superclasses = 1;
    cfg.num_classes = 3;
    cfg.pool_grid = 2;
    cfg.taxonomy = [] {
        Taxonomy t;
        t.num_classes = 3;
        t.num_superclasses = 1;
        t.assignment = {0, 0, 0};
        t.centroids = {{0.0}};
        t.rebuild_members();
        return t;
    }();

    Rng rng(8);
    FeatureMap det(12, 12, cfg.detection_channels(), 1.0);
    FeatureMap reg(12, 12, cfg.regression_channels(), 1.0);
    FeatureMap cls(12, 12, 3, 1.0);
    for (float& v : det.data) v = static_cast<float>(rng.normal());
    for (float& v : cls.data) v = static_cast<float>(rng.normal());

    const RoIScores s = score_roi(det, reg, cls, BBox(3, 3, 9, 9), cfg);
    const double objectness = s.superclass_probs[0];
    for (int c = 0; c < 3; ++c)
        CHECK_THAT(s.final_scores[c], Catch::Matchers::WithinAbs(objectness * s.class_probs[c], 1e-15));
}

TEST_CASE("rpn objectness mode") {
    const ImageExtent extent(200, 200);
    const BBox anchor(10, 10, 60, 60);
    const std::vector<double> cp = {0.5, 0.3, 0.2};

    const auto pass = rpn_objectness_mode(0.9, cp, false, RegressionDelta{1, 1, 1, 1}, anchor, extent);
    CHECK(pass.box == anchor);
    CHECK_THAT(pass.final_scores[0], Catch::Matchers::WithinAbs(0.45, 1e-12));

    const auto ident = rpn_objectness_mode(1.0, cp, false, RegressionDelta{}, anchor, extent);
    CHECK(ident.final_scores == cp);

    const auto refined = rpn_objectness_mode(0.9, cp, true, RegressionDelta{0.1, 0, 0, 0}, anchor, extent);
    CHECK(refined.box.x1 != anchor.x1);
    CHECK_THAT(refined.box.center_x(), Catch::Matchers::WithinAbs(anchor.center_x() + 5.0, 1e-9));
}
