#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "voidseg/eval.hpp"
#include "voidseg/postprocess.hpp"
#include "voidseg/targets.hpp"

using namespace voidseg;
using namespace voidseg::infer;

namespace {

std::vector<RawImage> distance_planes(const targets::StarTarget& t) {
    std::vector<RawImage> planes;
    for (int k = 0; k < t.n_rays; ++k) {
        RawImage p(t.shape);
        for (int y = 0; y < t.shape.height; ++y) {
            for (int x = 0; x < t.shape.width; ++x) p(y, x) = t.distance(k, y, x);
        }
        planes.push_back(std::move(p));
    }
    return planes;
}

PolygonCandidate disk_candidate(int cy, int cx, float r, double score) {
    return make_candidate({cy, cx}, std::vector<float>(32, r), score);
}

}  // namespace

TEST(Components, FourConnectedRasterOrder) {
    BinaryMask mask(Shape{5, 5}, 0);
    mask(0, 3) = mask(0, 4) = 1;  // first in raster order
    mask(2, 0) = 1;
    mask(3, 1) = 1;  // diagonal only: separate component
    const auto labels = label_components(mask);
    EXPECT_EQ(labels(0, 3), 1);
    EXPECT_EQ(labels(0, 4), 1);
    EXPECT_EQ(labels(2, 0), 2);
    EXPECT_EQ(labels(3, 1), 3);
}

TEST(Components, ThresholdExamples) {
    RawImage prob(Shape{10, 10}, 0.0f);
    EXPECT_EQ(max_label(fg_threshold_to_instances(prob, 0.5)), 0);
    for (int y = 1; y < 4; ++y) {
        for (int x = 1; x < 4; ++x) prob(y, x) = 0.9f;
    }
    for (int y = 6; y < 9; ++y) {
        for (int x = 5; x < 9; ++x) prob(y, x) = 0.9f;
    }
    EXPECT_EQ(max_label(fg_threshold_to_instances(prob, 0.5)), 2);
    prob(0, 0) = 1.0f;
    EXPECT_EQ(max_label(fg_threshold_to_instances(prob, 1.0)), 0);
}

TEST(Components, RaisingThresholdNeverAddsForeground) {
    Rng rng(1);
    RawImage prob(Shape{32, 32});
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : prob) v = u(rng);
    std::size_t last = prob.size() + 1;
    for (double t = 0.0; t <= 1.0; t += 0.05) {
        const auto labels = fg_threshold_to_instances(prob, t);
        const auto fg = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v > 0; }));
        EXPECT_LE(fg, last);
        last = fg;
    }
}

TEST(Raster, MatchesPointInPolygonOracle) {
    Rng rng(17);
    std::uniform_real_distribution<double> centre(4.0, 20.0), radius(0.3, 9.0), jitter(-0.5, 0.5);
    for (int trial = 0; trial < 200; ++trial) {
        const Shape shape{24, 26};
        const double cy = centre(rng), cx = centre(rng);
        std::vector<PointF> poly;
        const int n = trial % 2 == 0 ? 32 : 7;
        for (int k = 0; k < n; ++k) {
            const double a = 2.0 * std::numbers::pi * k / n;
            const double r = radius(rng);
            poly.push_back({cy + r * std::sin(a) + jitter(rng), cx + r * std::cos(a) + jitter(rng)});
        }
        const auto fast = rasterize(poly, shape);
        const auto slow = testkit::naive_polygon_raster(poly, shape);
        std::vector<std::int32_t> expected;
        for (int y = 0; y < shape.height; ++y) {
            for (int x = 0; x < shape.width; ++x) {
                if (slow(y, x)) expected.push_back(y * shape.width + x);
            }
        }
        ASSERT_EQ(fast.pixels, expected) << "trial " << trial;
    }
}

TEST(Raster, SquareFootprint) {
    const std::vector<PointF> square{{1.5, 1.5}, {1.5, 4.5}, {4.5, 4.5}, {4.5, 1.5}};
    const auto labels = render_polygons({{{3, 3}, square, 0.9}}, {8, 8});
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            EXPECT_EQ(labels(y, x), (y >= 2 && y <= 4 && x >= 2 && x <= 4) ? 1 : 0) << y << "," << x;
        }
    }
}

TEST(Raster, IouOfIdenticalAndDisjoint) {
    const auto a = rasterize(disk_candidate(10, 10, 4, 1).vertices, {32, 32});
    const auto b = rasterize(disk_candidate(25, 25, 4, 1).vertices, {32, 32});
    EXPECT_DOUBLE_EQ(raster_iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(raster_iou(a, b), 0.0);
    EXPECT_DOUBLE_EQ(raster_iou(RasterPolygon{}, RasterPolygon{}), 0.0);
}

TEST(Nms, EmptyWhenNothingAboveThreshold) {
    RawImage prob(Shape{8, 8}, 0.2f);
    std::vector<RawImage> d(32, RawImage(Shape{8, 8}, 2.0f));
    EXPECT_TRUE(stardist_nms(prob, d, 0.5).empty());
    EXPECT_EQ(max_label(render_polygons({}, {8, 8})), 0);
}

TEST(Nms, DuplicateSuppressed) {
    const auto kept = suppress({disk_candidate(10, 10, 5, 0.9), disk_candidate(10, 10, 5, 0.8)}, {32, 32});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
}

TEST(Nms, MatchesSequentialAcceptOracle) {
    Rng rng(5);
    std::uniform_int_distribution<int> pos(4, 27);
    std::uniform_real_distribution<float> rad(2.0f, 7.0f);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    const Shape shape{32, 32};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PolygonCandidate> cands;
        const int n = std::uniform_int_distribution<int>(1, 12)(rng);
        for (int i = 0; i < n; ++i) cands.push_back(disk_candidate(pos(rng), pos(rng), rad(rng), score(rng)));
        auto sorted = cands;
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
        std::vector<LabelMap> accepted;
        std::vector<double> accepted_scores;
        for (const auto& c : sorted) {
            const auto r = testkit::naive_polygon_raster(c.vertices, shape);
            bool ok = true;
            for (const auto& a : accepted) ok = ok && testkit::object_iou(r, 1, a, 1) <= 0.4;
            if (ok) {
                accepted.push_back(r);
                accepted_scores.push_back(c.score);
            }
        }
        const auto kept = suppress(cands, shape, 0.4);
        ASSERT_EQ(kept.size(), accepted.size());
        for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(kept[i].score, accepted_scores[i]);
        // idempotent on its own output
        const auto again = suppress(kept, shape, 0.4);
        ASSERT_EQ(again.size(), kept.size());
    }
}

TEST(Render, HigherScoreKeepsContestedPixels) {
    const auto a = disk_candidate(10, 10, 5, 0.6);
    const auto b = disk_candidate(10, 15, 5, 0.9);
    const auto labels = render_polygons({a, b}, {24, 24});
    EXPECT_EQ(labels(10, 15), 1);  // b rendered first
    EXPECT_EQ(labels(10, 6), 2);
    std::size_t total = 0;
    for (auto v : labels) total += v != 0;
    const auto ra = rasterize(a.vertices, {24, 24});
    const auto rb = rasterize(b.vertices, {24, 24});
    std::vector<std::int32_t> both;
    std::set_intersection(ra.pixels.begin(), ra.pixels.end(), rb.pixels.begin(), rb.pixels.end(),
                          std::back_inserter(both));
    EXPECT_FALSE(both.empty());
    EXPECT_EQ(total, ra.pixels.size() + rb.pixels.size() - both.size());
}

TEST(Render, GroundTruthTargetsReconstructInstances) {
    Rng rng(12);
    std::uniform_real_distribution<double> r(4.0, 10.0), a(0.0, 3.14);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMap labels(Shape{48, 48}, 0);
        testkit::paint_ellipse(labels, 14, 14, r(rng), r(rng), a(rng), 1);
        testkit::paint_ellipse(labels, 33, 33, r(rng), r(rng), a(rng), 2, true);
        const auto t = targets::star_distances(labels);
        const auto cands = stardist_nms(t.object_prob, distance_planes(t), 0.5);
        const auto rendered = render_polygons(cands, labels.shape());
        const auto match = eval::match_for_ap(labels, rendered, 0.8);
        EXPECT_EQ(match.tp(), 2u) << "trial " << trial;
    }
}

TEST(Sweep, ArgmaxAndTies) {
    const std::vector<double> grid{0.1, 0.2, 0.3, 0.4};
    const auto r = sweep(grid, [](double t) { return t == 0.3 ? 0.9 : 0.2; });
    EXPECT_DOUBLE_EQ(r.best_threshold, 0.3);
    EXPECT_DOUBLE_EQ(r.best_ap, 0.9);
    const auto flat = sweep(grid, [](double) { return 0.5; });
    EXPECT_DOUBLE_EQ(flat.best_threshold, 0.1);
    const auto single = sweep({0.7}, [](double) { return 0.0; });
    EXPECT_DOUBLE_EQ(single.best_threshold, 0.7);
    EXPECT_THROW(sweep({}, [](double) { return 0.0; }), std::invalid_argument);
}

TEST(Sweep, DefaultGrid) {
    const auto g = default_threshold_grid();
    ASSERT_EQ(g.size(), 17u);
    EXPECT_NEAR(g.front(), 0.1, 1e-12);
    EXPECT_NEAR(g.back(), 0.9, 1e-12);
}
