#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "voidseg/image.hpp"

namespace voidseg::eval {

inline constexpr double kDefaultIouMin = 0.5;

struct MatchedPair {
    std::int32_t gt_id = 0;
    std::int32_t pred_id = 0;
    double iou = 0.0;
};

struct MatchResult {
    std::vector<MatchedPair> pairs;
    std::vector<std::int32_t> unmatched_gt;
    std::vector<std::int32_t> unmatched_pred;

    [[nodiscard]] std::size_t tp() const { return pairs.size(); }
    [[nodiscard]] std::size_t fp() const { return unmatched_pred.size(); }
    [[nodiscard]] std::size_t fn() const { return unmatched_gt.size(); }
};

/// Per-object pixel counts and pairwise intersections of two label maps.
struct OverlapTable {
    std::vector<std::int32_t> gt_ids;    ///< sorted
    std::vector<std::int32_t> pred_ids;  ///< sorted
    std::vector<std::int64_t> gt_area;
    std::vector<std::int64_t> pred_area;
    /// (gt index, pred index, intersection), only non-zero intersections
    struct Cell {
        std::size_t gt = 0;
        std::size_t pred = 0;
        std::int64_t intersection = 0;
    };
    std::vector<Cell> cells;
};

OverlapTable overlap_table(const LabelMap& gt, const LabelMap& pred);

/// Greedy one-to-one matching in descending IoU order, keeping IoU >= iou_min.
MatchResult match_for_ap(const LabelMap& gt, const LabelMap& pred, double iou_min = kDefaultIouMin);

/// tp / (tp + fp + fn); 1 when both maps are empty.
double average_precision(const LabelMap& gt, const LabelMap& pred, double iou_min = kDefaultIouMin);

enum class CoverageRule {
    StrictMajority,  ///< |R n S| > |R| / 2
    AtLeastHalf,     ///< |R n S| >= |R| / 2
};

struct SegDetail {
    double sum_jaccard = 0.0;
    std::size_t gt_objects = 0;
    [[nodiscard]] double score() const {
        return gt_objects == 0 ? 1.0 : sum_jaccard / static_cast<double>(gt_objects);
    }
};

SegDetail seg_detail(const LabelMap& gt, const LabelMap& pred,
                     CoverageRule rule = CoverageRule::StrictMajority);

/// Mean Jaccard over ground-truth objects against the prediction covering
/// more than half of each; 1 when the ground truth is empty.
double seg_score(const LabelMap& gt, const LabelMap& pred,
                 CoverageRule rule = CoverageRule::StrictMajority);

struct ImageMetrics {
    std::string name;
    std::size_t tp = 0, fp = 0, fn = 0;
    double ap = 0.0;
    double seg = 0.0;
    std::size_t gt_objects = 0;
};

/// Dataset-level scores: AP pools tp/fp/fn over images, SEG averages over
/// all ground-truth objects.
struct MetricsReport {
    double ap = 0.0;
    double seg = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    double best_threshold = 0.0;
    std::vector<ImageMetrics> per_image;
};

ImageMetrics evaluate_image(const LabelMap& gt, const LabelMap& pred, std::string name = {},
                            double iou_min = kDefaultIouMin);

/// Pools a list of per-image results into a report.
MetricsReport pool(std::vector<ImageMetrics> per_image, double threshold);

MetricsReport evaluate(const std::vector<LabelMap>& gt, const std::vector<LabelMap>& pred,
                       double threshold, double iou_min = kDefaultIouMin);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error (sample std / sqrt(n)); se is 0 for n = 1.
MeanSe mean_se(const std::vector<double>& values);

struct Summary {
    MeanSe ap;
    MeanSe seg;
};

Summary aggregate(const std::vector<MetricsReport>& runs);

}  // namespace voidseg::eval
