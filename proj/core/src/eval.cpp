#include "voidseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace voidseg::eval {

namespace {

void require_same_shape(const LabelMap& gt, const LabelMap& pred) {
    if (gt.shape() != pred.shape()) {
        throw std::invalid_argument("label maps differ in shape: " + to_string(gt.shape()) + " vs " +
                                    to_string(pred.shape()));
    }
}

double iou_of(const OverlapTable& t, const OverlapTable::Cell& c) {
    const auto uni = t.gt_area[c.gt] + t.pred_area[c.pred] - c.intersection;
    return static_cast<double>(c.intersection) / static_cast<double>(uni);
}

}  // namespace

OverlapTable overlap_table(const LabelMap& gt, const LabelMap& pred) {
    require_same_shape(gt, pred);
    std::map<std::int32_t, std::int64_t> gt_count;
    std::map<std::int32_t, std::int64_t> pred_count;
    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> inter;
    auto g = gt.pixels();
    auto p = pred.pixels();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i] != 0) ++gt_count[g[i]];
        if (p[i] != 0) ++pred_count[p[i]];
        if (g[i] != 0 && p[i] != 0) ++inter[{g[i], p[i]}];
    }
    OverlapTable t;
    std::unordered_map<std::int32_t, std::size_t> gt_index, pred_index;
    for (const auto& [id, n] : gt_count) {
        gt_index[id] = t.gt_ids.size();
        t.gt_ids.push_back(id);
        t.gt_area.push_back(n);
    }
    for (const auto& [id, n] : pred_count) {
        pred_index[id] = t.pred_ids.size();
        t.pred_ids.push_back(id);
        t.pred_area.push_back(n);
    }
    t.cells.reserve(inter.size());
    for (const auto& [key, n] : inter) {
        t.cells.push_back({gt_index[key.first], pred_index[key.second], n});
    }
    return t;
}

MatchResult match_for_ap(const LabelMap& gt, const LabelMap& pred, double iou_min) {
    const auto t = overlap_table(gt, pred);
    struct Candidate {
        double iou;
        std::size_t gt, pred;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(t.cells.size());
    for (const auto& c : t.cells) {
        const double iou = iou_of(t, c);
        if (iou >= iou_min) candidates.push_back({iou, c.gt, c.pred});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.gt != b.gt) return a.gt < b.gt;
        return a.pred < b.pred;
    });

    std::vector<bool> gt_used(t.gt_ids.size(), false);
    std::vector<bool> pred_used(t.pred_ids.size(), false);
    MatchResult result;
    for (const auto& c : candidates) {
        if (gt_used[c.gt] || pred_used[c.pred]) continue;
        gt_used[c.gt] = pred_used[c.pred] = true;
        result.pairs.push_back({t.gt_ids[c.gt], t.pred_ids[c.pred], c.iou});
    }
    for (std::size_t i = 0; i < gt_used.size(); ++i) {
        if (!gt_used[i]) result.unmatched_gt.push_back(t.gt_ids[i]);
    }
    for (std::size_t i = 0; i < pred_used.size(); ++i) {
        if (!pred_used[i]) result.unmatched_pred.push_back(t.pred_ids[i]);
    }
    return result;
}

double average_precision(const LabelMap& gt, const LabelMap& pred, double iou_min) {
    const auto m = match_for_ap(gt, pred, iou_min);
    const auto denom = m.tp() + m.fp() + m.fn();
    return denom == 0 ? 1.0 : static_cast<double>(m.tp()) / static_cast<double>(denom);
}

SegDetail seg_detail(const LabelMap& gt, const LabelMap& pred, CoverageRule rule) {
    const auto t = overlap_table(gt, pred);
    SegDetail detail;
    detail.gt_objects = t.gt_ids.size();
    // Under the strict rule at most one prediction covers R; the inclusive
    // rule can tie two halves, in which case the better Jaccard counts.
    std::vector<double> best(t.gt_ids.size(), 0.0);
    for (const auto& c : t.cells) {
        const auto r = t.gt_area[c.gt];
        const bool covers = rule == CoverageRule::StrictMajority ? 2 * c.intersection > r
                                                                 : 2 * c.intersection >= r;
        if (covers) best[c.gt] = std::max(best[c.gt], iou_of(t, c));
    }
    detail.sum_jaccard = std::accumulate(best.begin(), best.end(), 0.0);
    return detail;
}

double seg_score(const LabelMap& gt, const LabelMap& pred, CoverageRule rule) {
    return seg_detail(gt, pred, rule).score();
}

ImageMetrics evaluate_image(const LabelMap& gt, const LabelMap& pred, std::string name, double iou_min) {
    const auto m = match_for_ap(gt, pred, iou_min);
    const auto s = seg_detail(gt, pred);
    ImageMetrics out;
    out.name = std::move(name);
    out.tp = m.tp();
    out.fp = m.fp();
    out.fn = m.fn();
    const auto denom = out.tp + out.fp + out.fn;
    out.ap = denom == 0 ? 1.0 : static_cast<double>(out.tp) / static_cast<double>(denom);
    out.seg = s.score();
    out.gt_objects = s.gt_objects;
    return out;
}

MetricsReport pool(std::vector<ImageMetrics> per_image, double threshold) {
    MetricsReport report;
    report.best_threshold = threshold;
    double seg_sum = 0.0;
    std::size_t gt_objects = 0;
    for (const auto& m : per_image) {
        report.tp += m.tp;
        report.fp += m.fp;
        report.fn += m.fn;
        seg_sum += m.seg * static_cast<double>(m.gt_objects);
        gt_objects += m.gt_objects;
    }
    const auto denom = report.tp + report.fp + report.fn;
    report.ap = denom == 0 ? 1.0 : static_cast<double>(report.tp) / static_cast<double>(denom);
    report.seg = gt_objects == 0 ? 1.0 : seg_sum / static_cast<double>(gt_objects);
    report.per_image = std::move(per_image);
    return report;
}

MetricsReport evaluate(const std::vector<LabelMap>& gt, const std::vector<LabelMap>& pred,
                       double threshold, double iou_min) {
    if (gt.size() != pred.size()) {
        throw std::invalid_argument("evaluate: ground truth and prediction counts differ");
    }
    std::vector<ImageMetrics> per_image;
    per_image.reserve(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        per_image.push_back(evaluate_image(gt[i], pred[i], std::to_string(i), iou_min));
    }
    return pool(std::move(per_image), threshold);
}

MeanSe mean_se(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_se of empty list");
    MeanSe out;
    out.n = values.size();
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(out.n);
    if (out.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        const double sample_std = std::sqrt(ss / static_cast<double>(out.n - 1));
        out.se = sample_std / std::sqrt(static_cast<double>(out.n));
    }
    return out;
}

Summary aggregate(const std::vector<MetricsReport>& runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate requires at least one run");
    std::vector<double> ap, seg;
    for (const auto& r : runs) {
        ap.push_back(r.ap);
        seg.push_back(r.seg);
    }
    return {mean_se(ap), mean_se(seg)};
}

}  // namespace voidseg::eval
