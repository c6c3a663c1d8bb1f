#pragma once

// Slow reference implementations used to cross-check the library.

#include <cstddef>
#include <vector>

#include "voidseg/image.hpp"
#include "voidseg/postprocess.hpp"

namespace voidseg::testkit {

struct BruteMatch {
    std::size_t tp = 0, fp = 0, fn = 0;
    double ap = 0.0;
};

/// Best one-to-one assignment by exhaustive enumeration, counting pairs
/// with IoU >= iou_min. Pixel sets are compared by direct scans.
BruteMatch brute_force_ap(const LabelMap& gt, const LabelMap& pred, double iou_min = 0.5);

/// For every gt object, tries every pred object and keeps the one covering
/// more than half (or at least half when `inclusive`) with the best Jaccard.
double brute_force_seg(const LabelMap& gt, const LabelMap& pred, bool inclusive = false);

/// Steps along ray k until the label changes or the image ends.
int naive_ray_distance(const LabelMap& labels, int y, int x, int ray, int n_rays);

/// Euclidean distance from (y, x) to the nearest pixel outside its instance,
/// with everything beyond the image border counted as outside.
double naive_edt(const LabelMap& labels, int y, int x);

/// Pixel-centre point-in-polygon (crossing number) rasterization.
LabelMap naive_polygon_raster(const std::vector<infer::PointF>& vertices, Shape shape);

/// Intersection over union of two labelled objects, 0 when both are empty.
double object_iou(const LabelMap& a, std::int32_t id_a, const LabelMap& b, std::int32_t id_b);

}  // namespace voidseg::testkit
