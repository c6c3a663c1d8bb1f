#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "voidseg/image.hpp"

namespace voidseg::infer {

inline constexpr double kDefaultOverlapThreshold = 0.4;

/// Raw network outputs for one image, already activated.
struct Prediction {
    enum class Kind { ThreeClass, Star, Denoise };
    Kind kind = Kind::ThreeClass;
    std::vector<RawImage> class_prob;  ///< background, foreground, border
    RawImage regression;               ///< denoised intensities (joint or denoise head)
    RawImage object_prob;              ///< star head
    std::vector<RawImage> distances;   ///< star head, one map per ray
    std::optional<RawImage> denoised;  ///< first-stage output of sequential pipelines

    [[nodiscard]] const RawImage& foreground() const { return class_prob.at(1); }
};

/// 4-connected components of `fg_prob > threshold`, numbered 1..K in
/// raster order of their first pixel.
LabelMap fg_threshold_to_instances(const RawImage& fg_prob, double threshold);

/// 4-connected components of a binary mask, numbered as above.
LabelMap label_components(const BinaryMask& mask);

struct PointF {
    double y = 0.0;
    double x = 0.0;
};

struct PolygonCandidate {
    PixelCoord center;
    std::vector<PointF> vertices;
    double score = 0.0;
};

/// Pixels whose centres fall inside a polygon (even-odd rule), clipped to
/// the image.
struct RasterPolygon {
    std::vector<std::int32_t> pixels;  ///< sorted linear indices
    int y0 = 0, x0 = 0, y1 = -1, x1 = -1;
};

RasterPolygon rasterize(const std::vector<PointF>& vertices, Shape shape);

double raster_iou(const RasterPolygon& a, const RasterPolygon& b);

PolygonCandidate make_candidate(PixelCoord center, const std::vector<float>& ray_distances,
                                double score);

/// Candidates for every pixel with prob > prob_threshold, highest score first.
std::vector<PolygonCandidate> polygon_candidates(const RawImage& prob,
                                                 const std::vector<RawImage>& distances,
                                                 double prob_threshold);

/// Greedy suppression over candidates sorted by descending score: a
/// candidate survives if its raster IoU with every survivor is <= overlap.
std::vector<PolygonCandidate> suppress(std::vector<PolygonCandidate> candidates, Shape shape,
                                       double overlap_threshold = kDefaultOverlapThreshold);

std::vector<PolygonCandidate> stardist_nms(const RawImage& prob, const std::vector<RawImage>& distances,
                                           double prob_threshold,
                                           double overlap_threshold = kDefaultOverlapThreshold);

/// Paints polygons in descending score order without overwriting claimed
/// pixels. Polygons that claim no pixel get no id.
LabelMap render_polygons(std::vector<PolygonCandidate> candidates, Shape shape);

/// Threshold-dependent instance extraction for either head.
LabelMap instances_from(const Prediction& prediction, double threshold,
                        double overlap_threshold = kDefaultOverlapThreshold);

struct ThresholdSweepResult {
    std::vector<double> grid;
    std::vector<double> ap_per_threshold;
    double best_threshold = 0.0;
    double best_ap = 0.0;
};

/// 0.10, 0.15, ..., 0.90.
std::vector<double> default_threshold_grid();

/// Evaluates `ap_at` on every grid value; the maximum wins, ties go to the
/// lowest threshold.
ThresholdSweepResult sweep(const std::vector<double>& grid, const std::function<double(double)>& ap_at);

}  // namespace voidseg::infer
