#include "voidseg/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "voidseg/targets.hpp"

namespace voidseg::infer {

LabelMap label_components(const BinaryMask& mask) {
    const int h = mask.height();
    const int w = mask.width();
    LabelMap labels(mask.shape(), 0);
    std::vector<PixelCoord> stack;
    std::int32_t next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask(y, x) || labels(y, x) != 0) continue;
            ++next;
            labels(y, x) = next;
            stack.push_back({y, x});
            while (!stack.empty()) {
                const auto p = stack.back();
                stack.pop_back();
                const PixelCoord nbrs[4] = {{p.y - 1, p.x}, {p.y + 1, p.x}, {p.y, p.x - 1}, {p.y, p.x + 1}};
                for (const auto& n : nbrs) {
                    if (!mask.shape().contains(n.y, n.x) || !mask[n] || labels[n] != 0) continue;
                    labels[n] = next;
                    stack.push_back(n);
                }
            }
        }
    }
    return labels;
}

LabelMap fg_threshold_to_instances(const RawImage& fg_prob, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) throw std::invalid_argument("threshold outside [0, 1]");
    BinaryMask mask(fg_prob.shape(), 0);
    auto src = fg_prob.pixels();
    auto dst = mask.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1 : 0;
    return label_components(mask);
}

RasterPolygon rasterize(const std::vector<PointF>& vertices, Shape shape) {
    RasterPolygon out;
    if (vertices.size() < 3) return out;
    double min_y = vertices[0].y, max_y = min_y, min_x = vertices[0].x, max_x = min_x;
    for (const auto& v : vertices) {
        min_y = std::min(min_y, v.y);
        max_y = std::max(max_y, v.y);
        min_x = std::min(min_x, v.x);
        max_x = std::max(max_x, v.x);
    }
    out.y0 = std::max(0, static_cast<int>(std::ceil(min_y)));
    out.y1 = std::min(shape.height - 1, static_cast<int>(std::floor(max_y)));
    out.x0 = std::max(0, static_cast<int>(std::ceil(min_x)));
    out.x1 = std::min(shape.width - 1, static_cast<int>(std::floor(max_x)));
    const std::size_t n = vertices.size();
    std::vector<double> crossings;
    for (int y = out.y0; y <= out.y1; ++y) {
        // x positions where the scanline through pixel centres crosses an edge
        crossings.clear();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
            const auto& a = vertices[i];
            const auto& b = vertices[j];
            if ((a.y > y) != (b.y > y)) {
                crossings.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        std::sort(crossings.begin(), crossings.end());
        for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
            // pixel x is inside when crossings[k] < x < crossings[k+1] (ties: left-closed)
            const int xs = std::max(out.x0, static_cast<int>(std::ceil(crossings[k])));
            const int xe = std::min(out.x1, static_cast<int>(std::ceil(crossings[k + 1])) - 1);
            for (int x = xs; x <= xe; ++x) {
                out.pixels.push_back(y * shape.width + x);
            }
        }
    }
    std::sort(out.pixels.begin(), out.pixels.end());
    out.pixels.erase(std::unique(out.pixels.begin(), out.pixels.end()), out.pixels.end());
    return out;
}

double raster_iou(const RasterPolygon& a, const RasterPolygon& b) {
    if (a.pixels.empty() && b.pixels.empty()) return 0.0;
    if (a.x1 < b.x0 || b.x1 < a.x0 || a.y1 < b.y0 || b.y1 < a.y0) return 0.0;
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.pixels.size() && j < b.pixels.size()) {
        if (a.pixels[i] < b.pixels[j]) {
            ++i;
        } else if (b.pixels[j] < a.pixels[i]) {
            ++j;
        } else {
            ++inter;
            ++i;
            ++j;
        }
    }
    const auto uni = a.pixels.size() + b.pixels.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

PolygonCandidate make_candidate(PixelCoord center, const std::vector<float>& ray_distances, double score) {
    const auto dirs = targets::ray_directions(static_cast<int>(ray_distances.size()));
    PolygonCandidate c{center, {}, score};
    c.vertices.reserve(dirs.size());
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        const double d = ray_distances[k];
        c.vertices.push_back({center.y + d * dirs[k].dy, center.x + d * dirs[k].dx});
    }
    return c;
}

std::vector<PolygonCandidate> polygon_candidates(const RawImage& prob, const std::vector<RawImage>& distances,
                                                 double prob_threshold) {
    for (const auto& d : distances) {
        if (d.shape() != prob.shape()) throw std::invalid_argument("distance map shape mismatch");
    }
    std::vector<PolygonCandidate> out;
    std::vector<float> rays(distances.size());
    for (int y = 0; y < prob.height(); ++y) {
        for (int x = 0; x < prob.width(); ++x) {
            const double score = prob(y, x);
            if (!(score > prob_threshold)) continue;
            for (std::size_t k = 0; k < distances.size(); ++k) rays[k] = distances[k](y, x);
            out.push_back(make_candidate({y, x}, rays, score));
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PolygonCandidate& a, const PolygonCandidate& b) { return a.score > b.score; });
    return out;
}

std::vector<PolygonCandidate> suppress(std::vector<PolygonCandidate> candidates, Shape shape,
                                       double overlap_threshold) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const PolygonCandidate& a, const PolygonCandidate& b) { return a.score > b.score; });
    std::vector<PolygonCandidate> kept;
    std::vector<RasterPolygon> kept_raster;
    for (auto& c : candidates) {
        auto raster = rasterize(c.vertices, shape);
        bool accept = true;
        for (const auto& k : kept_raster) {
            if (raster_iou(raster, k) > overlap_threshold) {
                accept = false;
                break;
            }
        }
        if (accept) {
            kept.push_back(std::move(c));
            kept_raster.push_back(std::move(raster));
        }
    }
    return kept;
}

std::vector<PolygonCandidate> stardist_nms(const RawImage& prob, const std::vector<RawImage>& distances,
                                           double prob_threshold, double overlap_threshold) {
    if (prob_threshold < 0.0 || prob_threshold > 1.0 || overlap_threshold < 0.0 || overlap_threshold > 1.0) {
        throw std::invalid_argument("nms thresholds must lie in [0, 1]");
    }
    return suppress(polygon_candidates(prob, distances, prob_threshold), prob.shape(), overlap_threshold);
}

LabelMap render_polygons(std::vector<PolygonCandidate> candidates, Shape shape) {
    if (shape.height <= 0 || shape.width <= 0) throw std::invalid_argument("render shape must be positive");
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const PolygonCandidate& a, const PolygonCandidate& b) { return a.score > b.score; });
    LabelMap labels(shape, 0);
    auto px = labels.pixels();
    std::int32_t next = 0;
    for (const auto& c : candidates) {
        const auto raster = rasterize(c.vertices, shape);
        bool claimed = false;
        for (auto i : raster.pixels) {
            if (px[static_cast<std::size_t>(i)] != 0) continue;
            if (!claimed) {
                ++next;
                claimed = true;
            }
            px[static_cast<std::size_t>(i)] = next;
        }
    }
    return labels;
}

LabelMap instances_from(const Prediction& prediction, double threshold, double overlap_threshold) {
    switch (prediction.kind) {
        case Prediction::Kind::ThreeClass:
            return fg_threshold_to_instances(prediction.foreground(), threshold);
        case Prediction::Kind::Star:
            return render_polygons(
                stardist_nms(prediction.object_prob, prediction.distances, threshold, overlap_threshold),
                prediction.object_prob.shape());
        case Prediction::Kind::Denoise:
            break;
    }
    throw std::invalid_argument("a denoising prediction carries no instances");
}

std::vector<double> default_threshold_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 16; ++i) grid.push_back(0.10 + 0.05 * i);
    return grid;
}

ThresholdSweepResult sweep(const std::vector<double>& grid, const std::function<double(double)>& ap_at) {
    if (grid.empty()) throw std::invalid_argument("threshold grid is empty");
    ThresholdSweepResult result;
    result.grid = grid;
    result.ap_per_threshold.reserve(grid.size());
    bool first = true;
    for (double t : grid) {
        const double ap = ap_at(t);
        result.ap_per_threshold.push_back(ap);
        if (first || ap > result.best_ap || (ap == result.best_ap && t < result.best_threshold)) {
            result.best_ap = ap;
            result.best_threshold = t;
            first = false;
        }
    }
    return result;
}

}  // namespace voidseg::infer
