#pragma once

#include <cstdint>
#include <vector>

#include "voidseg/image.hpp"

namespace voidseg::targets {

enum class PixelClass : std::uint8_t { Background = 0, Foreground = 1, Border = 2 };

using ThreeClassMap = Image<std::uint8_t>;
using BorderWeightMap = Image<float>;

inline constexpr float kDefaultBorderWeight = 5.0f;
inline constexpr int kDefaultRays = 32;

/// Instance pixels with an 8-neighbour of a different label (0 included) are
/// border; remaining instance pixels are foreground. Pixels outside the image
/// are not neighbours.
ThreeClassMap to_three_class(const LabelMap& labels);

BorderWeightMap class_weight_map(const ThreeClassMap& classes, float w_border = kDefaultBorderWeight);

/// Unit direction of ray `k` out of `n_rays`, as (dy, dx) = (sin, cos).
struct RayDirection {
    double dy = 0.0;
    double dx = 0.0;
};
std::vector<RayDirection> ray_directions(int n_rays);

/// Nearest pixel offset of the i-th unit step along `dir`. Rounds half up so
/// that offsets are translation invariant.
PixelCoord ray_step_offset(const RayDirection& dir, int step);

/// Radial distances plus object probability per pixel.
struct StarTarget {
    int n_rays = kDefaultRays;
    Shape shape{};
    /// ray-major: distances[k * area + y * width + x]
    std::vector<float> distances;
    RawImage object_prob;

    [[nodiscard]] float distance(int ray, int y, int x) const {
        return distances[static_cast<std::size_t>(ray) * shape.area() +
                         static_cast<std::size_t>(y) * static_cast<std::size_t>(shape.width) +
                         static_cast<std::size_t>(x)];
    }
};

/// For every instance pixel and ray, the number of unit steps until the march
/// reaches a pixel with a different label or leaves the image (capped at the
/// image diagonal). object_prob is the per-instance normalized Euclidean
/// distance to the nearest non-instance pixel.
StarTarget star_distances(const LabelMap& labels, int n_rays = kDefaultRays);

/// Exact Euclidean distance from each instance pixel to the closest pixel of a
/// different label; pixels beyond the image count as background. 0 on background.
RawImage instance_edt(const LabelMap& labels);

}  // namespace voidseg::targets
