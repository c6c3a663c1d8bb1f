#pragma once

// Synthetic label maps and nuclei-like images for tests and acceptance runs.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "voidseg/image.hpp"
#include "voidseg/random.hpp"

namespace voidseg::testkit {

/// Fills the ellipse centred at (cy, cx) with semi-axes (ry, rx) rotated by
/// `angle`. With `only_background`, existing labels are kept.
void paint_ellipse(LabelMap& labels, double cy, double cx, double ry, double rx, double angle, std::int32_t id,
                   bool only_background = false);

/// Up to `max_objects` random ellipses and rectangles; later objects may
/// overwrite earlier ones. Ids are 1..n but may be absent after overwriting.
LabelMap random_label_map(Rng& rng, Shape shape, int max_objects);

/// A prediction near `gt`: objects shifted, grown, shrunk, dropped, split or
/// merged, plus spurious blobs. Ids are shuffled.
LabelMap perturbed_prediction(Rng& rng, const LabelMap& gt);

struct NucleiStyle {
    int min_objects = 4;
    int max_objects = 12;
    double min_radius = 5.0;
    double max_radius = 11.0;
    float background = 10.0f;
    float foreground = 55.0f;        ///< mean nucleus brightness above background
    float foreground_jitter = 15.0f;
    float texture = 4.0f;            ///< std of smooth intra-nucleus texture
};

/// Non-overlapping (possibly touching) bright ellipses on a dark background,
/// 8-bit-like clean intensities, with the matching label map.
ImagePair make_nuclei_pair(std::uint64_t seed, Shape shape, const NucleiStyle& style = {});

struct SurrogateLayout {
    int train_images = 12;
    int test_images = 6;
    Shape train_shape{256, 256};
    Shape test_shape{256, 256};
    NucleiStyle style{};
};

/// Writes `<root>/train/{images,masks}` and `<root>/test/{images,masks}` with
/// float TIFF images and 16-bit PNG masks.
void write_surrogate_dataset(const std::filesystem::path& root, std::uint64_t seed,
                             const SurrogateLayout& layout = {});

}  // namespace voidseg::testkit
