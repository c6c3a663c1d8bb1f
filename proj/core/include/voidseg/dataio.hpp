#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voidseg/image.hpp"

namespace voidseg::dataio {

/// Train and validation hold patches, test holds full-size pairs.
struct DatasetSplit {
    std::vector<ImagePair> train;
    std::vector<ImagePair> validation;
    std::vector<ImagePair> test;
};

/// Where each split lives below the dataset root and how it is cut.
///
/// Every split directory holds `images/` and `masks/` with files paired by
/// filename stem. An empty directory name means the split is absent, "." is
/// the root itself. When `validation_dir` is empty, `validation_count`
/// patches are drawn (seeded) from the extracted training patches.
struct DatasetLayout {
    std::string train_dir = "train";
    std::string validation_dir;
    std::string test_dir = "test";
    int patch_size = 128;  ///< 0 keeps train/validation images whole
    std::size_t validation_count = 0;
    std::uint64_t seed = 0;

    static DatasetLayout dsb2018();
    static DatasetLayout bbbc004();
};

DatasetSplit load_dataset(const std::filesystem::path& root, const DatasetLayout& layout);

/// Pairs below `dir/images` and `dir/masks`, sorted by stem.
std::vector<ImagePair> load_pairs(const std::filesystem::path& dir);

/// Non-overlapping tiling from the top-left corner. Residual borders are
/// dropped; images smaller than `size` are skipped with a warning.
std::vector<ImagePair> extract_patches(const std::vector<ImagePair>& pairs, int size);

// ---------------------------------------------------------------------------
// Nested training subsets

struct SubsetPlan {
    std::vector<std::size_t> sizes;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> indices;

    /// Subset P_i for i in 1..10.
    [[nodiscard]] const std::vector<std::size_t>& subset(int one_based_index) const;
};

inline constexpr std::size_t kSubsetCount = 10;

/// Sizes used for DSB 2018 and BBBC 004 patches.
std::vector<std::size_t> dsb2018_subset_sizes();
std::vector<std::size_t> bbbc004_subset_sizes();

SubsetPlan make_subsets(std::size_t train_size, const std::vector<std::size_t>& sizes,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Noise, normalization, augmentation

struct NoiseSpec {
    double mean = 0.0;
    double std = 0.0;
    std::uint64_t seed = 0;
};

/// Adds i.i.d. Gaussian noise. No clipping, no rounding.
RawImage add_gaussian_noise(const RawImage& image, const NoiseSpec& spec);

/// Dataset variant name for a noise level, e.g. "n40".
std::string noise_variant_name(double std);

/// Writes `<root>/noise_n<std>/` mirroring every images/masks directory under
/// `root`. Noisy images are stored as 32-bit float TIFF. Existing variants
/// are left untouched. Returns the variant root.
std::filesystem::path write_noise_variant(const std::filesystem::path& root, double std,
                                          std::uint64_t seed);

/// Linear-interpolated percentile (numpy convention), `q` in [0, 100].
double percentile(std::vector<float> values, double q);

struct PercentileRange {
    double low = 1.0;
    double high = 99.8;
};

/// (x - v_low) / (v_high - v_low); constant images map to zeros.
RawImage normalize(const RawImage& image, PercentileRange range = {});

/// An element of the dihedral group of the square: optional horizontal flip
/// followed by `quarter_turns` counter-clockwise 90 degree rotations.
struct Dihedral {
    int quarter_turns = 0;
    bool flip = false;

    /// The transform equal to applying `second` after `first`.
    static Dihedral compose(const Dihedral& second, const Dihedral& first);
    [[nodiscard]] Dihedral inverse() const;
    [[nodiscard]] int index() const { return quarter_turns + (flip ? 4 : 0); }
    static Dihedral from_index(int index);
    friend bool operator==(const Dihedral&, const Dihedral&) = default;
};

/// All eight elements in index order.
std::vector<Dihedral> dihedral_group();

template <typename T>
Image<T> apply(const Dihedral& g, const Image<T>& src) {
    Image<T> cur = src;
    if (g.flip) {
        Image<T> flipped(cur.shape());
        for (int y = 0; y < cur.height(); ++y) {
            for (int x = 0; x < cur.width(); ++x) flipped(y, x) = cur(y, cur.width() - 1 - x);
        }
        cur = std::move(flipped);
    }
    const int turns = ((g.quarter_turns % 4) + 4) % 4;
    for (int t = 0; t < turns; ++t) {
        const int h = cur.height();
        const int w = cur.width();
        Image<T> rotated(w, h);
        for (int y = 0; y < w; ++y) {
            for (int x = 0; x < h; ++x) rotated(y, x) = cur(x, w - 1 - y);
        }
        cur = std::move(rotated);
    }
    return cur;
}

template <typename A, typename B>
struct AugmentedPair {
    Image<A> image;
    Image<B> target;
    Dihedral transform;
};

/// The D4 orbit of a square image and its paired array.
template <typename A, typename B>
std::vector<AugmentedPair<A, B>> augment8(const Image<A>& image, const Image<B>& target) {
    if (image.height() != image.width()) {
        throw std::invalid_argument("augment8 requires square input, got " + to_string(image.shape()));
    }
    if (image.shape() != target.shape()) {
        throw std::invalid_argument("augment8: image and target shapes differ");
    }
    std::vector<AugmentedPair<A, B>> out;
    out.reserve(8);
    for (const auto& g : dihedral_group()) {
        out.push_back({apply(g, image), apply(g, target), g});
    }
    return out;
}

}  // namespace voidseg::dataio
