#include "voidseg/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "voidseg/log.hpp"

#include "voidseg/image_io.hpp"
#include "voidseg/random.hpp"

namespace fs = std::filesystem;

namespace voidseg::dataio {

DatasetLayout DatasetLayout::dsb2018() {
    DatasetLayout layout;
    layout.train_dir = "train";
    layout.test_dir = "test";
    layout.patch_size = 128;
    layout.validation_count = 670;
    return layout;
}

DatasetLayout DatasetLayout::bbbc004() {
    DatasetLayout layout;
    layout.train_dir = "train";
    layout.test_dir = "test";
    layout.patch_size = 128;
    layout.validation_count = 132;
    return layout;
}

namespace {

std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !io::is_image_file(entry.path())) continue;
        const auto stem = entry.path().stem().string();
        if (!out.emplace(stem, entry.path()).second) {
            throw std::runtime_error("duplicate file stem '" + stem + "' in " + dir.string());
        }
    }
    return out;
}

fs::path split_dir(const fs::path& root, const std::string& name) {
    return name == "." ? root : root / name;
}

}  // namespace

std::vector<ImagePair> load_pairs(const fs::path& dir) {
    const auto images = files_by_stem(dir / "images");
    const auto masks = files_by_stem(dir / "masks");
    for (const auto& [stem, path] : masks) {
        if (!images.contains(stem)) {
            throw std::runtime_error("missing image for label map " + path.string());
        }
    }
    std::vector<ImagePair> pairs;
    pairs.reserve(images.size());
    for (const auto& [stem, path] : images) {
        auto it = masks.find(stem);
        if (it == masks.end()) {
            throw std::runtime_error("missing label map for image " + path.string());
        }
        ImagePair pair{io::read_raw_image(path), io::read_label_map(it->second), stem};
        if (pair.image.shape() != pair.labels.shape()) {
            throw std::runtime_error("shape mismatch between " + path.string() + " (" +
                                     to_string(pair.image.shape()) + ") and " +
                                     it->second.string() + " (" +
                                     to_string(pair.labels.shape()) + ")");
        }
        if (max_label(pair.labels) > 65535) {
            throw std::runtime_error("label ids above 65535 in " + it->second.string());
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

DatasetSplit load_dataset(const fs::path& root, const DatasetLayout& layout) {
    if (!fs::is_directory(root)) {
        throw std::runtime_error("dataset root does not exist: " + root.string());
    }
    auto load_split = [&](const std::string& name) {
        if (name.empty()) return std::vector<ImagePair>{};
        return load_pairs(split_dir(root, name));
    };

    DatasetSplit split;
    auto train = load_split(layout.train_dir);
    auto validation = load_split(layout.validation_dir);
    split.test = load_split(layout.test_dir);

    if (layout.patch_size > 0) {
        train = extract_patches(train, layout.patch_size);
        validation = extract_patches(validation, layout.patch_size);
    }

    if (layout.validation_dir.empty() && layout.validation_count > 0) {
        if (layout.validation_count > train.size()) {
            throw std::runtime_error("validation_count " + std::to_string(layout.validation_count) +
                                     " exceeds " + std::to_string(train.size()) +
                                     " training patches");
        }
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(combine_seed(layout.seed, "validation"));
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<bool> is_validation(train.size(), false);
        for (std::size_t i = 0; i < layout.validation_count; ++i) is_validation[order[i]] = true;
        std::vector<ImagePair> kept;
        kept.reserve(train.size() - layout.validation_count);
        for (std::size_t i = 0; i < train.size(); ++i) {
            (is_validation[i] ? validation : kept).push_back(std::move(train[i]));
        }
        train = std::move(kept);
    }
    split.train = std::move(train);
    split.validation = std::move(validation);

    if (split.train.empty() && split.validation.empty() && split.test.empty()) {
        throw std::runtime_error("no image/label pairs found under " + root.string());
    }
    log::debug("loaded ", root.string(), ": train=", split.train.size(), " validation=", split.validation.size(),
               " test=", split.test.size());
    return split;
}

std::vector<ImagePair> extract_patches(const std::vector<ImagePair>& pairs, int size) {
    if (size <= 0) throw std::invalid_argument("patch size must be positive");
    std::vector<ImagePair> out;
    for (const auto& pair : pairs) {
        const int rows = pair.image.height() / size;
        const int cols = pair.image.width() / size;
        if (rows == 0 || cols == 0) {
            log::warn("skipping ", pair.name, " (", to_string(pair.image.shape()), "): smaller than patch size ", size);
            continue;
        }
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                out.push_back({crop(pair.image, r * size, c * size, size, size),
                               crop(pair.labels, r * size, c * size, size, size),
                               pair.name + "_" + std::to_string(r) + "_" + std::to_string(c)});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

const std::vector<std::size_t>& SubsetPlan::subset(int one_based_index) const {
    if (one_based_index < 1 || static_cast<std::size_t>(one_based_index) > indices.size()) {
        throw std::out_of_range("subset index " + std::to_string(one_based_index) +
                                " outside 1.." + std::to_string(indices.size()));
    }
    return indices[static_cast<std::size_t>(one_based_index - 1)];
}

std::vector<std::size_t> dsb2018_subset_sizes() {
    return {10, 19, 38, 76, 152, 304, 608, 1216, 2432, 3800};
}

std::vector<std::size_t> bbbc004_subset_sizes() {
    return {2, 4, 7, 15, 30, 60, 120, 239, 479, 748};
}

SubsetPlan make_subsets(std::size_t train_size, const std::vector<std::size_t>& sizes,
                        std::uint64_t seed) {
    if (sizes.size() != kSubsetCount) {
        throw std::invalid_argument("expected " + std::to_string(kSubsetCount) +
                                    " subset sizes, got " + std::to_string(sizes.size()));
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] == 0 || (i > 0 && sizes[i] <= sizes[i - 1])) {
            throw std::invalid_argument("subset sizes must be positive and strictly increasing");
        }
    }
    if (sizes.back() > train_size) {
        throw std::invalid_argument("largest subset (" + std::to_string(sizes.back()) +
                                    ") exceeds training set size " + std::to_string(train_size));
    }
    std::vector<std::size_t> order(train_size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    SubsetPlan plan{sizes, seed, {}};
    plan.indices.reserve(sizes.size());
    for (auto n : sizes) {
        plan.indices.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    }
    return plan;
}

// ---------------------------------------------------------------------------

RawImage add_gaussian_noise(const RawImage& image, const NoiseSpec& spec) {
    if (!(spec.std >= 0.0)) throw std::invalid_argument("noise std must be non-negative");
    if (spec.std == 0.0 && spec.mean == 0.0) return image;
    Rng rng(spec.seed);
    std::normal_distribution<double> dist(spec.mean, spec.std);
    RawImage out = image;
    for (auto& v : out) v = static_cast<float>(static_cast<double>(v) + dist(rng));
    return out;
}

std::string noise_variant_name(double std) {
    std::ostringstream os;
    os << "n" << std;
    return os.str();
}

fs::path write_noise_variant(const fs::path& root, double std, std::uint64_t seed) {
    const fs::path variant = root / ("noise_" + noise_variant_name(std));
    const fs::path marker = variant / ".complete";
    if (fs::exists(marker)) {
        log::info("noise variant ", variant.string(), " already present");
        return variant;
    }
    std::vector<fs::path> image_dirs;
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
         ++it) {
        if (!it->is_directory()) continue;
        const auto name = it->path().filename().string();
        if (name.rfind("noise_n", 0) == 0) {
            it.disable_recursion_pending();
            continue;
        }
        if (name == "images" && fs::is_directory(it->path().parent_path() / "masks")) {
            image_dirs.push_back(it->path());
        }
    }
    if (image_dirs.empty()) {
        throw std::runtime_error("no images/ directories with sibling masks/ under " + root.string());
    }
    std::sort(image_dirs.begin(), image_dirs.end());
    for (const auto& images_dir : image_dirs) {
        const fs::path rel = fs::relative(images_dir.parent_path(), root);
        const fs::path out_dir = variant / rel;
        fs::create_directories(out_dir / "images");
        fs::create_directories(out_dir / "masks");
        for (const auto& [stem, path] : files_by_stem(images_dir)) {
            const auto key = (rel / stem).generic_string();
            const RawImage noisy =
                add_gaussian_noise(io::read_raw_image(path), {0.0, std, combine_seed(seed, key)});
            io::write_raw_image(out_dir / "images" / (stem + ".tif"), noisy);
        }
        for (const auto& [stem, path] : files_by_stem(images_dir.parent_path() / "masks")) {
            fs::copy_file(path, out_dir / "masks" / path.filename(),
                          fs::copy_options::overwrite_existing);
        }
    }
    std::ofstream(marker) << "std=" << std << " seed=" << seed << "\n";
    return variant;
}

// ---------------------------------------------------------------------------

double percentile(std::vector<float> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of empty set");
    if (q < 0.0 || q > 100.0) throw std::invalid_argument("percentile outside [0, 100]");
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double v_lo = values[lo];
    if (hi == lo) return v_lo;
    const double v_hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return v_lo + (pos - static_cast<double>(lo)) * (v_hi - v_lo);
}

RawImage normalize(const RawImage& image, PercentileRange range) {
    if (!(range.low >= 0.0 && range.low < range.high && range.high <= 100.0)) {
        throw std::invalid_argument("normalize requires 0 <= p_low < p_high <= 100");
    }
    std::vector<float> values(image.begin(), image.end());
    const double v_low = percentile(values, range.low);
    const double v_high = percentile(std::move(values), range.high);
    RawImage out(image.shape(), 0.0f);
    if (!(v_high > v_low)) return out;
    const double scale = 1.0 / (v_high - v_low);
    auto src = image.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<float>((static_cast<double>(src[i]) - v_low) * scale);
    }
    return out;
}

// ---------------------------------------------------------------------------

Dihedral Dihedral::compose(const Dihedral& second, const Dihedral& first) {
    // R^a F^f R^b F^g = R^(a + (f ? -b : b)) F^(f xor g)
    const int turns = second.quarter_turns + (second.flip ? -first.quarter_turns : first.quarter_turns);
    return {((turns % 4) + 4) % 4, second.flip != first.flip};
}

Dihedral Dihedral::inverse() const {
    if (flip) return *this;
    return {(4 - quarter_turns % 4) % 4, false};
}

Dihedral Dihedral::from_index(int index) {
    if (index < 0 || index >= 8) throw std::out_of_range("dihedral index outside 0..7");
    return {index % 4, index >= 4};
}

std::vector<Dihedral> dihedral_group() {
    std::vector<Dihedral> out;
    for (int i = 0; i < 8; ++i) out.push_back(Dihedral::from_index(i));
    return out;
}

}  // namespace voidseg::dataio
