#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "synthetic.hpp"
#include "temp_dir.hpp"
#include "voidseg/dataio.hpp"
#include "voidseg/image_io.hpp"

using namespace voidseg;
namespace fs = std::filesystem;

namespace {

ImagePair ramp_pair(int h, int w, const std::string& name) {
    RawImage image(Shape{h, w});
    LabelMap labels(Shape{h, w}, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            image(y, x) = static_cast<float>(y * w + x);
            labels(y, x) = (y / 16) * 100 + x / 16 + 1;
        }
    }
    return {image, labels, name};
}

void write_pair(const fs::path& dir, const ImagePair& pair) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    io::write_raw_image(dir / "images" / (pair.name + ".tif"), pair.image);
    io::write_label_map(dir / "masks" / (pair.name + ".png"), pair.labels);
}

}  // namespace

TEST(Patches, TilingArithmetic) {
    EXPECT_EQ(dataio::extract_patches({ramp_pair(256, 256, "a")}, 128).size(), 4u);
    EXPECT_EQ(dataio::extract_patches({ramp_pair(300, 300, "b")}, 128).size(), 4u);
    const auto same = dataio::extract_patches({ramp_pair(128, 128, "c")}, 128);
    ASSERT_EQ(same.size(), 1u);
    EXPECT_EQ(same[0].image, ramp_pair(128, 128, "c").image);
    EXPECT_TRUE(dataio::extract_patches({ramp_pair(100, 300, "d")}, 128).empty());
}

TEST(Patches, KeepIdsAndOrigin) {
    const auto src = ramp_pair(256, 384, "img");
    const auto patches = dataio::extract_patches({src}, 128);
    ASSERT_EQ(patches.size(), 6u);
    // second patch in raster order starts at (0, 128)
    EXPECT_EQ(patches[1].image(0, 0), src.image(0, 128));
    EXPECT_EQ(patches[1].labels(5, 5), src.labels(5, 133));
    std::set<std::string> names;
    for (const auto& p : patches) names.insert(p.name);
    EXPECT_EQ(names.size(), 6u);
}

TEST(Subsets, PublishedSizesAndNesting) {
    const auto sizes = dataio::dsb2018_subset_sizes();
    EXPECT_EQ(sizes, (std::vector<std::size_t>{10, 19, 38, 76, 152, 304, 608, 1216, 2432, 3800}));
    EXPECT_EQ(dataio::bbbc004_subset_sizes(),
              (std::vector<std::size_t>{2, 4, 7, 15, 30, 60, 120, 239, 479, 748}));
    const auto plan = dataio::make_subsets(3800, sizes, 42);
    for (int i = 1; i <= 10; ++i) {
        EXPECT_EQ(plan.subset(i).size(), sizes[static_cast<std::size_t>(i - 1)]);
        const std::set<std::size_t> unique(plan.subset(i).begin(), plan.subset(i).end());
        EXPECT_EQ(unique.size(), plan.subset(i).size());
        if (i < 10) {
            const std::set<std::size_t> next(plan.subset(i + 1).begin(), plan.subset(i + 1).end());
            for (auto idx : plan.subset(i)) EXPECT_TRUE(next.count(idx));
        }
    }
    EXPECT_EQ(plan.indices, dataio::make_subsets(3800, sizes, 42).indices);
    EXPECT_NE(plan.indices, dataio::make_subsets(3800, sizes, 43).indices);
    EXPECT_THROW(plan.subset(0), std::out_of_range);
    EXPECT_THROW(plan.subset(11), std::out_of_range);
}

TEST(Subsets, Preconditions) {
    EXPECT_THROW(dataio::make_subsets(100, std::vector<std::size_t>(10, 5), 0), std::invalid_argument);
    EXPECT_THROW(dataio::make_subsets(3799, dataio::dsb2018_subset_sizes(), 0), std::invalid_argument);
    EXPECT_THROW(dataio::make_subsets(100, {1, 2, 3}, 0), std::invalid_argument);
}

TEST(Noise, ZeroStdIsIdentity) {
    const auto img = ramp_pair(32, 32, "x").image;
    EXPECT_EQ(dataio::add_gaussian_noise(img, {0.0, 0.0, 7}), img);
}

TEST(Noise, StatisticsAndDeterminism) {
    const RawImage flat(Shape{512, 512}, 100.0f);
    const auto noisy = dataio::add_gaussian_noise(flat, {0.0, 10.0, 3});
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double d = noisy.pixels()[i] - flat.pixels()[i];
        sum += d;
        sq += d * d;
    }
    const double n = static_cast<double>(flat.size());
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.0, 0.2);
    EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 10.0, 0.2);
    EXPECT_EQ(noisy, dataio::add_gaussian_noise(flat, {0.0, 10.0, 3}));
    // no clipping: values go below zero on a dark image
    const auto dark = dataio::add_gaussian_noise(RawImage(Shape{64, 64}, 0.0f), {0.0, 40.0, 1});
    EXPECT_LT(*std::min_element(dark.begin(), dark.end()), 0.0f);
    EXPECT_EQ(dataio::noise_variant_name(40), "n40");
}

TEST(Noise, VariancesAdd) {
    const RawImage flat(Shape{512, 512}, 0.0f);
    const auto twice = dataio::add_gaussian_noise(dataio::add_gaussian_noise(flat, {0.0, 3.0, 1}), {0.0, 4.0, 2});
    double sq = 0.0;
    for (auto v : twice) sq += static_cast<double>(v) * v;
    EXPECT_NEAR(sq / static_cast<double>(flat.size()), 25.0, 0.5);
}

TEST(Normalize, Endpoints) {
    EXPECT_EQ(dataio::normalize(RawImage(Shape{8, 8}, 3.0f)), RawImage(Shape{8, 8}, 0.0f));
    RawImage ramp(Shape{1, 101});
    for (int x = 0; x <= 100; ++x) ramp(0, x) = static_cast<float>(x);
    const auto out = dataio::normalize(ramp, {0.0, 100.0});
    EXPECT_FLOAT_EQ(out(0, 0), 0.0f);
    EXPECT_FLOAT_EQ(out(0, 100), 1.0f);
    EXPECT_FLOAT_EQ(out(0, 50), 0.5f);

    Rng rng(9);
    RawImage noise(Shape{40, 40});
    std::normal_distribution<float> g(5.0f, 3.0f);
    for (auto& v : noise) v = g(rng);
    const auto n = dataio::normalize(noise);
    std::vector<float> values(n.begin(), n.end());
    EXPECT_NEAR(dataio::percentile(values, 1.0), 0.0, 1e-6);
    EXPECT_NEAR(dataio::percentile(values, 99.8), 1.0, 1e-6);
}

TEST(Percentile, NumpyLinear) {
    EXPECT_DOUBLE_EQ(dataio::percentile({1, 2, 3, 4}, 50), 2.5);
    EXPECT_DOUBLE_EQ(dataio::percentile({1, 2, 3, 4}, 0), 1.0);
    EXPECT_DOUBLE_EQ(dataio::percentile({1, 2, 3, 4}, 100), 4.0);
    EXPECT_DOUBLE_EQ(dataio::percentile({0, 10}, 25), 2.5);
}

TEST(Augment, ConstantImageOrbit) {
    const auto orbit = dataio::augment8(RawImage(Shape{6, 6}, 2.0f), LabelMap(Shape{6, 6}, 1));
    ASSERT_EQ(orbit.size(), 8u);
    for (const auto& a : orbit) EXPECT_EQ(a.image, RawImage(Shape{6, 6}, 2.0f));
}

TEST(Augment, AsymmetricPatternGivesDistinctCopies) {
    const auto src = ramp_pair(5, 5, "p");
    const auto orbit = dataio::augment8(src.image, src.labels);
    for (std::size_t i = 0; i < orbit.size(); ++i) {
        for (std::size_t j = i + 1; j < orbit.size(); ++j) EXPECT_NE(orbit[i].image, orbit[j].image);
    }
    // image and target move together
    for (const auto& a : orbit) EXPECT_EQ(a.target, dataio::apply(a.transform, src.labels));
    EXPECT_THROW(dataio::augment8(RawImage(Shape{4, 5}), LabelMap(Shape{4, 5})), std::invalid_argument);
}

TEST(Augment, GroupClosureAndInverses) {
    const auto src = ramp_pair(7, 7, "q").image;
    const auto group = dataio::dihedral_group();
    ASSERT_EQ(group.size(), 8u);
    const dataio::Dihedral half{2, false};
    EXPECT_EQ(dataio::apply(half, dataio::apply(half, src)), src);
    for (const auto& a : group) {
        EXPECT_EQ(dataio::apply(a.inverse(), dataio::apply(a, src)), src);
        EXPECT_EQ(dataio::Dihedral::from_index(a.index()), a);
        for (const auto& b : group) {
            const auto c = dataio::Dihedral::compose(b, a);
            EXPECT_NE(std::find(group.begin(), group.end(), c), group.end());
            EXPECT_EQ(dataio::apply(c, src), dataio::apply(b, dataio::apply(a, src)));
        }
    }
}

TEST(Load, LayoutAndErrors) {
    testkit::TempDir tmp;
    const auto root = tmp.path();
    EXPECT_THROW(
        {
            try {
                dataio::load_dataset(root, {});
            } catch (const std::runtime_error& e) {
                EXPECT_NE(std::string(e.what()).find("no image/label pairs found"), std::string::npos);
                throw;
            }
        },
        std::runtime_error);

    write_pair(root / "train", ramp_pair(128, 128, "only"));
    dataio::DatasetLayout layout;
    layout.test_dir = "";
    auto split = dataio::load_dataset(root, layout);
    EXPECT_EQ(split.train.size(), 1u);
    EXPECT_EQ(split.validation.size(), 0u);
    EXPECT_EQ(split.test.size(), 0u);
    EXPECT_EQ(split.train[0].labels, ramp_pair(128, 128, "only").labels);

    // validation drawn from the extracted patches
    write_pair(root / "train", ramp_pair(256, 256, "big"));
    write_pair(root / "test", ramp_pair(200, 180, "t"));
    layout.test_dir = "test";
    layout.validation_count = 2;
    split = dataio::load_dataset(root, layout);
    EXPECT_EQ(split.train.size() + split.validation.size(), 5u);
    EXPECT_EQ(split.validation.size(), 2u);
    ASSERT_EQ(split.test.size(), 1u);
    EXPECT_EQ(split.test[0].image.shape(), (Shape{200, 180}));

    fs::remove(root / "train" / "masks" / "big.png");
    try {
        dataio::load_dataset(root, layout);
        FAIL() << "expected missing-pair error";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("big"), std::string::npos);
    }
    fs::remove(root / "train" / "images" / "big.tif");

    io::write_label_map(root / "train" / "masks" / "only.png", LabelMap(Shape{64, 64}, 0));
    EXPECT_THROW(dataio::load_dataset(root, layout), std::runtime_error);
}

TEST(Load, NoiseVariantMirrorsLayout) {
    testkit::TempDir tmp;
    const auto root = tmp.path() / "data";
    testkit::SurrogateLayout layout;
    layout.train_images = 2;
    layout.test_images = 1;
    layout.train_shape = layout.test_shape = {64, 64};
    testkit::write_surrogate_dataset(root, 1, layout);
    const auto variant = dataio::write_noise_variant(root, 40, 5);
    EXPECT_EQ(variant.filename(), "noise_n40");
    dataio::DatasetLayout dl;
    dl.patch_size = 0;
    const auto clean = dataio::load_dataset(root, dl);
    const auto noisy = dataio::load_dataset(variant, dl);
    ASSERT_EQ(noisy.train.size(), clean.train.size());
    EXPECT_EQ(noisy.train[0].labels, clean.train[0].labels);
    EXPECT_NE(noisy.train[0].image, clean.train[0].image);
    // second call reuses the cached variant
    const auto before = fs::last_write_time(variant / "train" / "images" / "train_000.tif");
    dataio::write_noise_variant(root, 40, 5);
    EXPECT_EQ(fs::last_write_time(variant / "train" / "images" / "train_000.tif"), before);
}

TEST(ImageIo, RoundTrip) {
    testkit::TempDir tmp;
    const auto pair = testkit::make_nuclei_pair(3, {40, 50});
    io::write_raw_image(tmp.path() / "a.tif", pair.image);
    io::write_label_map(tmp.path() / "a.png", pair.labels);
    EXPECT_EQ(io::read_raw_image(tmp.path() / "a.tif"), pair.image);
    EXPECT_EQ(io::read_label_map(tmp.path() / "a.png"), pair.labels);
    EXPECT_THROW(io::write_label_map(tmp.path() / "b.png", LabelMap(Shape{2, 2}, 70000)), std::runtime_error);
    EXPECT_THROW(io::read_raw_image(tmp.path() / "missing.tif"), std::runtime_error);
}
