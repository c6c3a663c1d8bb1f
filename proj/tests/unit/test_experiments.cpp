#include <gtest/gtest.h>

#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "synthetic.hpp"
#include "temp_dir.hpp"
#include "voidseg/experiments.hpp"

using namespace voidseg;
using segtrain::Scheme;
namespace fs = std::filesystem;

namespace {

dataio::DatasetSplit toy_split() {
    testkit::NucleiStyle style;
    style.min_radius = 3.0;
    style.max_radius = 6.0;
    dataio::DatasetSplit s;
    for (int i = 0; i < 12; ++i) s.train.push_back(testkit::make_nuclei_pair(100 + static_cast<std::uint64_t>(i), {32, 32}, style));
    for (int i = 0; i < 2; ++i) s.validation.push_back(testkit::make_nuclei_pair(200 + static_cast<std::uint64_t>(i), {32, 32}, style));
    for (int i = 0; i < 2; ++i) s.test.push_back(testkit::make_nuclei_pair(300 + static_cast<std::uint64_t>(i), {48, 40}, style));
    return s;
}

experiments::ExperimentGrid toy_grid(const fs::path& out) {
    experiments::ExperimentGrid g;
    g.schemes = {Scheme::BaselineUNet, Scheme::SequentialUNet};
    g.noise_levels = {20.0};
    g.subset_indices = {1, 2};
    g.repeats = 2;
    segtrain::TrainSchedule s;
    s.epochs = 1;
    s.steps_per_epoch = 2;
    s.batch_size = 2;
    s.crop_size = 0;
    g.schedule_override = s;
    g.subset_sizes = {2, 3, 4, 5, 6, 7, 8, 9, 10, 12};
    g.seg_options.spec.base_features = 4;
    g.denoiser_options.spec.base_features = 4;
    g.threshold_grid = {0.3, 0.5, 0.7};
    g.output_dir = out;
    return g;
}

experiments::RunRecord record(Scheme scheme, int subset, int repeat, double ap) {
    experiments::RunRecord r;
    r.key = {scheme, 40.0, subset, repeat};
    r.ok = true;
    r.train_images = subset == 1 ? 10 : 19;
    r.test.ap = ap;
    r.test.seg = ap / 2;
    return r;
}

}  // namespace

TEST(Grid, ValidationAndCount) {
    experiments::ExperimentGrid g = toy_grid("unused");
    g.validate();
    EXPECT_EQ(g.run_count(), 8u);
    auto bad = g;
    bad.repeats = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = g;
    bad.schemes.clear();
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = g;
    bad.subset_indices = {0};
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = g;
    bad.denoiser_options.spec.depth = 3;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Grid, SeedsArePureAndDistinct) {
    std::set<std::uint64_t> seeds;
    for (auto s : segtrain::all_schemes()) {
        for (double n : {0.0, 20.0, 40.0}) {
            for (int p = 1; p <= 10; ++p) {
                for (int r = 0; r < 3; ++r) {
                    const experiments::RunKey k{s, n, p, r};
                    EXPECT_EQ(experiments::derive_seed(7, k), experiments::derive_seed(7, k));
                    seeds.insert(experiments::derive_seed(7, k));
                }
            }
        }
    }
    EXPECT_EQ(seeds.size(), 6u * 3u * 10u * 3u);
    EXPECT_EQ((experiments::RunKey{Scheme::SequentialUNet, 40, 3, 1}.id()), "SequentialUNet_n40_P3_r1");
}

TEST(Grid, RecordJsonRoundTrip) {
    auto r = record(Scheme::FinetuneUNet, 2, 1, 0.25);
    r.seed = 123456789012345ULL;
    r.test.per_image.push_back({"img", 1, 2, 3, 1.0 / 6.0, 0.3, 4});
    r.pipeline_dir = "/tmp/x";
    const auto back = experiments::record_from_json(experiments::record_to_json(r));
    EXPECT_EQ(back.key, r.key);
    EXPECT_EQ(back.seed, r.seed);
    EXPECT_EQ(back.test.ap, r.test.ap);
    ASSERT_EQ(back.test.per_image.size(), 1u);
    EXPECT_EQ(back.test.per_image[0].ap, 1.0 / 6.0);
    EXPECT_EQ(back.pipeline_dir, r.pipeline_dir);
}

TEST(Grid, CorruptionKeepsLabelsAndIsSeeded) {
    const auto clean = toy_split();
    const auto a = experiments::corrupt_split(clean, 40, 1);
    const auto b = experiments::corrupt_split(clean, 40, 1);
    EXPECT_EQ(a.train[0].image, b.train[0].image);
    EXPECT_NE(a.train[0].image, clean.train[0].image);
    EXPECT_NE(a.validation[0].image, clean.validation[0].image);
    EXPECT_NE(a.test[0].image, clean.test[0].image);
    EXPECT_EQ(a.test[0].labels, clean.test[0].labels);
    EXPECT_EQ(experiments::corrupt_split(clean, 0, 1).train[0].image, clean.train[0].image);
}

TEST(Grid, RunsEveryCellAndResumes) {
    network::configure_threads(1);
    testkit::TempDir tmp;
    const auto grid = toy_grid(tmp.path() / "grid");
    const auto split = toy_split();
    const auto first = experiments::run_grid(grid, split);
    EXPECT_EQ(first.records.size(), 8u);
    EXPECT_EQ(first.executed, 8u);
    EXPECT_TRUE(first.failures.empty());
    for (const auto& r : first.records) {
        EXPECT_TRUE(r.ok) << r.error;
        EXPECT_TRUE(fs::exists(r.pipeline_dir / "pipeline.json"));
        EXPECT_TRUE(fs::exists(r.history_csv));
    }
    // one denoiser for the single noise level, shared by all Sequential cells
    std::size_t ckpts = 0;
    for (const auto& e : fs::directory_iterator(grid.output_dir / "denoisers")) ckpts += e.path().extension() == ".ckpt";
    EXPECT_EQ(ckpts, 1u);

    const auto second = experiments::run_grid(grid, split);
    EXPECT_EQ(second.executed, 0u);
    EXPECT_EQ(second.skipped, 8u);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(second.records[i].key, first.records[i].key);
        EXPECT_EQ(second.records[i].test.ap, first.records[i].test.ap);
    }
    EXPECT_EQ(experiments::load_records(grid.output_dir).size(), 8u);

    // a stale claim left by a dead process does not block the cell
    const auto id = first.records[0].key.id();
    fs::remove(grid.output_dir / "runs" / (id + ".json"));
    std::ofstream(grid.output_dir / "runs" / (id + ".claim")) << "999999999";
    const auto third = experiments::run_grid(grid, split);
    EXPECT_EQ(third.executed, 1u);
    EXPECT_EQ(third.records[0].test.ap, first.records[0].test.ap);  // same derived seed, same result
}

TEST(Grid, FailuresAreRecordedAndGridContinues) {
    network::configure_threads(1);
    testkit::TempDir tmp;
    auto grid = toy_grid(tmp.path() / "grid");
    grid.schemes = {Scheme::BaselineUNet};
    grid.subset_indices = {1};
    grid.repeats = 1;
    auto split = toy_split();
    for (auto& p : split.train) p.labels = LabelMap();  // unlabeled: segmentation must fail
    const auto out = experiments::run_grid(grid, split);
    ASSERT_EQ(out.records.size(), 1u);
    EXPECT_FALSE(out.records[0].ok);
    EXPECT_FALSE(out.records[0].error.empty());
    EXPECT_EQ(out.failures.size(), 1u);
}

TEST(Report, TableRowsAndAggregation) {
    testkit::TempDir tmp;
    std::vector<experiments::RunRecord> records{
        record(Scheme::BaselineUNet, 1, 0, 0.4), record(Scheme::BaselineUNet, 1, 1, 0.6),
        record(Scheme::BaselineUNet, 2, 0, 0.5), record(Scheme::SequentialUNet, 1, 0, 0.7),
        record(Scheme::SequentialUNet, 2, 0, 0.8)};
    auto failed = record(Scheme::SequentialUNet, 2, 1, 0.0);
    failed.ok = false;
    failed.error = "diverged";
    records.push_back(failed);

    const auto rows = experiments::summarize(records);
    ASSERT_EQ(rows.size(), 4u);
    const auto expected = eval::aggregate({records[0].test, records[1].test});
    EXPECT_EQ(rows[0].summary.ap.mean, expected.ap.mean);
    EXPECT_EQ(rows[0].summary.ap.se, expected.ap.se);
    EXPECT_EQ(rows[1].summary.ap.se, 0.0);  // single repeat: zero-width band

    const auto files = experiments::report(records, tmp.path() / "report");
    std::ifstream csv(files.table);
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) ++lines;
    EXPECT_EQ(lines, 5);  // header + 4 rows
    ASSERT_EQ(files.plots.size(), 2u);
    for (const auto& p : files.plots) {
        const auto img = cv::imread(p.string());
        EXPECT_FALSE(img.empty());
    }
    std::ifstream manifest(files.manifest);
    std::string text((std::istreambuf_iterator<char>(manifest)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("diverged"), std::string::npos);

    EXPECT_THROW(experiments::report({}, tmp.path()), std::invalid_argument);
    std::ofstream(tmp.path() / "blocker") << "x";
    EXPECT_THROW(experiments::report(records, tmp.path() / "blocker" / "sub"), std::runtime_error);
}
