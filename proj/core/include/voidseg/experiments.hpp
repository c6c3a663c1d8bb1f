#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voidseg/dataio.hpp"
#include "voidseg/denoise.hpp"
#include "voidseg/eval.hpp"
#include "voidseg/schedule.hpp"
#include "voidseg/segtrain.hpp"

namespace voidseg::experiments {

struct ExperimentGrid {
    std::vector<segtrain::Scheme> schemes;
    std::vector<double> noise_levels;
    std::vector<int> subset_indices;
    int repeats = 3;
    std::string schedule_preset = "desk";
    /// Replaces the preset for both denoiser and segmenter when set.
    std::optional<segtrain::TrainSchedule> schedule_override;
    std::optional<segtrain::TrainSchedule> denoiser_schedule_override;
    std::vector<std::size_t> subset_sizes = dataio::dsb2018_subset_sizes();
    std::uint64_t base_seed = 0;
    segtrain::SegOptions seg_options;
    denoise::DenoiserOptions denoiser_options;
    std::vector<double> threshold_grid = infer::default_threshold_grid();
    std::filesystem::path output_dir = "runs";

    void validate() const;
    [[nodiscard]] std::size_t run_count() const;
    [[nodiscard]] segtrain::TrainSchedule schedule() const;
    [[nodiscard]] segtrain::TrainSchedule denoiser_schedule() const;
};

struct RunKey {
    segtrain::Scheme scheme = segtrain::Scheme::BaselineUNet;
    double noise = 0.0;
    int subset = 1;
    int repeat = 0;

    /// Filesystem-safe identifier, e.g. "SequentialUNet_n40_P3_r1".
    [[nodiscard]] std::string id() const;
    auto operator<=>(const RunKey&) const = default;
};

/// Pure function of the coordinates; distinct for distinct keys.
std::uint64_t derive_seed(std::uint64_t base_seed, const RunKey& key);

struct RunRecord {
    RunKey key;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::size_t train_images = 0;
    int best_epoch = 0;
    double validation_ap = 0.0;     ///< at the swept threshold
    eval::MetricsReport test;       ///< at the swept threshold
    double wall_seconds = 0.0;
    std::filesystem::path pipeline_dir;
    std::filesystem::path history_csv;
};

std::string record_to_json(const RunRecord& record);
RunRecord record_from_json(const std::string& text);

/// Adds Gaussian noise of `std` to every image of every split. Per-image
/// seeds derive from `seed`, the split and the pair name.
dataio::DatasetSplit corrupt_split(const dataio::DatasetSplit& clean, double std, std::uint64_t seed);

struct GridOutcome {
    std::vector<RunRecord> records;  ///< every cell, in grid order
    std::size_t executed = 0;
    std::size_t skipped = 0;
    std::vector<RunKey> failures;
};

/// Runs every (scheme, noise, subset, repeat) cell below grid.output_dir.
/// Completed cells (runs/<id>.json with ok) are loaded instead of rerun.
/// Denoisers are trained once per noise level and cached on disk.
GridOutcome run_grid(const ExperimentGrid& grid, const dataio::DatasetSplit& clean);

/// Successful records found below `dir/runs`.
std::vector<RunRecord> load_records(const std::filesystem::path& dir);

struct ReportRow {
    double noise = 0.0;
    segtrain::Scheme scheme = segtrain::Scheme::BaselineUNet;
    int subset = 1;
    std::size_t train_images = 0;
    eval::Summary summary;
};

/// One row per (noise, scheme, subset) over successful records.
std::vector<ReportRow> summarize(const std::vector<RunRecord>& records);

struct ReportFiles {
    std::filesystem::path table;
    std::vector<std::filesystem::path> plots;
    std::filesystem::path manifest;
};

/// CSV table, one PNG per (noise, metric) with mean curves and standard-error
/// bands over a log-scaled training-size axis, and a JSON manifest.
ReportFiles report(const std::vector<RunRecord>& records, const std::filesystem::path& out_dir);

}  // namespace voidseg::experiments
