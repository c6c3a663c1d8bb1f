// voidseg: data preparation, training, grids, evaluation and prediction.
//
// Shared options may come from a key = value file given with --config;
// flags on the command line take precedence.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "voidseg/dataio.hpp"
#include "voidseg/denoise.hpp"
#include "voidseg/eval.hpp"
#include "voidseg/experiments.hpp"
#include "voidseg/image_io.hpp"
#include "voidseg/infer.hpp"
#include "voidseg/log.hpp"
#include "voidseg/network.hpp"
#include "voidseg/random.hpp"
#include "voidseg/segtrain.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace voidseg;

namespace {

struct Options {
    // data
    fs::path data_root;
    std::string layout = "dsb2018";
    std::optional<int> patch_size;
    std::optional<std::size_t> validation_count;
    std::vector<std::size_t> subset_sizes;
    double noise = 0.0;
    std::uint64_t seed = 0;
    fs::path out;

    // schedule
    std::string preset = "desk";
    std::optional<int> epochs, steps, batch, crop;
    std::optional<double> lr;
    bool no_augment = false;

    // network
    int depth = 2;
    int features = 32;
    bool no_batch_norm = false;
    int rays = 32;
    float border_weight = targets::kDefaultBorderWeight;
};

fs::path cache_dir() {
    const char* env = std::getenv("VOIDSEG_CACHE_DIR");
    return env && *env ? fs::path(env) : fs::current_path() / "voidseg_cache";
}

void check_device() {
    const char* env = std::getenv("VOIDSEG_DEVICE");
    const std::string device = env && *env ? env : "cpu";
    if (device != "cpu") {
        throw std::runtime_error("VOIDSEG_DEVICE=" + device + " is not supported by this build; use cpu");
    }
}

fs::path out_dir(const Options& o, const std::string& fallback) {
    return o.out.empty() ? cache_dir() / fallback : o.out;
}

segtrain::TrainSchedule schedule_of(const Options& o) {
    auto s = segtrain::TrainSchedule::preset(o.preset);
    if (o.epochs) s.epochs = *o.epochs;
    if (o.steps) s.steps_per_epoch = *o.steps;
    if (o.batch) s.batch_size = *o.batch;
    if (o.crop) s.crop_size = *o.crop;
    if (o.lr) s.initial_lr = *o.lr;
    s.augment = !o.no_augment;
    s.seed = o.seed;
    s.validate();
    return s;
}

network::NetworkSpec spec_of(const Options& o, network::HeadKind head) {
    network::NetworkSpec spec;
    spec.depth = o.depth;
    spec.base_features = o.features;
    spec.batch_norm = !o.no_batch_norm;
    spec.n_rays = o.rays;
    spec.head = head;
    spec.validate();
    return spec;
}

segtrain::SegOptions seg_options_of(const Options& o) {
    segtrain::SegOptions s;
    s.spec = spec_of(o, network::HeadKind::Joint);
    s.border_weight = o.border_weight;
    return s;
}

denoise::DenoiserOptions denoiser_options_of(const Options& o) {
    denoise::DenoiserOptions d;
    d.spec = spec_of(o, network::HeadKind::Joint);
    return d;
}

dataio::DatasetLayout layout_of(const Options& o) {
    auto layout = o.layout == "bbbc004" ? dataio::DatasetLayout::bbbc004() : dataio::DatasetLayout::dsb2018();
    if (o.layout != "bbbc004" && o.layout != "dsb2018") throw std::invalid_argument("unknown layout " + o.layout);
    if (o.patch_size) layout.patch_size = *o.patch_size;
    if (o.validation_count) layout.validation_count = *o.validation_count;
    layout.seed = o.seed;
    return layout;
}

std::vector<std::size_t> subset_sizes_of(const Options& o) {
    if (!o.subset_sizes.empty()) return o.subset_sizes;
    return o.layout == "bbbc004" ? dataio::bbbc004_subset_sizes() : dataio::dsb2018_subset_sizes();
}

dataio::DatasetSplit clean_split(const Options& o) {
    if (o.data_root.empty()) throw std::invalid_argument("--data is required");
    return dataio::load_dataset(o.data_root, layout_of(o));
}

// Same corruption seed as the grid runner so single runs reproduce grid cells.
dataio::DatasetSplit noisy_split(const Options& o) {
    auto clean = clean_split(o);
    if (o.noise <= 0.0) return clean;
    return experiments::corrupt_split(clean, o.noise, combine_seed(o.seed, "noise"));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!(f << text)) throw std::runtime_error("cannot write " + path.string());
}

json metrics_json(const eval::MetricsReport& m) {
    return {{"ap", m.ap}, {"seg", m.seg}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"threshold", m.best_threshold}};
}

json manifest(const std::string& verb, const Options& o) {
    const auto s = schedule_of(o);
    return {{"verb", verb},
            {"data", o.data_root.string()},
            {"layout", o.layout},
            {"noise", o.noise},
            {"seed", o.seed},
            {"schedule",
             {{"preset", o.preset},
              {"epochs", s.epochs},
              {"steps_per_epoch", s.steps_per_epoch},
              {"batch_size", s.batch_size},
              {"crop_size", s.crop_size},
              {"initial_lr", s.initial_lr},
              {"augment", s.augment}}},
            {"network", json::parse(network::spec_to_json(spec_of(o, network::HeadKind::Joint)))}};
}

std::vector<ImagePair> selection_pairs(const dataio::DatasetSplit& split) {
    return split.validation.empty() ? split.train : split.validation;
}

// ---------------------------------------------------------------------------

void prepare_data(const Options& o, const std::vector<double>& noise_levels) {
    const auto split = clean_split(o);
    std::cout << "train patches " << split.train.size() << ", validation patches " << split.validation.size()
              << ", test images " << split.test.size() << "\n";
    for (double n : noise_levels) {
        const auto variant = dataio::write_noise_variant(o.data_root, n, combine_seed(o.seed, "noise"));
        std::cout << dataio::noise_variant_name(n) << " -> " << variant.string() << "\n";
    }
}

void train_denoiser(const Options& o) {
    const auto split = noisy_split(o);
    denoise::DenoiserData data;
    for (const auto& p : split.train) data.images.push_back(p.image);
    for (const auto& p : split.validation) {
        data.images.push_back(p.image);
        data.validation.push_back(p.image);
    }
    auto schedule = schedule_of(o);
    schedule.seed = combine_seed(o.seed, "denoiser/" + dataio::noise_variant_name(o.noise));
    auto result = denoise::train_n2v(data, denoiser_options_of(o), schedule);
    result.best.meta.provenance = "n2v/" + dataio::noise_variant_name(o.noise);

    const auto dir = out_dir(o, "denoiser_" + dataio::noise_variant_name(o.noise));
    fs::create_directories(dir);
    network::save_checkpoint(dir / "denoiser.ckpt", result.best);
    write_text(dir / "history.csv", segtrain::history_csv(result.history));
    auto m = manifest("train-denoiser", o);
    m["best_epoch"] = result.best_epoch;
    m["checkpoint"] = (dir / "denoiser.ckpt").string();
    write_text(dir / "manifest.json", m.dump(2));
    std::cout << "denoiser saved to " << (dir / "denoiser.ckpt").string() << " (best epoch " << result.best_epoch
              << ")\n";
}

void run_scheme(const Options& o, const std::string& scheme_name, int subset, const fs::path& denoiser_path) {
    const auto split = noisy_split(o);
    segtrain::SchemeConfig config;
    config.scheme = segtrain::parse_scheme(scheme_name);
    config.subset_index = subset;
    config.noise_std = o.noise;
    if (!denoiser_path.empty()) config.denoiser = network::load_checkpoint(denoiser_path);
    const auto plan = dataio::make_subsets(split.train.size(), subset_sizes_of(o), combine_seed(o.seed, "subsets"));

    const auto start = std::chrono::steady_clock::now();
    const auto result = segtrain::run_scheme(config, split, plan, schedule_of(o), seg_options_of(o));
    auto pipeline = result.pipeline;
    const auto sweep = infer::threshold_sweep(pipeline, selection_pairs(split));
    pipeline.threshold = sweep.best_threshold;
    const auto test = infer::evaluate_pipeline(pipeline, split.test);

    const auto dir = out_dir(o, scheme_name + "_" + dataio::noise_variant_name(o.noise) + "_P" + std::to_string(subset));
    segtrain::save_pipeline(dir / "pipeline", pipeline);
    write_text(dir / "history.csv", segtrain::history_csv(result.training.history));
    auto m = manifest("run-scheme", o);
    m["scheme"] = scheme_name;
    m["subset"] = subset;
    m["train_images"] = plan.subset(subset).size();
    m["best_epoch"] = result.training.best_epoch;
    m["validation_ap"] = sweep.best_ap;
    m["test"] = metrics_json(test);
    m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(dir / "manifest.json", m.dump(2));
    std::cout << scheme_name << ": threshold " << pipeline.threshold << ", test AP " << test.ap << ", SEG " << test.seg
              << "\n";
}

void run_grid(const Options& o, const std::vector<std::string>& schemes, const std::vector<double>& noise,
              const std::vector<int>& subsets, int repeats) {
    experiments::ExperimentGrid grid;
    for (const auto& s : schemes) grid.schemes.push_back(segtrain::parse_scheme(s));
    grid.noise_levels = noise;
    grid.subset_indices = subsets;
    grid.repeats = repeats;
    grid.schedule_override = schedule_of(o);
    grid.denoiser_schedule_override = schedule_of(o);
    grid.subset_sizes = subset_sizes_of(o);
    grid.base_seed = o.seed;
    grid.seg_options = seg_options_of(o);
    grid.denoiser_options = denoiser_options_of(o);
    grid.output_dir = out_dir(o, "grid");
    fs::create_directories(grid.output_dir);
    auto m = manifest("run-grid", o);
    m["schemes"] = schemes;
    m["noise_levels"] = noise;
    m["subsets"] = subsets;
    m["repeats"] = repeats;
    write_text(grid.output_dir / "grid.json", m.dump(2));

    const auto outcome = experiments::run_grid(grid, clean_split(o));
    std::cout << outcome.executed << " runs executed, " << outcome.skipped << " skipped, " << outcome.failures.size()
              << " failed\n";
    if (std::any_of(outcome.records.begin(), outcome.records.end(), [](const auto& r) { return r.ok; })) {
        const auto files = experiments::report(outcome.records, grid.output_dir / "report");
        std::cout << "report: " << files.table.string() << "\n";
    }
    if (!outcome.failures.empty()) throw std::runtime_error("some grid runs failed; rerun to retry them");
}

void evaluate(const Options& o, const fs::path& pipeline_dir, const std::string& split_name) {
    const auto pipeline = segtrain::load_pipeline(pipeline_dir);
    const auto split = noisy_split(o);
    const auto& pairs = split_name == "test" ? split.test : split_name == "validation" ? split.validation : split.train;
    const auto report = infer::evaluate_pipeline(pipeline, pairs);
    json j = metrics_json(report);
    j["split"] = split_name;
    j["images"] = pairs.size();
    std::cout << j.dump(2) << "\n";
}

void sweep_threshold(const Options& o, const fs::path& pipeline_dir) {
    auto pipeline = segtrain::load_pipeline(pipeline_dir);
    const auto sweep = infer::threshold_sweep(pipeline, selection_pairs(noisy_split(o)));
    pipeline.threshold = sweep.best_threshold;
    segtrain::save_pipeline(pipeline_dir, pipeline);
    for (std::size_t i = 0; i < sweep.grid.size(); ++i) {
        std::cout << sweep.grid[i] << "," << sweep.ap_per_threshold[i] << "\n";
    }
    std::cout << "best threshold " << sweep.best_threshold << " (AP " << sweep.best_ap << ") written to "
              << pipeline_dir.string() << "\n";
}

void report(const fs::path& grid_dir, const fs::path& out) {
    const auto records = experiments::load_records(grid_dir);
    const auto files = experiments::report(records, out.empty() ? grid_dir / "report" : out);
    std::cout << files.table.string() << "\n";
    for (const auto& p : files.plots) std::cout << p.string() << "\n";
}

void predict(const fs::path& pipeline_dir, const std::vector<fs::path>& inputs, const fs::path& out,
             bool probabilities) {
    infer::Predictor predictor(segtrain::load_pipeline(pipeline_dir));
    fs::create_directories(out);
    for (const auto& input : inputs) {
        const auto raw = io::read_raw_image(input);
        const auto prediction = predictor.predict(raw);
        const auto labels = infer::instances_from(prediction, predictor.pipeline().threshold,
                                                  predictor.pipeline().overlap_threshold);
        const auto stem = input.stem().string();
        io::write_label_map(out / (stem + "_labels.png"), labels);
        if (probabilities) {
            const auto& prob = prediction.kind == infer::Prediction::Kind::Star ? prediction.object_prob
                                                                                : prediction.foreground();
            io::write_raw_image(out / (stem + "_prob.tif"), prob);
        }
        std::cout << input.string() << " -> " << (out / (stem + "_labels.png")).string() << "\n";
    }
}

void add_shared_options(CLI::App& app, Options& o) {
    app.add_option("--data", o.data_root, "dataset root with train/ and test/");
    app.add_option("--layout", o.layout, "dsb2018 or bbbc004")->check(CLI::IsMember({"dsb2018", "bbbc004"}));
    app.add_option("--patch-size", o.patch_size, "training patch side (0 keeps whole images)");
    app.add_option("--validation-count", o.validation_count, "patches held out for validation");
    app.add_option("--subset-sizes", o.subset_sizes, "ten increasing sizes of P1..P10 (default: per layout)")
        ->delimiter(',');
    app.add_option("--noise", o.noise, "Gaussian noise std added in memory");
    app.add_option("--seed", o.seed, "base seed");
    app.add_option("--out", o.out, "output directory (default below VOIDSEG_CACHE_DIR)");
    app.add_option("--preset", o.preset, "schedule preset")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--epochs", o.epochs);
    app.add_option("--steps", o.steps, "steps per epoch");
    app.add_option("--batch", o.batch, "batch size");
    app.add_option("--crop", o.crop, "training crop side (0 uses whole patches)");
    app.add_option("--lr", o.lr, "initial learning rate");
    app.add_flag("--no-augment", o.no_augment, "disable flips and rotations");
    app.add_option("--depth", o.depth, "U-Net depth");
    app.add_option("--features", o.features, "features of the first level");
    app.add_flag("--no-batch-norm", o.no_batch_norm);
    app.add_option("--rays", o.rays, "star rays");
    app.add_option("--border-weight", o.border_weight, "loss weight of border pixels");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voidseg: denoising-boosted nuclei segmentation"};
    app.set_config("--config", "", "key = value file with shared options");
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    std::string level = "info";
    app.add_option("--log-level", level, "debug, info, warn, error or off");
    add_shared_options(app, o);

    std::vector<double> noise_levels;
    auto* prep = app.add_subcommand("prepare-data", "verify a dataset, count patches and write noise variants");
    prep->add_option("--noise-variants", noise_levels, "noise levels to write to disk")->delimiter(',');

    app.add_subcommand("train-denoiser", "train a blind-spot denoiser at --noise");

    std::string scheme = "BaselineUNet";
    int subset = 1;
    fs::path denoiser;
    auto* scheme_cmd = app.add_subcommand("run-scheme", "train one scheme on subset P_i and evaluate it");
    scheme_cmd->add_option("--scheme", scheme, "BaselineUNet, BaselineStarDist, SequentialUNet, ...");
    scheme_cmd->add_option("--subset", subset, "subset index 1..10");
    scheme_cmd->add_option("--denoiser", denoiser, "denoiser checkpoint")->check(CLI::ExistingFile);

    std::vector<std::string> schemes{"BaselineUNet", "SequentialUNet"};
    std::vector<double> grid_noise{0.0};
    std::vector<int> subsets{1};
    int repeats = 3;
    auto* grid_cmd = app.add_subcommand("run-grid", "run a resumable scheme x noise x subset x repeat grid");
    grid_cmd->add_option("--schemes", schemes)->delimiter(',');
    grid_cmd->add_option("--noise-levels", grid_noise)->delimiter(',');
    grid_cmd->add_option("--subsets", subsets)->delimiter(',');
    grid_cmd->add_option("--repeats", repeats);

    fs::path pipeline_dir;
    std::string split_name = "test";
    auto* eval_cmd = app.add_subcommand("evaluate", "AP and SEG of a saved pipeline");
    eval_cmd->add_option("--pipeline", pipeline_dir)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--split", split_name)->check(CLI::IsMember({"train", "validation", "test"}));

    auto* sweep_cmd = app.add_subcommand("sweep-threshold", "pick the threshold maximizing validation AP");
    sweep_cmd->add_option("--pipeline", pipeline_dir)->required()->check(CLI::ExistingDirectory);

    fs::path grid_dir, report_out;
    auto* report_cmd = app.add_subcommand("report", "tables and plots from finished grid runs");
    report_cmd->add_option("--grid", grid_dir)->required()->check(CLI::ExistingDirectory);
    report_cmd->add_option("--report-dir", report_out);

    std::vector<fs::path> inputs;
    fs::path predict_out = "predictions";
    bool probabilities = false;
    auto* predict_cmd = app.add_subcommand("predict", "16-bit instance label maps for raw images");
    predict_cmd->add_option("--pipeline", pipeline_dir)->required()->check(CLI::ExistingDirectory);
    predict_cmd->add_option("inputs", inputs)->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--output", predict_out);
    predict_cmd->add_flag("--probabilities", probabilities, "also write probability maps");

    CLI11_PARSE(app, argc, argv);

    try {
        log::set_level(level);
        check_device();
        network::configure_threads(1);
        if (*prep) prepare_data(o, noise_levels);
        else if (app.got_subcommand("train-denoiser")) train_denoiser(o);
        else if (*scheme_cmd) run_scheme(o, scheme, subset, denoiser);
        else if (*grid_cmd) run_grid(o, schemes, grid_noise, subsets, repeats);
        else if (*eval_cmd) evaluate(o, pipeline_dir, split_name);
        else if (*sweep_cmd) sweep_threshold(o, pipeline_dir);
        else if (*report_cmd) report(grid_dir, report_out);
        else if (*predict_cmd) predict(pipeline_dir, inputs, predict_out, probabilities);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
