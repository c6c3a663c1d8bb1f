#include "voidseg/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <json.hpp>

#include "voidseg/infer.hpp"
#include "voidseg/log.hpp"
#include "voidseg/random.hpp"

namespace voidseg::experiments {

namespace fs = std::filesystem;
using nlohmann::json;
using segtrain::Scheme;

void ExperimentGrid::validate() const {
    if (schemes.empty() || noise_levels.empty() || subset_indices.empty()) {
        throw std::invalid_argument("experiment grid is empty");
    }
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    for (int i : subset_indices) {
        if (i < 1 || i > static_cast<int>(dataio::kSubsetCount)) {
            throw std::invalid_argument("subset index " + std::to_string(i) + " outside 1..10");
        }
    }
    for (double n : noise_levels) {
        if (!(n >= 0.0) || !std::isfinite(n)) throw std::invalid_argument("noise levels must be finite and >= 0");
    }
    if (subset_sizes.size() != dataio::kSubsetCount) throw std::invalid_argument("grid needs 10 subset sizes");
    if (!seg_options.spec.same_body(denoiser_options.spec)) {
        throw std::invalid_argument("denoiser and segmenter bodies differ; finetuning needs equal bodies");
    }
    if (threshold_grid.empty()) throw std::invalid_argument("threshold grid is empty");
    schedule().validate();
    denoiser_schedule().validate();
}

std::size_t ExperimentGrid::run_count() const {
    return schemes.size() * noise_levels.size() * subset_indices.size() * static_cast<std::size_t>(repeats);
}

segtrain::TrainSchedule ExperimentGrid::schedule() const {
    return schedule_override ? *schedule_override : segtrain::TrainSchedule::preset(schedule_preset);
}

segtrain::TrainSchedule ExperimentGrid::denoiser_schedule() const {
    if (denoiser_schedule_override) return *denoiser_schedule_override;
    return schedule();
}

std::string RunKey::id() const {
    std::ostringstream out;
    out << segtrain::to_string(scheme) << '_' << dataio::noise_variant_name(noise) << "_P" << subset << "_r"
        << repeat;
    return out.str();
}

std::uint64_t derive_seed(std::uint64_t base_seed, const RunKey& key) {
    auto s = combine_seed(base_seed, segtrain::to_string(key.scheme));
    s = combine_seed(s, dataio::noise_variant_name(key.noise));
    s = combine_seed(s, static_cast<std::uint64_t>(key.subset));
    return combine_seed(s, static_cast<std::uint64_t>(key.repeat));
}

// ---------------------------------------------------------------------------

namespace {

json metrics_json(const eval::MetricsReport& m) {
    json per = json::array();
    for (const auto& im : m.per_image) {
        per.push_back({{"name", im.name},
                       {"tp", im.tp},
                       {"fp", im.fp},
                       {"fn", im.fn},
                       {"ap", im.ap},
                       {"seg", im.seg},
                       {"gt_objects", im.gt_objects}});
    }
    return {{"ap", m.ap},   {"seg", m.seg}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"best_threshold", m.best_threshold},
            {"per_image", per}};
}

eval::MetricsReport metrics_from(const json& j) {
    eval::MetricsReport m;
    m.ap = j.at("ap").get<double>();
    m.seg = j.at("seg").get<double>();
    m.tp = j.at("tp").get<std::size_t>();
    m.fp = j.at("fp").get<std::size_t>();
    m.fn = j.at("fn").get<std::size_t>();
    m.best_threshold = j.at("best_threshold").get<double>();
    for (const auto& p : j.at("per_image")) {
        eval::ImageMetrics im;
        im.name = p.at("name").get<std::string>();
        im.tp = p.at("tp").get<std::size_t>();
        im.fp = p.at("fp").get<std::size_t>();
        im.fn = p.at("fn").get<std::size_t>();
        im.ap = p.at("ap").get<double>();
        im.seg = p.at("seg").get<double>();
        im.gt_objects = p.at("gt_objects").get<std::size_t>();
        m.per_image.push_back(std::move(im));
    }
    return m;
}

void write_atomic(const fs::path& path, const std::string& text) {
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::optional<std::string> slurp(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Exclusive claim on a run; a claim whose owner process is gone is taken over.
class Claim {
public:
    explicit Claim(fs::path path) : path_(std::move(path)) {
        for (int attempt = 0; attempt < 2 && !held_; ++attempt) {
            const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const auto pid = std::to_string(::getpid());
                [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
                ::close(fd);
                held_ = true;
                break;
            }
            const auto owner = slurp(path_);
            const long pid = owner ? std::atol(owner->c_str()) : 0;
            if (pid > 0 && ::kill(static_cast<pid_t>(pid), 0) == 0) break;
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    Claim(const Claim&) = delete;
    Claim& operator=(const Claim&) = delete;
    ~Claim() {
        if (held_) {
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    [[nodiscard]] bool held() const { return held_; }

private:
    fs::path path_;
    bool held_ = false;
};

std::vector<RawImage> images_of(const std::vector<ImagePair>& pairs) {
    std::vector<RawImage> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.image);
    return out;
}

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << v;
    return s.str();
}

std::string schedule_key(const segtrain::TrainSchedule& s) {
    std::ostringstream out;
    out.precision(17);
    out << s.initial_lr << ',' << s.batch_size << ',' << s.epochs << ',' << s.steps_per_epoch << ','
        << s.plateau.factor << ',' << s.plateau.patience << ',' << s.plateau.min_lr << ',' << s.crop_size << ','
        << s.augment << ',' << s.validation_limit;
    return out.str();
}

}  // namespace

std::string record_to_json(const RunRecord& r) {
    json j{{"scheme", segtrain::to_string(r.key.scheme)},
           {"noise", r.key.noise},
           {"subset", r.key.subset},
           {"repeat", r.key.repeat},
           {"id", r.key.id()},
           {"seed", r.seed},
           {"ok", r.ok},
           {"error", r.error},
           {"train_images", r.train_images},
           {"best_epoch", r.best_epoch},
           {"validation_ap", r.validation_ap},
           {"test", metrics_json(r.test)},
           {"wall_seconds", r.wall_seconds},
           {"pipeline_dir", r.pipeline_dir.string()},
           {"history_csv", r.history_csv.string()}};
    return j.dump(2) + "\n";
}

RunRecord record_from_json(const std::string& text) {
    const auto j = json::parse(text);
    RunRecord r;
    r.key.scheme = segtrain::parse_scheme(j.at("scheme").get<std::string>());
    r.key.noise = j.at("noise").get<double>();
    r.key.subset = j.at("subset").get<int>();
    r.key.repeat = j.at("repeat").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("ok").get<bool>();
    r.error = j.value("error", "");
    r.train_images = j.at("train_images").get<std::size_t>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.validation_ap = j.at("validation_ap").get<double>();
    r.test = metrics_from(j.at("test"));
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.pipeline_dir = j.at("pipeline_dir").get<std::string>();
    r.history_csv = j.at("history_csv").get<std::string>();
    return r;
}

dataio::DatasetSplit corrupt_split(const dataio::DatasetSplit& clean, double std, std::uint64_t seed) {
    if (std == 0.0) return clean;
    auto noisy = [&](const std::vector<ImagePair>& pairs, const char* split) {
        std::vector<ImagePair> out;
        out.reserve(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto s = combine_seed(combine_seed(seed, split), pairs[i].name + "#" + std::to_string(i));
            out.push_back({dataio::add_gaussian_noise(pairs[i].image, {0.0, std, s}), pairs[i].labels, pairs[i].name});
        }
        return out;
    };
    return {noisy(clean.train, "train"), noisy(clean.validation, "validation"), noisy(clean.test, "test")};
}

// ---------------------------------------------------------------------------

namespace {

class DenoiserCache {
public:
    DenoiserCache(const ExperimentGrid& grid) : grid_(grid), dir_(grid.output_dir / "denoisers") {}

    const network::WeightSnapshot& get(double noise, const dataio::DatasetSplit& split) {
        const auto key = cache_key(noise);
        if (auto it = memory_.find(key); it != memory_.end()) return it->second;
        const auto path = dir_ / (key + ".ckpt");
        if (fs::exists(path)) {
            log::info("reusing denoiser ", path.string());
            return memory_.emplace(key, network::load_checkpoint(path)).first->second;
        }
        fs::create_directories(dir_);
        denoise::DenoiserData data;
        data.images = images_of(split.train);
        for (const auto& p : split.validation) data.images.push_back(p.image);
        data.validation = images_of(split.validation);
        auto schedule = grid_.denoiser_schedule();
        schedule.seed = combine_seed(grid_.base_seed, "denoiser/" + dataio::noise_variant_name(noise));
        log::info("training denoiser for ", dataio::noise_variant_name(noise));
        auto result = denoise::train_n2v(data, grid_.denoiser_options, schedule);
        result.best.meta.provenance = "n2v/" + dataio::noise_variant_name(noise);
        network::save_checkpoint(path, result.best);
        std::ofstream(dir_ / (key + "_history.csv")) << segtrain::history_csv(result.history);
        return memory_.emplace(key, std::move(result.best)).first->second;
    }

private:
    std::string cache_key(double noise) const {
        const auto& o = grid_.denoiser_options;
        std::ostringstream config;
        config.precision(17);
        config << network::spec_to_json(o.spec) << ';' << o.mask_fraction << ';' << o.replacement_radius << ';'
               << o.normalization.low << ';' << o.normalization.high << ';'
               << schedule_key(grid_.denoiser_schedule()) << ';' << grid_.base_seed;
        return dataio::noise_variant_name(noise) + "_" + hex(fnv1a(config.str()));
    }

    const ExperimentGrid& grid_;
    fs::path dir_;
    std::map<std::string, network::WeightSnapshot> memory_;
};

RunRecord execute(const ExperimentGrid& grid, const RunKey& key, const dataio::DatasetSplit& split,
                  const dataio::SubsetPlan& plan, DenoiserCache& denoisers) {
    RunRecord record;
    record.key = key;
    record.seed = derive_seed(grid.base_seed, key);
    record.train_images = plan.subset(key.subset).size();
    const auto run_dir = grid.output_dir / "runs" / key.id();
    const auto start = std::chrono::steady_clock::now();
    try {
        segtrain::SchemeConfig config;
        config.scheme = key.scheme;
        config.subset_index = key.subset;
        config.noise_std = key.noise;
        if (segtrain::needs_denoiser(key.scheme)) config.denoiser = denoisers.get(key.noise, split);

        auto schedule = grid.schedule();
        schedule.seed = record.seed;
        const auto result = segtrain::run_scheme(config, split, plan, schedule, grid.seg_options);

        auto pipeline = result.pipeline;
        std::vector<ImagePair> selection = split.validation;
        if (selection.empty()) {
            for (auto i : plan.subset(key.subset)) selection.push_back(split.train[i]);
        }
        const auto sweep = infer::threshold_sweep(pipeline, selection, grid.threshold_grid);
        pipeline.threshold = sweep.best_threshold;
        record.validation_ap = sweep.best_ap;
        record.test = infer::evaluate_pipeline(pipeline, split.test);
        record.best_epoch = result.training.best_epoch;

        fs::create_directories(run_dir);
        record.pipeline_dir = run_dir / "pipeline";
        segtrain::save_pipeline(record.pipeline_dir, pipeline);
        record.history_csv = run_dir / "history.csv";
        std::ofstream(record.history_csv) << segtrain::history_csv(result.training.history);
        record.ok = true;
    } catch (const std::exception& e) {
        record.ok = false;
        record.error = e.what();
        log::error("run ", key.id(), " failed: ", e.what());
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

}  // namespace

GridOutcome run_grid(const ExperimentGrid& grid, const dataio::DatasetSplit& clean) {
    grid.validate();
    if (clean.train.empty()) throw std::invalid_argument("run_grid: no training data");
    const auto runs_dir = grid.output_dir / "runs";
    fs::create_directories(runs_dir);

    const auto plan =
        dataio::make_subsets(clean.train.size(), grid.subset_sizes, combine_seed(grid.base_seed, "subsets"));
    DenoiserCache denoisers(grid);

    GridOutcome outcome;
    for (double noise : grid.noise_levels) {
        std::optional<dataio::DatasetSplit> split;
        for (auto scheme : grid.schemes) {
            for (int subset : grid.subset_indices) {
                for (int repeat = 0; repeat < grid.repeats; ++repeat) {
                    const RunKey key{scheme, noise, subset, repeat};
                    const auto record_path = runs_dir / (key.id() + ".json");
                    if (auto text = slurp(record_path)) {
                        auto existing = record_from_json(*text);
                        if (existing.ok) {
                            outcome.records.push_back(std::move(existing));
                            ++outcome.skipped;
                            continue;
                        }
                    }
                    Claim claim(runs_dir / (key.id() + ".claim"));
                    if (!claim.held()) {
                        log::info("run ", key.id(), " is claimed by another worker; skipping");
                        ++outcome.skipped;
                        continue;
                    }
                    if (!split) split = corrupt_split(clean, noise, combine_seed(grid.base_seed, "noise"));
                    log::info("run ", key.id(), " (", plan.subset(subset).size(), " training patches)");
                    auto record = execute(grid, key, *split, plan, denoisers);
                    write_atomic(record_path, record_to_json(record));
                    if (!record.ok) outcome.failures.push_back(key);
                    outcome.records.push_back(std::move(record));
                    ++outcome.executed;
                }
            }
        }
    }
    if (!outcome.failures.empty()) {
        std::string ids;
        for (const auto& k : outcome.failures) ids += " " + k.id();
        log::warn(outcome.failures.size(), " of ", grid.run_count(), " runs failed:", ids);
    }
    return outcome;
}

std::vector<RunRecord> load_records(const fs::path& dir) {
    std::vector<RunRecord> out;
    const auto runs_dir = dir / "runs";
    if (!fs::is_directory(runs_dir)) throw std::runtime_error("no runs directory below " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(runs_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto r = record_from_json(*slurp(f));
        if (r.ok) out.push_back(std::move(r));
    }
    return out;
}

}  // namespace voidseg::experiments
