#include "voidseg/segtrain.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "training_util.hpp"
#include "voidseg/denoise.hpp"
#include "voidseg/eval.hpp"
#include "voidseg/log.hpp"

namespace voidseg::segtrain {

torch::Tensor weighted_cross_entropy(const torch::Tensor& logits, const torch::Tensor& classes,
                                     const torch::Tensor& weights) {
    const auto log_probs = torch::log_softmax(logits, 1);
    const auto nll = -log_probs.gather(1, classes.unsqueeze(1)).squeeze(1);
    return (nll * weights).mean();
}

StarLoss stardist_loss(const torch::Tensor& raw, const torch::Tensor& prob_target, const torch::Tensor& dist_target,
                       double distance_weight) {
    const auto n_rays = dist_target.size(1);
    const auto prob_logit = raw.slice(1, n_rays, n_rays + 1);
    const auto dist = torch::relu(raw.slice(1, 0, n_rays));
    StarLoss loss;
    loss.prob = torch::binary_cross_entropy_with_logits(prob_logit, prob_target);
    const auto weight_sum = prob_target.sum();
    const auto abs_err = ((dist - dist_target).abs() * prob_target).sum();
    loss.distance = abs_err / (static_cast<double>(n_rays) * torch::clamp_min(weight_sum, 1e-6));
    loss.total = loss.prob + distance_weight * loss.distance;
    return loss;
}

namespace {

using network::UNet;
using network::WeightSnapshot;

struct Validation {
    double loss = 0.0;
    double ap = 0.0;
};

/// Shared optimization loop. `batch_loss` draws and scores one batch;
/// `validate` scores the current model.
template <typename BatchLoss, typename Validate>
SegTrainResult optimize(UNet& model, const TrainSchedule& schedule, const std::string& provenance,
                        BatchLoss&& batch_loss, Validate&& validate) {
    model->train();
    torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(schedule.initial_lr));
    PlateauScheduler plateau(schedule.initial_lr, schedule.plateau);

    SegTrainResult result;
    result.initial = network::snapshot(model, provenance, 0);
    const auto v0 = validate(model);
    result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), v0.loss, v0.ap, schedule.initial_lr});
    result.best = result.initial;
    double best_ap = v0.ap;
    double best_loss = v0.loss;

    for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (int step = 0; step < schedule.steps_per_epoch; ++step) {
            optimizer.zero_grad();
            auto loss = batch_loss(model);
            const double value = loss.template item<double>();
            detail::require_finite_loss(value, epoch, step, provenance);
            loss.backward();
            optimizer.step();
            epoch_loss += value;
        }
        const auto v = validate(model);
        detail::require_finite_loss(v.loss, epoch, schedule.steps_per_epoch, provenance + " validation");
        result.history.push_back({epoch, epoch_loss / schedule.steps_per_epoch, v.loss, v.ap, plateau.lr()});
        if (v.ap > best_ap || (v.ap == best_ap && v.loss < best_loss)) {
            best_ap = v.ap;
            best_loss = v.loss;
            result.best = network::snapshot(model, provenance, epoch);
            result.best_epoch = epoch;
        }
        log::info(provenance, " epoch ", epoch, "/", schedule.epochs, " train ",
                  log::fixed(epoch_loss / schedule.steps_per_epoch, 5), " val ", log::fixed(v.loss, 5), " ap ",
                  log::fixed(v.ap, 4), " lr ", log::sci(plateau.lr(), 2));
        detail::set_lr(optimizer, plateau.step(v.loss));
    }
    return result;
}

torch::Tensor class_tensor(const std::vector<targets::ThreeClassMap>& maps) {
    const auto shape = maps.front().shape();
    auto t = torch::empty({static_cast<int64_t>(maps.size()), shape.height, shape.width}, torch::kInt64);
    auto acc = t.accessor<int64_t, 3>();
    for (std::size_t i = 0; i < maps.size(); ++i) {
        for (int y = 0; y < shape.height; ++y) {
            for (int x = 0; x < shape.width; ++x) acc[static_cast<int64_t>(i)][y][x] = maps[i](y, x);
        }
    }
    return t;
}

torch::Tensor weight_tensor(const std::vector<targets::BorderWeightMap>& maps) {
    return detail::stack_images(maps).squeeze(1);
}

struct Chunk {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Consecutive runs of equal-shaped items, at most `limit` long.
template <typename Item, typename ShapeOf>
std::vector<Chunk> chunks(const std::vector<Item>& items, std::size_t limit, ShapeOf shape_of) {
    std::vector<Chunk> out;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i + 1;
        while (j < items.size() && j - i < limit && shape_of(items[j]) == shape_of(items[i])) ++j;
        out.push_back({i, j});
        i = j;
    }
    return out;
}

struct PreparedPairs {
    std::vector<RawImage> images;  // normalized
    std::vector<LabelMap> labels;
};

PreparedPairs prepare(const std::vector<ImagePair>& pairs, dataio::PercentileRange range) {
    PreparedPairs out;
    for (const auto& p : pairs) {
        if (p.labels.empty()) throw std::invalid_argument("labels missing for " + p.name);
        if (p.image.shape() != p.labels.shape()) throw std::invalid_argument("image/label shape mismatch for " + p.name);
        out.images.push_back(dataio::normalize(p.image, range));
        out.labels.push_back(p.labels);
    }
    return out;
}

double pooled_ap(UNet& model, const PreparedPairs& data, std::size_t batch, double threshold, double overlap) {
    std::vector<eval::ImageMetrics> metrics;
    for (const auto& c : chunks(data.images, batch, [](const RawImage& im) { return im.shape(); })) {
        std::vector<RawImage> imgs(data.images.begin() + static_cast<std::ptrdiff_t>(c.begin),
                                   data.images.begin() + static_cast<std::ptrdiff_t>(c.end));
        const auto preds = network::predict_batch(model, imgs);
        for (std::size_t k = 0; k < preds.size(); ++k) {
            metrics.push_back(eval::evaluate_image(data.labels[c.begin + k],
                                                   infer::instances_from(preds[k], threshold, overlap)));
        }
    }
    return eval::pool(std::move(metrics), threshold).ap;
}

}  // namespace

SegTrainResult train_unet_seg(const std::vector<ImagePair>& train, const std::vector<ImagePair>& validation,
                              const std::optional<WeightSnapshot>& init, const SegOptions& options,
                              const TrainSchedule& schedule) {
    if (train.empty()) throw std::invalid_argument("train_unet_seg: empty training subset");
    schedule.validate();
    auto spec = options.spec;
    spec.head = network::HeadKind::Joint;

    const auto data = prepare(train, options.normalization);
    const auto val = prepare(detail::head_of(validation.empty() ? train : validation, schedule.validation_limit),
                             options.normalization);
    std::vector<targets::ThreeClassMap> classes;
    for (const auto& l : data.labels) classes.push_back(targets::to_three_class(l));
    std::vector<targets::ThreeClassMap> val_classes;
    for (const auto& l : val.labels) val_classes.push_back(targets::to_three_class(l));

    auto model = network::build_unet(spec, combine_seed(schedule.seed, "init"));
    if (init) model = network::transfer_weights(*init, model, network::TransferPolicy::BodyAndCompatibleHead);

    detail::SampleDrawer drawer(combine_seed(schedule.seed, "batches"), schedule.crop_size, schedule.augment);
    std::vector<RawImage> imgs;
    std::vector<targets::ThreeClassMap> cls;
    std::vector<targets::BorderWeightMap> wts;

    auto batch_loss = [&](UNet& m) {
        imgs.clear();
        cls.clear();
        wts.clear();
        for (int b = 0; b < schedule.batch_size; ++b) {
            const auto w = drawer.draw(data.images.size(), data.images.front().shape());
            imgs.push_back(detail::take(data.images[w.index], w));
            cls.push_back(detail::take(classes[w.index], w));
            wts.push_back(targets::class_weight_map(cls.back(), options.border_weight));
        }
        const auto logits = m->forward(detail::stack_images(imgs)).slice(1, 0, 3);
        return weighted_cross_entropy(logits, class_tensor(cls), weight_tensor(wts));
    };

    const auto batch = static_cast<std::size_t>(schedule.batch_size);
    auto validate = [&](UNet& m) {
        Validation v;
        {
            torch::NoGradGuard no_grad;
            m->eval();
            double sum = 0.0;
            for (const auto& c : chunks(val.images, batch, [](const RawImage& im) { return im.shape(); })) {
                std::vector<RawImage> xs(val.images.begin() + static_cast<std::ptrdiff_t>(c.begin),
                                         val.images.begin() + static_cast<std::ptrdiff_t>(c.end));
                std::vector<targets::ThreeClassMap> cs(val_classes.begin() + static_cast<std::ptrdiff_t>(c.begin),
                                                       val_classes.begin() + static_cast<std::ptrdiff_t>(c.end));
                std::vector<targets::BorderWeightMap> ws;
                for (const auto& cm : cs) ws.push_back(targets::class_weight_map(cm, options.border_weight));
                const auto logits = m->forward(detail::stack_images(xs)).slice(1, 0, 3);
                sum += weighted_cross_entropy(logits, class_tensor(cs), weight_tensor(ws)).item<double>() *
                       static_cast<double>(c.end - c.begin);
            }
            m->train();
            v.loss = sum / static_cast<double>(val.images.size());
        }
        v.ap = pooled_ap(m, val, batch, options.selection_threshold, options.overlap_threshold);
        return v;
    };

    return optimize(model, schedule, init ? "unet-seg-from-" + init->meta.provenance : "unet-seg", batch_loss,
                    validate);
}

SegTrainResult train_stardist(const std::vector<ImagePair>& train, const std::vector<ImagePair>& validation,
                              const SegOptions& options, const TrainSchedule& schedule) {
    if (train.empty()) throw std::invalid_argument("train_stardist: empty training subset");
    schedule.validate();
    auto spec = options.spec;
    spec.head = network::HeadKind::Star;
    const int n_rays = spec.n_rays;

    const auto data = prepare(train, options.normalization);
    const auto val = prepare(detail::head_of(validation.empty() ? train : validation, schedule.validation_limit),
                             options.normalization);

    struct TargetTensors {
        torch::Tensor prob;  // 1 x H x W
        torch::Tensor dist;  // K x H x W
    };
    auto to_tensors = [&](const LabelMap& labels) {
        const auto t = targets::star_distances(labels, n_rays);
        const auto h = t.shape.height;
        const auto w = t.shape.width;
        TargetTensors out;
        out.prob = torch::from_blob(const_cast<float*>(t.object_prob.data()), {1, h, w}).clone();
        out.dist = torch::from_blob(const_cast<float*>(t.distances.data()), {n_rays, h, w}).clone();
        return out;
    };

    // Targets are recomputed from the transformed label map; cached while small.
    const bool cache_targets = data.labels.size() * 8 <= 160;
    std::map<std::pair<std::size_t, int>, TargetTensors> cache;
    auto targets_for = [&](std::size_t index, const dataio::Dihedral& g) {
        const auto key = std::make_pair(index, g.index());
        if (cache_targets) {
            auto it = cache.find(key);
            if (it != cache.end()) return it->second;
        }
        auto t = to_tensors(dataio::apply(g, data.labels[index]));
        if (cache_targets) cache.emplace(key, t);
        return t;
    };

    std::vector<TargetTensors> val_targets;
    for (const auto& l : val.labels) val_targets.push_back(to_tensors(l));

    auto model = network::build_unet(spec, combine_seed(schedule.seed, "init"));
    detail::SampleDrawer drawer(combine_seed(schedule.seed, "batches"), schedule.crop_size, schedule.augment);
    std::vector<RawImage> imgs;
    std::vector<torch::Tensor> probs, dists;

    auto batch_loss = [&](UNet& m) {
        imgs.clear();
        probs.clear();
        dists.clear();
        for (int b = 0; b < schedule.batch_size; ++b) {
            const auto w = drawer.draw(data.images.size(), data.images.front().shape());
            imgs.push_back(detail::take(data.images[w.index], w));
            const auto t = targets_for(w.index, w.transform);
            probs.push_back(t.prob.slice(1, w.y0, w.y0 + w.size_h).slice(2, w.x0, w.x0 + w.size_w));
            dists.push_back(t.dist.slice(1, w.y0, w.y0 + w.size_h).slice(2, w.x0, w.x0 + w.size_w));
        }
        const auto raw = m->forward(detail::stack_images(imgs));
        return stardist_loss(raw, torch::stack(probs), torch::stack(dists), options.distance_loss_weight).total;
    };

    const auto batch = static_cast<std::size_t>(schedule.batch_size);
    auto validate = [&](UNet& m) {
        Validation v;
        {
            torch::NoGradGuard no_grad;
            m->eval();
            double sum = 0.0;
            for (const auto& c : chunks(val.images, batch, [](const RawImage& im) { return im.shape(); })) {
                std::vector<RawImage> xs(val.images.begin() + static_cast<std::ptrdiff_t>(c.begin),
                                         val.images.begin() + static_cast<std::ptrdiff_t>(c.end));
                std::vector<torch::Tensor> ps, ds;
                for (auto i = c.begin; i < c.end; ++i) {
                    ps.push_back(val_targets[i].prob);
                    ds.push_back(val_targets[i].dist);
                }
                const auto raw = m->forward(detail::stack_images(xs));
                sum += stardist_loss(raw, torch::stack(ps), torch::stack(ds), options.distance_loss_weight)
                           .total.item<double>() *
                       static_cast<double>(c.end - c.begin);
            }
            m->train();
            v.loss = sum / static_cast<double>(val.images.size());
        }
        v.ap = pooled_ap(m, val, batch, options.selection_threshold, options.overlap_threshold);
        return v;
    };

    return optimize(model, schedule, "stardist", batch_loss, validate);
}

// ---------------------------------------------------------------------------

std::string to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::BaselineUNet: return "BaselineUNet";
        case Scheme::BaselineStarDist: return "BaselineStarDist";
        case Scheme::SequentialUNet: return "SequentialUNet";
        case Scheme::SequentialStarDist: return "SequentialStarDist";
        case Scheme::FinetuneUNet: return "FinetuneUNet";
        case Scheme::FinetuneSequentialUNet: return "FinetuneSequentialUNet";
    }
    return "unknown";
}

std::vector<Scheme> all_schemes() {
    return {Scheme::BaselineUNet,     Scheme::BaselineStarDist, Scheme::SequentialUNet,
            Scheme::SequentialStarDist, Scheme::FinetuneUNet,   Scheme::FinetuneSequentialUNet};
}

Scheme parse_scheme(const std::string& text) {
    for (auto s : all_schemes()) {
        if (to_string(s) == text) return s;
    }
    if (text == "FinetuneStarDist" || text == "FinetuneSequentialStarDist") {
        throw std::invalid_argument(text + ": this approach only applies to the U-Net baseline");
    }
    throw std::invalid_argument("unknown scheme '" + text + "'");
}

bool is_stardist(Scheme scheme) {
    return scheme == Scheme::BaselineStarDist || scheme == Scheme::SequentialStarDist;
}

bool denoises_input(Scheme scheme) {
    return scheme == Scheme::SequentialUNet || scheme == Scheme::SequentialStarDist ||
           scheme == Scheme::FinetuneSequentialUNet;
}

bool initializes_from_denoiser(Scheme scheme) {
    return scheme == Scheme::FinetuneUNet || scheme == Scheme::FinetuneSequentialUNet;
}

void SchemeConfig::validate() const {
    if (needs_denoiser(scheme) && !denoiser) {
        throw std::invalid_argument(to_string(scheme) + " requires a trained denoiser snapshot");
    }
    if (!needs_denoiser(scheme) && denoiser) {
        throw std::invalid_argument(to_string(scheme) + " does not use a denoiser");
    }
    if (denoiser && denoiser->meta.spec.regression_channel() < 0) {
        throw std::invalid_argument("denoiser snapshot has no regression channel");
    }
    if (subset_index < 1 || subset_index > static_cast<int>(dataio::kSubsetCount)) {
        throw std::invalid_argument("subset index must lie in 1..10");
    }
}

std::vector<RawImage> denoise_images(const WeightSnapshot& denoiser, const std::vector<RawImage>& raw,
                                     dataio::PercentileRange normalization) {
    auto model = network::restore(denoiser);
    return denoise::apply_denoiser(model, detail::normalized(raw, normalization));
}

namespace {

std::vector<ImagePair> with_images(const std::vector<ImagePair>& pairs, std::vector<RawImage> images) {
    std::vector<ImagePair> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) out.push_back({std::move(images[i]), pairs[i].labels, pairs[i].name});
    return out;
}

std::vector<RawImage> images_of(const std::vector<ImagePair>& pairs) {
    std::vector<RawImage> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.image);
    return out;
}

}  // namespace

SchemeResult run_scheme(const SchemeConfig& config, const dataio::DatasetSplit& split, const dataio::SubsetPlan& plan,
                        const TrainSchedule& schedule, const SegOptions& options) {
    config.validate();
    std::vector<ImagePair> subset;
    for (auto i : plan.subset(config.subset_index)) {
        if (i >= split.train.size()) throw std::out_of_range("subset index outside the training set");
        subset.push_back(split.train[i]);
    }
    std::vector<ImagePair> validation = split.validation;

    if (denoises_input(config.scheme)) {
        subset = with_images(subset, denoise_images(*config.denoiser, images_of(subset), options.normalization));
        validation =
            with_images(validation, denoise_images(*config.denoiser, images_of(validation), options.normalization));
    }

    SegOptions seg = options;
    if (config.denoiser) {
        // Finetuning needs the denoiser's body; sequential stages are free.
        if (initializes_from_denoiser(config.scheme)) seg.spec = config.denoiser->meta.spec;
    }

    SchemeResult result;
    if (is_stardist(config.scheme)) {
        result.training = train_stardist(subset, validation, seg, schedule);
    } else {
        std::optional<WeightSnapshot> init;
        if (initializes_from_denoiser(config.scheme)) init = config.denoiser;
        result.training = train_unet_seg(subset, validation, init, seg, schedule);
    }
    result.training.best.meta.provenance = to_string(config.scheme);
    result.pipeline.scheme = config.scheme;
    if (denoises_input(config.scheme)) result.pipeline.denoiser = config.denoiser;
    result.pipeline.segmenter = result.training.best;
    result.pipeline.normalization = options.normalization;
    result.pipeline.threshold = options.selection_threshold;
    result.pipeline.overlap_threshold = options.overlap_threshold;
    return result;
}

void save_pipeline(const std::filesystem::path& dir, const TrainedPipeline& pipeline) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["scheme"] = to_string(pipeline.scheme);
    j["normalization"] = {pipeline.normalization.low, pipeline.normalization.high};
    j["threshold"] = pipeline.threshold;
    j["overlap_threshold"] = pipeline.overlap_threshold;
    j["segmenter"] = "segmenter.ckpt";
    network::save_checkpoint(dir / "segmenter.ckpt", pipeline.segmenter);
    if (pipeline.denoiser) {
        j["denoiser"] = "denoiser.ckpt";
        network::save_checkpoint(dir / "denoiser.ckpt", *pipeline.denoiser);
    }
    std::ofstream(dir / "pipeline.json") << j.dump(2) << "\n";
}

TrainedPipeline load_pipeline(const std::filesystem::path& dir) {
    std::ifstream in(dir / "pipeline.json");
    if (!in) throw std::runtime_error("no pipeline.json in " + dir.string());
    const auto j = nlohmann::json::parse(in);
    TrainedPipeline p;
    p.scheme = parse_scheme(j.at("scheme").get<std::string>());
    p.normalization = {j.at("normalization").at(0).get<double>(), j.at("normalization").at(1).get<double>()};
    p.threshold = j.at("threshold").get<double>();
    p.overlap_threshold = j.value("overlap_threshold", infer::kDefaultOverlapThreshold);
    p.segmenter = network::load_checkpoint(dir / j.at("segmenter").get<std::string>());
    if (j.contains("denoiser")) p.denoiser = network::load_checkpoint(dir / j.at("denoiser").get<std::string>());
    return p;
}

}  // namespace voidseg::segtrain
