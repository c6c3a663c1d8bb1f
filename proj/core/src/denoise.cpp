#include "voidseg/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "voidseg/log.hpp"

#include "training_util.hpp"

namespace voidseg::denoise {

MaskPlan sample_mask(Shape shape, double fraction, std::uint64_t seed, int replacement_radius) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("mask fraction must lie in (0, 1)");
    if (replacement_radius < 1) throw std::invalid_argument("replacement radius must be >= 1");
    const std::size_t area = shape.area();
    if (area < 2) throw std::invalid_argument("patch too small to blind");
    const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(area))));
    std::vector<std::size_t> all(area);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    chosen.reserve(count);
    Rng rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), count, rng);
    MaskPlan plan;
    plan.fraction = fraction;
    plan.replacement_radius = replacement_radius;
    plan.coords.reserve(count);
    const auto w = static_cast<std::size_t>(shape.width);
    for (auto i : chosen) plan.coords.push_back({static_cast<int>(i / w), static_cast<int>(i % w)});
    return plan;
}

RawImage blind_pixels(const RawImage& patch, const MaskPlan& plan, std::uint64_t seed) {
    RawImage out = patch;
    Rng rng(seed);
    const int r = plan.replacement_radius;
    std::vector<PixelCoord> window;
    for (const auto& c : plan.coords) {
        if (!patch.shape().contains(c.y, c.x)) throw std::out_of_range("mask coordinate outside patch");
        window.clear();
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
                if ((dy == 0 && dx == 0) || !patch.shape().contains(c.y + dy, c.x + dx)) continue;
                window.push_back({c.y + dy, c.x + dx});
            }
        }
        if (window.empty()) continue;
        const auto pick = std::uniform_int_distribution<std::size_t>(0, window.size() - 1)(rng);
        out[c] = patch[window[pick]];
    }
    return out;
}

BinaryMask plan_mask(Shape shape, const MaskPlan& plan) {
    BinaryMask mask(shape, 0);
    for (const auto& c : plan.coords) mask[c] = 1;
    return mask;
}

double masked_mse_loss(const RawImage& pred, const RawImage& target, const BinaryMask& mask) {
    if (pred.shape() != target.shape() || pred.shape() != mask.shape()) {
        throw std::invalid_argument("masked_mse_loss: shapes differ");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask.pixels()[i]) continue;
        const double d = static_cast<double>(pred.pixels()[i]) - static_cast<double>(target.pixels()[i]);
        sum += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("masked_mse_loss: mask is empty");
    return sum / static_cast<double>(n);
}

torch::Tensor masked_mse_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask) {
    const auto n = mask.sum();
    if (n.item<double>() <= 0.0) throw std::invalid_argument("masked_mse_loss: mask is empty");
    return ((pred - target).pow(2) * mask).sum() / n;
}

N2VBatch make_n2v_batch(const std::vector<RawImage>& patches, double fraction, int replacement_radius,
                        std::uint64_t seed) {
    std::vector<RawImage> inputs, masks;
    inputs.reserve(patches.size());
    masks.reserve(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto s = combine_seed(seed, i);
        const auto plan = sample_mask(patches[i].shape(), fraction, s, replacement_radius);
        inputs.push_back(blind_pixels(patches[i], plan, combine_seed(s, 1)));
        const auto m = plan_mask(patches[i].shape(), plan);
        RawImage mf(m.shape());
        std::transform(m.begin(), m.end(), mf.begin(), [](std::uint8_t v) { return static_cast<float>(v); });
        masks.push_back(std::move(mf));
    }
    return {detail::stack_images(inputs), detail::stack_images(patches), detail::stack_images(masks)};
}

namespace {

torch::Tensor regression_output(const network::UNet& model, const torch::Tensor& raw) {
    const int ch = model->spec().regression_channel();
    return raw.slice(1, ch, ch + 1);
}

double validation_loss(network::UNet& model, const std::vector<N2VBatch>& batches) {
    torch::NoGradGuard no_grad;
    model->eval();
    double sum = 0.0;
    double weight = 0.0;
    for (const auto& b : batches) {
        const auto pred = regression_output(model, model->forward(b.inputs));
        const double n = b.masks.sum().item<double>();
        sum += masked_mse_loss(pred, b.targets, b.masks).item<double>() * n;
        weight += n;
    }
    model->train();
    return weight > 0.0 ? sum / weight : 0.0;
}

}  // namespace

DenoiserResult train_n2v(const DenoiserData& data, const DenoiserOptions& options,
                         const segtrain::TrainSchedule& schedule) {
    if (data.images.empty()) throw std::invalid_argument("train_n2v: no training images");
    if (options.spec.regression_channel() < 0) {
        throw std::invalid_argument("train_n2v: network head must be denoise or joint");
    }
    schedule.validate();

    const auto images = detail::normalized(data.images, options.normalization);
    const auto validation = detail::normalized(
        detail::head_of(data.validation.empty() ? data.images : data.validation, schedule.validation_limit),
        options.normalization);

    // Fixed validation batches; full patches, no augmentation.
    std::vector<N2VBatch> val_batches;
    for (std::size_t start = 0; start < validation.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
        const auto end = std::min(validation.size(), start + static_cast<std::size_t>(schedule.batch_size));
        std::vector<RawImage> chunk(validation.begin() + static_cast<std::ptrdiff_t>(start),
                                    validation.begin() + static_cast<std::ptrdiff_t>(end));
        // Group only equal shapes; validation patches normally share one.
        if (std::any_of(chunk.begin(), chunk.end(), [&](const RawImage& im) { return im.shape() != chunk[0].shape(); })) {
            for (auto& im : chunk) {
                val_batches.push_back(make_n2v_batch({im}, options.mask_fraction, options.replacement_radius,
                                                     combine_seed(schedule.seed, "val" + std::to_string(val_batches.size()))));
            }
            continue;
        }
        val_batches.push_back(make_n2v_batch(chunk, options.mask_fraction, options.replacement_radius,
                                             combine_seed(schedule.seed, "val" + std::to_string(start))));
    }

    auto model = network::build_unet(options.spec, combine_seed(schedule.seed, "init"));
    model->train();
    torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(schedule.initial_lr));
    segtrain::PlateauScheduler plateau(schedule.initial_lr, schedule.plateau);
    detail::SampleDrawer drawer(combine_seed(schedule.seed, "batches"), schedule.crop_size, schedule.augment);

    DenoiserResult result;
    double best = validation_loss(model, val_batches);
    result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), best,
                              std::numeric_limits<double>::quiet_NaN(), schedule.initial_lr});
    result.best = network::snapshot(model, "n2v", 0);

    std::vector<RawImage> batch_patches;
    for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (int step = 0; step < schedule.steps_per_epoch; ++step) {
            batch_patches.clear();
            for (int b = 0; b < schedule.batch_size; ++b) {
                const auto w = drawer.draw(images.size(), images.front().shape());
                batch_patches.push_back(detail::take(images[w.index], w));
            }
            const auto batch = make_n2v_batch(batch_patches, options.mask_fraction, options.replacement_radius,
                                              drawer.rng()());
            optimizer.zero_grad();
            auto loss = masked_mse_loss(regression_output(model, model->forward(batch.inputs)), batch.targets,
                                        batch.masks);
            const double value = loss.item<double>();
            detail::require_finite_loss(value, epoch, step, "train_n2v");
            loss.backward();
            optimizer.step();
            epoch_loss += value;
        }
        const double val = validation_loss(model, val_batches);
        detail::require_finite_loss(val, epoch, schedule.steps_per_epoch, "train_n2v validation");
        result.history.push_back({epoch, epoch_loss / schedule.steps_per_epoch, val,
                                  std::numeric_limits<double>::quiet_NaN(), plateau.lr()});
        if (val < best) {
            best = val;
            result.best = network::snapshot(model, "n2v", epoch);
            result.best_epoch = epoch;
        }
        log::info("n2v epoch ", epoch, "/", schedule.epochs, " train ", log::fixed(epoch_loss / schedule.steps_per_epoch, 5),
                  " val ", log::fixed(val, 5), " lr ", log::sci(plateau.lr(), 2));
        detail::set_lr(optimizer, plateau.step(val));
    }
    return result;
}

std::vector<RawImage> apply_denoiser(network::UNet& model, const std::vector<RawImage>& normalized) {
    std::vector<RawImage> out;
    out.reserve(normalized.size());
    for (const auto& im : normalized) out.push_back(network::denoise_batch(model, {im}).front());
    return out;
}

}  // namespace voidseg::denoise
