#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "voidseg/dataio.hpp"
#include "voidseg/image.hpp"
#include "voidseg/network.hpp"
#include "voidseg/schedule.hpp"

namespace voidseg::denoise {

/// Blinds 1/64 of the pixels per patch, replacing each from its 5x5 window.
inline constexpr double kDefaultMaskFraction = 0.015625;
inline constexpr int kDefaultReplacementRadius = 2;

struct MaskPlan {
    std::vector<PixelCoord> coords;
    double fraction = kDefaultMaskFraction;
    int replacement_radius = kDefaultReplacementRadius;
};

/// max(1, round(fraction * area)) unique uniformly drawn coordinates.
MaskPlan sample_mask(Shape shape, double fraction, std::uint64_t seed,
                     int replacement_radius = kDefaultReplacementRadius);

/// Replaces every planned pixel with a uniformly drawn in-bounds pixel from
/// its (2r+1)^2 window, never the centre itself.
RawImage blind_pixels(const RawImage& patch, const MaskPlan& plan, std::uint64_t seed);

BinaryMask plan_mask(Shape shape, const MaskPlan& plan);

/// Mean of (pred - target)^2 over masked pixels only.
double masked_mse_loss(const RawImage& pred, const RawImage& target, const BinaryMask& mask);

/// Batched form on N x 1 x H x W tensors with a 0/1 float mask.
torch::Tensor masked_mse_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& mask);

/// Blinded inputs, original noisy targets and the blind-spot indicator.
struct N2VBatch {
    torch::Tensor inputs;
    torch::Tensor targets;
    torch::Tensor masks;
};

N2VBatch make_n2v_batch(const std::vector<RawImage>& patches, double fraction, int replacement_radius,
                        std::uint64_t seed);

struct DenoiserOptions {
    network::NetworkSpec spec{};  ///< head must be denoise or joint
    double mask_fraction = kDefaultMaskFraction;
    int replacement_radius = kDefaultReplacementRadius;
    dataio::PercentileRange normalization{};
};

/// Unlabeled imagery only. `images` is the training pool (train and
/// validation imagery); `validation` scores snapshots.
struct DenoiserData {
    std::vector<RawImage> images;
    std::vector<RawImage> validation;
};

struct DenoiserResult {
    network::WeightSnapshot best;
    segtrain::LossHistory history;  ///< entry 0 is the untrained model
    int best_epoch = 0;
};

DenoiserResult train_n2v(const DenoiserData& data, const DenoiserOptions& options,
                         const segtrain::TrainSchedule& schedule);

/// Regression-channel output for already-normalized images of any size.
std::vector<RawImage> apply_denoiser(network::UNet& model, const std::vector<RawImage>& normalized);

}  // namespace voidseg::denoise
