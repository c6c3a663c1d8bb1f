#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "voidseg/dataio.hpp"
#include "voidseg/network.hpp"
#include "voidseg/postprocess.hpp"
#include "voidseg/schedule.hpp"
#include "voidseg/targets.hpp"

namespace voidseg::segtrain {

struct SegOptions {
    /// Body architecture; the head is set by the trainer.
    network::NetworkSpec spec{};
    float border_weight = targets::kDefaultBorderWeight;
    /// Weight of the distance term in the star loss.
    double distance_loss_weight = 1.0;
    dataio::PercentileRange normalization{};
    /// Threshold used to score validation AP for model selection.
    double selection_threshold = 0.5;
    double overlap_threshold = infer::kDefaultOverlapThreshold;
};

struct SegTrainResult {
    network::WeightSnapshot initial;  ///< model state before the first step
    network::WeightSnapshot best;     ///< highest validation AP
    LossHistory history;
    int best_epoch = 0;
};

/// Mean over pixels of weight * cross-entropy. logits N x 3 x H x W,
/// classes N x H x W (int64), weights N x H x W.
torch::Tensor weighted_cross_entropy(const torch::Tensor& logits, const torch::Tensor& classes,
                                     const torch::Tensor& weights);

struct StarLoss {
    torch::Tensor total;
    torch::Tensor prob;
    torch::Tensor distance;
};

/// Binary cross-entropy on the probability logit plus `distance_weight` times
/// the object-probability weighted mean absolute distance error.
/// raw N x (K+1) x H x W, prob_target N x 1 x H x W, dist_target N x K x H x W.
StarLoss stardist_loss(const torch::Tensor& raw, const torch::Tensor& prob_target,
                       const torch::Tensor& dist_target, double distance_weight);

/// 3-class U-Net training with border-weighted cross-entropy. With `init`,
/// the model starts from transfer_weights(init, body and compatible head).
/// An empty validation list scores on the training pairs.
SegTrainResult train_unet_seg(const std::vector<ImagePair>& train, const std::vector<ImagePair>& validation,
                              const std::optional<network::WeightSnapshot>& init, const SegOptions& options,
                              const TrainSchedule& schedule);

SegTrainResult train_stardist(const std::vector<ImagePair>& train, const std::vector<ImagePair>& validation,
                              const SegOptions& options, const TrainSchedule& schedule);

// ---------------------------------------------------------------------------

enum class Scheme {
    BaselineUNet,
    BaselineStarDist,
    SequentialUNet,
    SequentialStarDist,
    FinetuneUNet,
    FinetuneSequentialUNet,
};

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& text);
std::vector<Scheme> all_schemes();

bool is_stardist(Scheme scheme);
/// The frozen denoiser preprocesses every input.
bool denoises_input(Scheme scheme);
/// The segmenter starts from the denoiser weights.
bool initializes_from_denoiser(Scheme scheme);
inline bool needs_denoiser(Scheme scheme) { return denoises_input(scheme) || initializes_from_denoiser(scheme); }

struct SchemeConfig {
    Scheme scheme = Scheme::BaselineUNet;
    std::optional<network::WeightSnapshot> denoiser;
    int subset_index = 1;
    double noise_std = 0.0;

    void validate() const;
};

/// Everything needed to segment a raw image end to end.
struct TrainedPipeline {
    Scheme scheme = Scheme::BaselineUNet;
    std::optional<network::WeightSnapshot> denoiser;
    network::WeightSnapshot segmenter;
    dataio::PercentileRange normalization{};
    double threshold = 0.5;
    double overlap_threshold = infer::kDefaultOverlapThreshold;
};

void save_pipeline(const std::filesystem::path& dir, const TrainedPipeline& pipeline);
TrainedPipeline load_pipeline(const std::filesystem::path& dir);

struct SchemeResult {
    TrainedPipeline pipeline;
    SegTrainResult training;
};

/// Normalizes each image, passes it through the frozen denoiser and returns
/// the denoised (not re-normalized) result.
std::vector<RawImage> denoise_images(const network::WeightSnapshot& denoiser, const std::vector<RawImage>& raw,
                                     dataio::PercentileRange normalization);

/// Trains the segmenter of one scheme on subset P_i of `split.train`.
SchemeResult run_scheme(const SchemeConfig& config, const dataio::DatasetSplit& split,
                        const dataio::SubsetPlan& plan, const TrainSchedule& schedule,
                        const SegOptions& options = {});

}  // namespace voidseg::segtrain
