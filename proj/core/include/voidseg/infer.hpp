#pragma once

#include <optional>
#include <vector>

#include "voidseg/eval.hpp"
#include "voidseg/network.hpp"
#include "voidseg/postprocess.hpp"
#include "voidseg/segtrain.hpp"

namespace voidseg::infer {

/// Runs a trained pipeline on raw images: normalize, optionally denoise and
/// re-normalize, then segment. Models are restored once.
class Predictor {
public:
    explicit Predictor(const segtrain::TrainedPipeline& pipeline);

    [[nodiscard]] Prediction predict(const RawImage& raw);
    [[nodiscard]] std::vector<Prediction> predict(const std::vector<RawImage>& raw);
    [[nodiscard]] LabelMap segment(const RawImage& raw);
    [[nodiscard]] LabelMap segment(const RawImage& raw, double threshold);

    [[nodiscard]] const segtrain::TrainedPipeline& pipeline() const { return pipeline_; }

private:
    segtrain::TrainedPipeline pipeline_;
    std::optional<network::UNet> denoiser_;
    network::UNet segmenter_{nullptr};
};

/// Instance labels for one raw image at the pipeline's threshold.
LabelMap predict(const segtrain::TrainedPipeline& pipeline, const RawImage& raw);

/// Pooled AP over `pairs` at each grid threshold, from one set of predictions.
ThresholdSweepResult threshold_sweep(const std::vector<Prediction>& predictions,
                                     const std::vector<LabelMap>& ground_truth, const std::vector<double>& grid,
                                     double overlap_threshold = kDefaultOverlapThreshold);

ThresholdSweepResult threshold_sweep(const segtrain::TrainedPipeline& pipeline, const std::vector<ImagePair>& pairs,
                                     const std::vector<double>& grid = default_threshold_grid());

/// Test metrics at the pipeline's threshold.
eval::MetricsReport evaluate_pipeline(const segtrain::TrainedPipeline& pipeline,
                                      const std::vector<ImagePair>& pairs);

}  // namespace voidseg::infer
