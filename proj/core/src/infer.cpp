#include "voidseg/infer.hpp"

#include <stdexcept>

namespace voidseg::infer {

Predictor::Predictor(const segtrain::TrainedPipeline& pipeline) : pipeline_(pipeline) {
    if (pipeline_.segmenter.tensors.empty()) throw std::logic_error("pipeline has no trained segmenter");
    if (segtrain::denoises_input(pipeline_.scheme)) {
        if (!pipeline_.denoiser) {
            throw std::logic_error(segtrain::to_string(pipeline_.scheme) + " pipeline is missing its denoiser");
        }
        denoiser_ = network::restore(*pipeline_.denoiser);
    }
    segmenter_ = network::restore(pipeline_.segmenter);
}

Prediction Predictor::predict(const RawImage& raw) {
    require_finite(raw, "predict input");
    auto input = dataio::normalize(raw, pipeline_.normalization);
    std::optional<RawImage> denoised;
    if (denoiser_) {
        denoised = network::denoise_batch(*denoiser_, {input}).front();
        input = dataio::normalize(*denoised, pipeline_.normalization);
    }
    auto out = network::predict_batch(segmenter_, {input}).front();
    out.denoised = std::move(denoised);
    return out;
}

std::vector<Prediction> Predictor::predict(const std::vector<RawImage>& raw) {
    std::vector<Prediction> out;
    out.reserve(raw.size());
    for (const auto& im : raw) out.push_back(predict(im));
    return out;
}

LabelMap Predictor::segment(const RawImage& raw) { return segment(raw, pipeline_.threshold); }

LabelMap Predictor::segment(const RawImage& raw, double threshold) {
    return instances_from(predict(raw), threshold, pipeline_.overlap_threshold);
}

LabelMap predict(const segtrain::TrainedPipeline& pipeline, const RawImage& raw) {
    return Predictor(pipeline).segment(raw);
}

ThresholdSweepResult threshold_sweep(const std::vector<Prediction>& predictions,
                                     const std::vector<LabelMap>& ground_truth, const std::vector<double>& grid,
                                     double overlap_threshold) {
    if (predictions.size() != ground_truth.size()) throw std::invalid_argument("threshold_sweep: size mismatch");
    if (predictions.empty()) throw std::invalid_argument("threshold_sweep: no validation images");
    return sweep(grid, [&](double t) {
        std::vector<LabelMap> pred;
        pred.reserve(predictions.size());
        for (const auto& p : predictions) pred.push_back(instances_from(p, t, overlap_threshold));
        return eval::evaluate(ground_truth, pred, t).ap;
    });
}

ThresholdSweepResult threshold_sweep(const segtrain::TrainedPipeline& pipeline, const std::vector<ImagePair>& pairs,
                                     const std::vector<double>& grid) {
    Predictor predictor(pipeline);
    std::vector<Prediction> predictions;
    std::vector<LabelMap> gt;
    for (const auto& p : pairs) {
        predictions.push_back(predictor.predict(p.image));
        gt.push_back(p.labels);
    }
    return threshold_sweep(predictions, gt, grid, pipeline.overlap_threshold);
}

eval::MetricsReport evaluate_pipeline(const segtrain::TrainedPipeline& pipeline,
                                      const std::vector<ImagePair>& pairs) {
    Predictor predictor(pipeline);
    std::vector<eval::ImageMetrics> metrics;
    metrics.reserve(pairs.size());
    for (const auto& p : pairs) {
        metrics.push_back(eval::evaluate_image(p.labels, predictor.segment(p.image), p.name));
    }
    return eval::pool(std::move(metrics), pipeline.threshold);
}

}  // namespace voidseg::infer
