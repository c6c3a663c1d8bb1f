#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "voidseg/image.hpp"
#include "voidseg/postprocess.hpp"

namespace voidseg::network {

enum class HeadKind {
    Denoise,  ///< 1 linear channel
    Joint,    ///< 3 class logits + 1 linear regression channel
    Star,     ///< n_rays non-negative distances + 1 object probability
};

std::string to_string(HeadKind head);
HeadKind parse_head(const std::string& text);

struct NetworkSpec {
    int depth = 2;
    int base_features = 32;
    bool batch_norm = true;
    HeadKind head = HeadKind::Joint;
    int n_rays = 32;

    [[nodiscard]] int out_channels() const;
    /// Index of the regression channel, -1 for the star head.
    [[nodiscard]] int regression_channel() const;
    void validate() const;
    /// Same body architecture (depth, features, normalization).
    [[nodiscard]] bool same_body(const NetworkSpec& other) const;
    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

class ConvBlockImpl : public torch::nn::Module {
public:
    ConvBlockImpl(int in_channels, int out_channels, bool batch_norm);
    torch::Tensor forward(torch::Tensor x);

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
    torch::nn::BatchNorm2d norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(ConvBlock);

/// Encoder/decoder with skip concatenations; returns base_features maps.
class UNetBodyImpl : public torch::nn::Module {
public:
    UNetBodyImpl(int depth, int base_features, bool batch_norm);
    torch::Tensor forward(torch::Tensor x);

private:
    int depth_;
    torch::nn::ModuleList down_;
    ConvBlock bottom_{nullptr};
    torch::nn::ModuleList up_;
};
TORCH_MODULE(UNetBody);

/// Same-padded U-Net with a 1x1 convolution head. Parameters live under
/// "body." and "head.".
class UNetImpl : public torch::nn::Module {
public:
    explicit UNetImpl(const NetworkSpec& spec);

    /// Raw head output (logits / linear values), N x C x H x W.
    torch::Tensor forward(torch::Tensor x);

    [[nodiscard]] const NetworkSpec& spec() const { return spec_; }

private:
    NetworkSpec spec_;
    UNetBody body_{nullptr};
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

/// Deterministic construction: equal seeds give bitwise-equal parameters.
UNet build_unet(const NetworkSpec& spec, std::uint64_t seed);

std::int64_t parameter_count(const UNet& model);

/// Applies the head activations: softmax over class logits, sigmoid on the
/// object probability, rectifier on distances; regression stays linear.
torch::Tensor activate(const NetworkSpec& spec, const torch::Tensor& raw);

/// Runs a model in eval mode on normalized images of one shape. Inputs are
/// padded (replicate) to a multiple of 2^depth and outputs cropped back.
std::vector<infer::Prediction> predict_batch(UNet& model, const std::vector<RawImage>& images);

/// Single-channel output of the regression channel (denoising).
std::vector<RawImage> denoise_batch(UNet& model, const std::vector<RawImage>& images);

// ---------------------------------------------------------------------------

struct SnapshotMetadata {
    NetworkSpec spec;
    std::string provenance;
    int epoch = 0;
};

/// Immutable copy of every named parameter and buffer of a model.
struct WeightSnapshot {
    std::map<std::string, torch::Tensor> tensors;
    SnapshotMetadata meta;

    static bool is_body(const std::string& name) { return name.rfind("body.", 0) == 0; }
    static bool is_head(const std::string& name) { return name.rfind("head.", 0) == 0; }
};

WeightSnapshot snapshot(const UNet& model, std::string provenance = {}, int epoch = 0);
UNet restore(const WeightSnapshot& snap);
/// Copies tensor values into an existing model of the same spec.
void load_into(const WeightSnapshot& snap, UNet& model);

enum class TransferPolicy { BodyOnly, BodyAndCompatibleHead };

/// Copies body tensors exactly; with BodyAndCompatibleHead also copies the
/// head where it fits, mapping the regression channel between denoise and
/// joint heads. Remaining head channels keep dst's initialization.
UNet transfer_weights(const WeightSnapshot& src, UNet dst, TransferPolicy policy);

enum class TensorGroup { All, Body, Head };

bool bitwise_equal(const WeightSnapshot& a, const WeightSnapshot& b, TensorGroup group = TensorGroup::All);

void save_checkpoint(const std::filesystem::path& path, const WeightSnapshot& snap);
WeightSnapshot load_checkpoint(const std::filesystem::path& path);

/// Serializes to / parses from the JSON manifest representation of a spec.
std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& json);

/// Pins torch to `threads` intra-op threads (1 gives reproducible runs).
void configure_threads(int threads);

}  // namespace voidseg::network
