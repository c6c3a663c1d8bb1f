#include "voidseg/network.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>
#include <stdexcept>

namespace voidseg::network {

std::string to_string(HeadKind head) {
    switch (head) {
        case HeadKind::Denoise: return "denoise";
        case HeadKind::Joint: return "joint";
        case HeadKind::Star: return "star";
    }
    return "unknown";
}

HeadKind parse_head(const std::string& text) {
    if (text == "denoise") return HeadKind::Denoise;
    if (text == "joint") return HeadKind::Joint;
    if (text == "star") return HeadKind::Star;
    throw std::invalid_argument("unknown head '" + text + "' (expected denoise, joint or star)");
}

int NetworkSpec::out_channels() const {
    switch (head) {
        case HeadKind::Denoise: return 1;
        case HeadKind::Joint: return 4;
        case HeadKind::Star: return n_rays + 1;
    }
    return 0;
}

int NetworkSpec::regression_channel() const {
    switch (head) {
        case HeadKind::Denoise: return 0;
        case HeadKind::Joint: return 3;
        case HeadKind::Star: return -1;
    }
    return -1;
}

void NetworkSpec::validate() const {
    if (depth < 1) throw std::invalid_argument("network depth must be >= 1");
    if (base_features < 1) throw std::invalid_argument("base_features must be >= 1");
    if (head == HeadKind::Star && n_rays < 3) throw std::invalid_argument("n_rays must be >= 3");
}

bool NetworkSpec::same_body(const NetworkSpec& other) const {
    return depth == other.depth && base_features == other.base_features && batch_norm == other.batch_norm;
}

// ---------------------------------------------------------------------------

ConvBlockImpl::ConvBlockImpl(int in_channels, int out_channels, bool batch_norm) {
    auto conv = [&](int in) {
        return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out_channels, 3).padding(1).bias(!batch_norm));
    };
    conv1_ = register_module("conv1", conv(in_channels));
    conv2_ = register_module("conv2", conv(out_channels));
    if (batch_norm) {
        norm1_ = register_module("norm1", torch::nn::BatchNorm2d(out_channels));
        norm2_ = register_module("norm2", torch::nn::BatchNorm2d(out_channels));
    }
}

torch::Tensor ConvBlockImpl::forward(torch::Tensor x) {
    x = conv1_(x);
    if (norm1_) x = norm1_(x);
    x = torch::relu(x);
    x = conv2_(x);
    if (norm2_) x = norm2_(x);
    return torch::relu(x);
}

UNetBodyImpl::UNetBodyImpl(int depth, int base_features, bool batch_norm) : depth_(depth) {
    int in = 1;
    for (int level = 0; level < depth; ++level) {
        const int features = base_features << level;
        down_->push_back(ConvBlock(in, features, batch_norm));
        in = features;
    }
    bottom_ = ConvBlock(in, base_features << depth, batch_norm);
    for (int level = 0; level < depth; ++level) {
        const int features = base_features << level;
        up_->push_back(ConvBlock((features * 2) + features, features, batch_norm));
    }
    register_module("down", down_);
    register_module("bottom", bottom_);
    register_module("up", up_);
}

torch::Tensor UNetBodyImpl::forward(torch::Tensor x) {
    std::vector<torch::Tensor> skips;
    skips.reserve(static_cast<std::size_t>(depth_));
    for (int level = 0; level < depth_; ++level) {
        x = down_[static_cast<std::size_t>(level)]->as<ConvBlock>()->forward(x);
        skips.push_back(x);
        x = torch::max_pool2d(x, 2);
    }
    x = bottom_(x);
    for (int level = depth_ - 1; level >= 0; --level) {
        const auto& skip = skips[static_cast<std::size_t>(level)];
        x = torch::upsample_nearest2d(x, std::vector<int64_t>{skip.size(2), skip.size(3)});
        x = torch::cat({x, skip}, 1);
        x = up_[static_cast<std::size_t>(level)]->as<ConvBlock>()->forward(x);
    }
    return x;
}

UNetImpl::UNetImpl(const NetworkSpec& spec) : spec_(spec) {
    spec_.validate();
    body_ = register_module("body", UNetBody(spec.depth, spec.base_features, spec.batch_norm));
    head_ = register_module(
        "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.base_features, spec.out_channels(), 1)));
}

torch::Tensor UNetImpl::forward(torch::Tensor x) {
    const int64_t min_size = int64_t{1} << spec_.depth;
    if (x.dim() != 4 || x.size(1) != 1) {
        throw std::invalid_argument("network input must be N x 1 x H x W");
    }
    if (x.size(2) < min_size || x.size(3) < min_size) {
        throw std::invalid_argument("input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                                    " is smaller than 2^depth = " + std::to_string(min_size));
    }
    return head_(body_(x));
}

UNet build_unet(const NetworkSpec& spec, std::uint64_t seed) {
    // torch initializers draw from the global generator
    static std::mutex init_mutex;
    std::lock_guard lock(init_mutex);
    torch::manual_seed(seed);
    return UNet(spec);
}

std::int64_t parameter_count(const UNet& model) {
    std::int64_t n = 0;
    for (const auto& p : model->parameters()) n += p.numel();
    return n;
}

torch::Tensor activate(const NetworkSpec& spec, const torch::Tensor& raw) {
    switch (spec.head) {
        case HeadKind::Denoise: return raw;
        case HeadKind::Joint: {
            auto classes = torch::softmax(raw.slice(1, 0, 3), 1);
            return torch::cat({classes, raw.slice(1, 3, 4)}, 1);
        }
        case HeadKind::Star: {
            auto dist = torch::relu(raw.slice(1, 0, spec.n_rays));
            auto prob = torch::sigmoid(raw.slice(1, spec.n_rays, spec.n_rays + 1));
            return torch::cat({dist, prob}, 1);
        }
    }
    return raw;
}

namespace {

torch::Tensor to_batch(const std::vector<RawImage>& images) {
    const auto shape = images.front().shape();
    auto batch = torch::empty({static_cast<int64_t>(images.size()), 1, shape.height, shape.width});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != shape) throw std::invalid_argument("batched images must share one shape");
        std::memcpy(batch[static_cast<int64_t>(i)].data_ptr<float>(), images[i].data(),
                    images[i].size() * sizeof(float));
    }
    return batch;
}

RawImage channel_image(const torch::Tensor& chw, int64_t channel) {
    auto plane = chw[channel].contiguous();
    RawImage out(static_cast<int>(plane.size(0)), static_cast<int>(plane.size(1)));
    std::memcpy(out.data(), plane.data_ptr<float>(), out.size() * sizeof(float));
    return out;
}

torch::Tensor run_padded(UNet& model, const torch::Tensor& input) {
    const int64_t m = int64_t{1} << model->spec().depth;
    const int64_t h = input.size(2);
    const int64_t w = input.size(3);
    const int64_t ph = (m - h % m) % m;
    const int64_t pw = (m - w % m) % m;
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    auto x = input;
    if (ph > 0 || pw > 0) {
        x = torch::nn::functional::pad(
            x, torch::nn::functional::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
    }
    auto out = activate(model->spec(), model->forward(x));
    model->train(was_training);
    return out.slice(2, 0, h).slice(3, 0, w).contiguous();
}

}  // namespace

std::vector<infer::Prediction> predict_batch(UNet& model, const std::vector<RawImage>& images) {
    std::vector<infer::Prediction> out;
    if (images.empty()) return out;
    const auto& spec = model->spec();
    const auto activated = run_padded(model, to_batch(images));
    out.reserve(images.size());
    for (int64_t i = 0; i < activated.size(0); ++i) {
        const auto chw = activated[i];
        infer::Prediction p;
        switch (spec.head) {
            case HeadKind::Denoise:
                p.kind = infer::Prediction::Kind::Denoise;
                p.regression = channel_image(chw, 0);
                break;
            case HeadKind::Joint:
                p.kind = infer::Prediction::Kind::ThreeClass;
                for (int c = 0; c < 3; ++c) p.class_prob.push_back(channel_image(chw, c));
                p.regression = channel_image(chw, 3);
                break;
            case HeadKind::Star:
                p.kind = infer::Prediction::Kind::Star;
                for (int k = 0; k < spec.n_rays; ++k) p.distances.push_back(channel_image(chw, k));
                p.object_prob = channel_image(chw, spec.n_rays);
                break;
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<RawImage> denoise_batch(UNet& model, const std::vector<RawImage>& images) {
    std::vector<RawImage> out;
    if (images.empty()) return out;
    const int channel = model->spec().regression_channel();
    if (channel < 0) throw std::invalid_argument("model has no regression channel to denoise with");
    const auto activated = run_padded(model, to_batch(images));
    for (int64_t i = 0; i < activated.size(0); ++i) out.push_back(channel_image(activated[i], channel));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, torch::Tensor>> named_state(const UNet& model) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : model->named_parameters()) out.emplace_back(item.key(), item.value());
    for (const auto& item : model->named_buffers()) out.emplace_back(item.key(), item.value());
    return out;
}

bool in_group(const std::string& name, TensorGroup group) {
    switch (group) {
        case TensorGroup::All: return true;
        case TensorGroup::Body: return WeightSnapshot::is_body(name);
        case TensorGroup::Head: return WeightSnapshot::is_head(name);
    }
    return false;
}

}  // namespace

WeightSnapshot snapshot(const UNet& model, std::string provenance, int epoch) {
    WeightSnapshot snap;
    snap.meta = {model->spec(), std::move(provenance), epoch};
    torch::NoGradGuard no_grad;
    for (const auto& [name, tensor] : named_state(model)) {
        snap.tensors.emplace(name, tensor.detach().clone().contiguous());
    }
    return snap;
}

void load_into(const WeightSnapshot& snap, UNet& model) {
    if (!(snap.meta.spec == model->spec())) {
        throw std::invalid_argument("snapshot spec does not match model spec");
    }
    torch::NoGradGuard no_grad;
    for (auto& [name, tensor] : named_state(model)) {
        auto it = snap.tensors.find(name);
        if (it == snap.tensors.end()) throw std::runtime_error("snapshot lacks tensor " + name);
        if (!it->second.sizes().equals(tensor.sizes())) {
            throw std::runtime_error("snapshot tensor " + name + " has a different shape");
        }
        tensor.copy_(it->second);
    }
}

UNet restore(const WeightSnapshot& snap) {
    auto model = build_unet(snap.meta.spec, 0);
    load_into(snap, model);
    return model;
}

UNet transfer_weights(const WeightSnapshot& src, UNet dst, TransferPolicy policy) {
    const auto& dst_spec = dst->spec();
    const auto& src_spec = src.meta.spec;
    torch::NoGradGuard no_grad;
    auto state = named_state(dst);
    // Validate the whole body before touching anything.
    for (const auto& [name, tensor] : state) {
        if (!WeightSnapshot::is_body(name)) continue;
        auto it = src.tensors.find(name);
        if (it == src.tensors.end()) {
            throw std::invalid_argument("body mismatch at layer " + name + ": missing in source");
        }
        if (!it->second.sizes().equals(tensor.sizes())) {
            throw std::invalid_argument("body mismatch at layer " + name + ": shape " +
                                        c10::str(it->second.sizes()) + " vs " + c10::str(tensor.sizes()));
        }
    }
    for (const auto& [name, _] : src.tensors) {
        if (WeightSnapshot::is_body(name) &&
            std::none_of(state.begin(), state.end(), [&](const auto& s) { return s.first == name; })) {
            throw std::invalid_argument("body mismatch at layer " + name + ": missing in destination");
        }
    }
    for (auto& [name, tensor] : state) {
        if (WeightSnapshot::is_body(name)) tensor.copy_(src.tensors.at(name));
    }
    if (policy == TransferPolicy::BodyOnly) return dst;

    if (src_spec.head == dst_spec.head && src_spec.out_channels() == dst_spec.out_channels()) {
        for (auto& [name, tensor] : state) {
            if (WeightSnapshot::is_head(name)) tensor.copy_(src.tensors.at(name));
        }
        return dst;
    }
    const int from = src_spec.regression_channel();
    const int to = dst_spec.regression_channel();
    if (from < 0 || to < 0) return dst;
    for (auto& [name, tensor] : state) {
        if (!WeightSnapshot::is_head(name)) continue;
        const auto& s = src.tensors.at(name);
        tensor[to].copy_(s[from]);
    }
    return dst;
}

bool bitwise_equal(const WeightSnapshot& a, const WeightSnapshot& b, TensorGroup group) {
    std::vector<std::string> names_a, names_b;
    for (const auto& [n, _] : a.tensors) {
        if (in_group(n, group)) names_a.push_back(n);
    }
    for (const auto& [n, _] : b.tensors) {
        if (in_group(n, group)) names_b.push_back(n);
    }
    if (names_a != names_b) return false;
    for (const auto& n : names_a) {
        const auto& x = a.tensors.at(n);
        const auto& y = b.tensors.at(n);
        if (x.scalar_type() != y.scalar_type() || !x.sizes().equals(y.sizes())) return false;
        if (std::memcmp(x.data_ptr(), y.data_ptr(), static_cast<std::size_t>(x.nbytes())) != 0) return false;
    }
    return true;
}

void configure_threads(int threads) {
    torch::set_num_threads(std::max(1, threads));
}

}  // namespace voidseg::network
