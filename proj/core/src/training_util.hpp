#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "voidseg/dataio.hpp"
#include "voidseg/random.hpp"
#include "voidseg/schedule.hpp"

namespace voidseg::detail {

struct SampleWindow {
    std::size_t index = 0;
    int y0 = 0;
    int x0 = 0;
    int size_h = 0;
    int size_w = 0;
    dataio::Dihedral transform;
};

/// Draws (item, crop window, dihedral transform) triples for training batches.
class SampleDrawer {
public:
    SampleDrawer(std::uint64_t seed, int crop_size, bool augment)
        : rng_(seed), crop_size_(crop_size), augment_(augment) {}

    SampleWindow draw(std::size_t n_items, Shape shape) {
        SampleWindow w;
        w.index = std::uniform_int_distribution<std::size_t>(0, n_items - 1)(rng_);
        w.size_h = crop_size_ > 0 ? crop_size_ : shape.height;
        w.size_w = crop_size_ > 0 ? crop_size_ : shape.width;
        if (w.size_h > shape.height || w.size_w > shape.width) {
            throw std::invalid_argument("crop size " + std::to_string(crop_size_) + " exceeds patch " +
                                        to_string(shape));
        }
        w.y0 = std::uniform_int_distribution<int>(0, shape.height - w.size_h)(rng_);
        w.x0 = std::uniform_int_distribution<int>(0, shape.width - w.size_w)(rng_);
        if (augment_) {
            w.transform = dataio::Dihedral::from_index(std::uniform_int_distribution<int>(0, 7)(rng_));
        }
        return w;
    }

    Rng& rng() { return rng_; }

private:
    Rng rng_;
    int crop_size_;
    bool augment_;
};

template <typename T>
Image<T> take(const Image<T>& src, const SampleWindow& w) {
    return dataio::apply(w.transform, crop(src, w.y0, w.x0, w.size_h, w.size_w));
}

inline torch::Tensor stack_images(const std::vector<RawImage>& images) {
    const auto shape = images.front().shape();
    auto t = torch::empty({static_cast<int64_t>(images.size()), 1, shape.height, shape.width});
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::memcpy(t[static_cast<int64_t>(i)].data_ptr<float>(), images[i].data(), images[i].size() * sizeof(float));
    }
    return t;
}

inline void set_lr(torch::optim::Adam& optimizer, double lr) {
    for (auto& group : optimizer.param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
}

inline void require_finite_loss(double loss, int epoch, int step, const std::string& what) {
    if (!std::isfinite(loss)) {
        throw std::runtime_error(what + ": non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step) + "; training diverged");
    }
}

inline std::vector<RawImage> normalized(const std::vector<RawImage>& images, dataio::PercentileRange range) {
    std::vector<RawImage> out;
    out.reserve(images.size());
    for (const auto& im : images) out.push_back(dataio::normalize(im, range));
    return out;
}

/// First `limit` items (all when limit is 0).
template <typename T>
std::vector<T> head_of(const std::vector<T>& items, std::size_t limit) {
    if (limit == 0 || limit >= items.size()) return items;
    return {items.begin(), items.begin() + static_cast<std::ptrdiff_t>(limit)};
}

}  // namespace voidseg::detail
