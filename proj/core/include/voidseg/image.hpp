#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace voidseg {

struct Shape {
    int height = 0;
    int width = 0;

    [[nodiscard]] std::size_t area() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    [[nodiscard]] bool contains(int y, int x) const {
        return y >= 0 && x >= 0 && y < height && x < width;
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

struct PixelCoord {
    int y = 0;
    int x = 0;
    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
    friend auto operator<=>(const PixelCoord&, const PixelCoord&) = default;
};

/// Dense row-major 2-D array. Value type; copies are deep.
template <typename T>
class Image {
public:
    using value_type = T;

    Image() = default;
    explicit Image(Shape shape, T fill = T{}) : shape_(shape), data_(shape.area(), fill) {
        if (shape.height < 0 || shape.width < 0) {
            throw std::invalid_argument("image shape must be non-negative");
        }
    }
    Image(int height, int width, T fill = T{}) : Image(Shape{height, width}, fill) {}
    Image(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape.area()) {
            throw std::invalid_argument("image data size does not match shape " + to_string(shape));
        }
    }

    [[nodiscard]] Shape shape() const { return shape_; }
    [[nodiscard]] int height() const { return shape_.height; }
    [[nodiscard]] int width() const { return shape_.width; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    T& operator()(int y, int x) { return data_[index(y, x)]; }
    const T& operator()(int y, int x) const { return data_[index(y, x)]; }
    T& operator[](PixelCoord p) { return data_[index(p.y, p.x)]; }
    const T& operator[](PixelCoord p) const { return data_[index(p.y, p.x)]; }

    [[nodiscard]] std::span<T> pixels() { return data_; }
    [[nodiscard]] std::span<const T> pixels() const { return data_; }
    [[nodiscard]] T* data() { return data_.data(); }
    [[nodiscard]] const T* data() const { return data_.data(); }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    friend bool operator==(const Image&, const Image&) = default;

private:
    [[nodiscard]] std::size_t index(int y, int x) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
               static_cast<std::size_t>(x);
    }

    Shape shape_{};
    std::vector<T> data_;
};

/// Raw microscopy intensities (arbitrary units).
using RawImage = Image<float>;
/// 0 = background, k > 0 = object id. Ids need not be contiguous.
using LabelMap = Image<std::int32_t>;
using BinaryMask = Image<std::uint8_t>;

struct ImagePair {
    RawImage image;
    LabelMap labels;
    std::string name;
};

template <typename T>
Image<T> crop(const Image<T>& src, int y0, int x0, int height, int width) {
    if (y0 < 0 || x0 < 0 || y0 + height > src.height() || x0 + width > src.width()) {
        throw std::out_of_range("crop window outside image");
    }
    Image<T> out(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            out(y, x) = src(y0 + y, x0 + x);
        }
    }
    return out;
}

/// Throws std::invalid_argument when an image holds a non-finite value.
void require_finite(const RawImage& image, const std::string& what);

/// Largest label id, 0 for an empty map.
std::int32_t max_label(const LabelMap& labels);

}  // namespace voidseg
