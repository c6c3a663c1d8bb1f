#include "voidseg/image.hpp"

#include <algorithm>
#include <cmath>

namespace voidseg {

std::string to_string(const Shape& shape) {
    return std::to_string(shape.height) + "x" + std::to_string(shape.width);
}

void require_finite(const RawImage& image, const std::string& what) {
    for (float v : image) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(what + ": image contains non-finite values");
        }
    }
}

std::int32_t max_label(const LabelMap& labels) {
    std::int32_t best = 0;
    for (auto v : labels) best = std::max(best, v);
    return best;
}

}  // namespace voidseg
