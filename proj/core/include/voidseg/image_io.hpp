#pragma once

#include <filesystem>

#include "voidseg/image.hpp"

namespace voidseg::io {

/// Grayscale intensities; colour images are converted to luminance.
RawImage read_raw_image(const std::filesystem::path& path);

/// Integer label image (8/16/32-bit). Negative or non-integral values are an error.
LabelMap read_label_map(const std::filesystem::path& path);

/// 32-bit float TIFF; values are stored exactly.
void write_raw_image(const std::filesystem::path& path, const RawImage& image);

/// 16-bit unsigned label image. Ids above 65535 are an error.
void write_label_map(const std::filesystem::path& path, const LabelMap& labels);

/// 8-bit preview scaled to the 0.1/99.9 percentile range.
void write_preview(const std::filesystem::path& path, const RawImage& image);

bool is_image_file(const std::filesystem::path& path);

}  // namespace voidseg::io
