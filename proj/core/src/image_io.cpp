#include "voidseg/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "voidseg/dataio.hpp"

namespace voidseg::io {

namespace {

cv::Mat read_any(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("image file not found: " + path.string());
    }
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) {
        throw std::runtime_error("cannot decode image: " + path.string());
    }
    return mat;
}

void ensure_parent(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
    ensure_parent(path);
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception& e) {
        throw std::runtime_error("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".tif" || ext == ".tiff" || ext == ".png";
}

RawImage read_raw_image(const std::filesystem::path& path) {
    cv::Mat mat = read_any(path);
    if (mat.channels() == 4) {
        cv::cvtColor(mat, mat, cv::COLOR_BGRA2GRAY);
    } else if (mat.channels() == 3) {
        cv::cvtColor(mat, mat, cv::COLOR_BGR2GRAY);
    } else if (mat.channels() != 1) {
        throw std::runtime_error("unsupported channel count in " + path.string());
    }
    cv::Mat f;
    mat.convertTo(f, CV_32F);
    RawImage out(f.rows, f.cols);
    for (int y = 0; y < f.rows; ++y) {
        const float* row = f.ptr<float>(y);
        std::copy(row, row + f.cols, &out(y, 0));
    }
    require_finite(out, path.string());
    return out;
}

LabelMap read_label_map(const std::filesystem::path& path) {
    cv::Mat mat = read_any(path);
    if (mat.channels() != 1) {
        throw std::runtime_error("label image must have one channel: " + path.string());
    }
    cv::Mat d;
    mat.convertTo(d, CV_64F);
    LabelMap out(d.rows, d.cols);
    for (int y = 0; y < d.rows; ++y) {
        const double* row = d.ptr<double>(y);
        for (int x = 0; x < d.cols; ++x) {
            const double v = row[x];
            if (!(v >= 0.0) || v != std::floor(v) || v > 2147483647.0) {
                throw std::runtime_error("label image holds a non-integer or negative value: " +
                                         path.string());
            }
            out(y, x) = static_cast<std::int32_t>(v);
        }
    }
    return out;
}

void write_raw_image(const std::filesystem::path& path, const RawImage& image) {
    cv::Mat mat(image.height(), image.width(), CV_32F);
    for (int y = 0; y < image.height(); ++y) {
        std::copy(&image(y, 0), &image(y, 0) + image.width(), mat.ptr<float>(y));
    }
    write_mat(path, mat);
}

void write_label_map(const std::filesystem::path& path, const LabelMap& labels) {
    cv::Mat mat(labels.height(), labels.width(), CV_16U);
    for (int y = 0; y < labels.height(); ++y) {
        auto* row = mat.ptr<std::uint16_t>(y);
        for (int x = 0; x < labels.width(); ++x) {
            const auto v = labels(y, x);
            if (v < 0 || v > 65535) {
                throw std::runtime_error("label id " + std::to_string(v) +
                                         " does not fit 16 bits: " + path.string());
            }
            row[x] = static_cast<std::uint16_t>(v);
        }
    }
    write_mat(path, mat);
}

void write_preview(const std::filesystem::path& path, const RawImage& image) {
    std::vector<float> values(image.begin(), image.end());
    const double lo = dataio::percentile(values, 0.1);
    const double hi = dataio::percentile(std::move(values), 99.9);
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    cv::Mat mat(image.height(), image.width(), CV_8U);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width(); ++x) {
            row[x] = cv::saturate_cast<std::uint8_t>((image(y, x) - lo) * scale);
        }
    }
    write_mat(path, mat);
}

}  // namespace voidseg::io
