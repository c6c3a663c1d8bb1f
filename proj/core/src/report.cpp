#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "voidseg/experiments.hpp"

namespace voidseg::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ReportRow> summarize(const std::vector<RunRecord>& records) {
    using Cell = std::tuple<double, int, int>;  // noise, scheme, subset
    std::map<Cell, std::vector<const RunRecord*>> cells;
    for (const auto& r : records) {
        if (!r.ok) continue;
        cells[{r.key.noise, static_cast<int>(r.key.scheme), r.key.subset}].push_back(&r);
    }
    std::vector<ReportRow> rows;
    for (const auto& [cell, runs] : cells) {
        ReportRow row;
        row.noise = std::get<0>(cell);
        row.scheme = static_cast<segtrain::Scheme>(std::get<1>(cell));
        row.subset = std::get<2>(cell);
        row.train_images = runs.front()->train_images;
        std::vector<eval::MetricsReport> reports;
        for (const auto* r : runs) reports.push_back(r->test);
        row.summary = eval::aggregate(reports);
        rows.push_back(row);
    }
    return rows;
}

namespace {

const std::vector<cv::Scalar>& palette() {
    static const std::vector<cv::Scalar> colors{{180, 119, 31}, {14, 127, 255}, {44, 160, 44},
                                                {40, 39, 214},  {189, 103, 148}, {75, 86, 140}};
    return colors;
}

void plot(const std::vector<ReportRow>& rows, double noise, bool ap, const fs::path& path) {
    constexpr int kWidth = 820, kHeight = 560, kLeft = 70, kRight = 230, kTop = 40, kBottom = 60;
    cv::Mat canvas(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
    const int plot_w = kWidth - kLeft - kRight;
    const int plot_h = kHeight - kTop - kBottom;

    std::map<segtrain::Scheme, std::vector<const ReportRow*>> curves;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : rows) {
        if (r.noise != noise) continue;
        curves[r.scheme].push_back(&r);
        lo = std::min(lo, std::log10(static_cast<double>(std::max<std::size_t>(r.train_images, 1))));
        hi = std::max(hi, std::log10(static_cast<double>(std::max<std::size_t>(r.train_images, 1))));
    }
    if (hi - lo < 1e-9) {
        lo -= 0.5;
        hi += 0.5;
    }
    auto px = [&](std::size_t n) {
        const double t = (std::log10(static_cast<double>(std::max<std::size_t>(n, 1))) - lo) / (hi - lo);
        return kLeft + static_cast<int>(std::lround(t * plot_w));
    };
    auto py = [&](double v) { return kTop + static_cast<int>(std::lround((1.0 - std::clamp(v, 0.0, 1.0)) * plot_h)); };

    const auto grey = cv::Scalar(200, 200, 200);
    const auto black = cv::Scalar(0, 0, 0);
    for (int i = 0; i <= 10; i += 2) {
        const int y = py(i / 10.0);
        cv::line(canvas, {kLeft, y}, {kLeft + plot_w, y}, grey, 1);
        cv::putText(canvas, std::to_string(i / 10) + "." + std::to_string(i % 10), {kLeft - 40, y + 5},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
    }
    for (int d = static_cast<int>(std::ceil(lo)); d <= static_cast<int>(std::floor(hi)); ++d) {
        const int x = kLeft + static_cast<int>(std::lround((d - lo) / (hi - lo) * plot_w));
        cv::line(canvas, {x, kTop}, {x, kTop + plot_h}, grey, 1);
        std::ostringstream label;
        label << static_cast<long long>(std::llround(std::pow(10.0, d)));
        cv::putText(canvas, label.str(), {x - 12, kTop + plot_h + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1,
                    cv::LINE_AA);
    }
    cv::rectangle(canvas, {kLeft, kTop}, {kLeft + plot_w, kTop + plot_h}, black, 1);
    cv::putText(canvas, "training images (log scale)", {kLeft + plot_w / 2 - 110, kHeight - 15},
                cv::FONT_HERSHEY_SIMPLEX, 0.55, black, 1, cv::LINE_AA);
    cv::putText(canvas, std::string(ap ? "AP" : "SEG") + " vs training images, " + dataio::noise_variant_name(noise),
                {kLeft, kTop - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1, cv::LINE_AA);

    int legend_y = kTop + 20;
    for (auto& [scheme, points] : curves) {
        std::sort(points.begin(), points.end(),
                  [](const ReportRow* a, const ReportRow* b) { return a->train_images < b->train_images; });
        const auto& color = palette()[static_cast<std::size_t>(scheme) % palette().size()];
        std::vector<cv::Point> upper, lower, mean;
        for (const auto* r : points) {
            const auto& m = ap ? r->summary.ap : r->summary.seg;
            const int x = px(r->train_images);
            upper.push_back({x, py(m.mean + m.se)});
            lower.push_back({x, py(m.mean - m.se)});
            mean.push_back({x, py(m.mean)});
        }
        std::vector<cv::Point> band(upper.begin(), upper.end());
        band.insert(band.end(), lower.rbegin(), lower.rend());
        cv::Mat overlay = canvas.clone();
        cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{band}, color, cv::LINE_AA);
        cv::addWeighted(overlay, 0.25, canvas, 0.75, 0.0, canvas);
        cv::polylines(canvas, mean, false, color, 2, cv::LINE_AA);
        for (const auto& p : mean) cv::circle(canvas, p, 3, color, cv::FILLED, cv::LINE_AA);
        cv::line(canvas, {kLeft + plot_w + 15, legend_y}, {kLeft + plot_w + 40, legend_y}, color, 2, cv::LINE_AA);
        cv::putText(canvas, segtrain::to_string(scheme), {kLeft + plot_w + 45, legend_y + 5},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
        legend_y += 22;
    }
    if (!cv::imwrite(path.string(), canvas)) throw std::runtime_error("cannot write plot " + path.string());
}

}  // namespace

ReportFiles report(const std::vector<RunRecord>& records, const fs::path& out_dir) {
    if (records.empty()) throw std::invalid_argument("report: no records");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw std::runtime_error("cannot create report directory " + out_dir.string());

    const auto rows = summarize(records);
    ReportFiles files;
    files.table = out_dir / "summary.csv";
    {
        std::ofstream out(files.table);
        if (!out) throw std::runtime_error("cannot write " + files.table.string());
        out.precision(10);
        out << "noise,scheme,subset,train_images,repeats,ap_mean,ap_se,seg_mean,seg_se\n";
        for (const auto& r : rows) {
            out << r.noise << ',' << segtrain::to_string(r.scheme) << ',' << r.subset << ',' << r.train_images << ','
                << r.summary.ap.n << ',' << r.summary.ap.mean << ',' << r.summary.ap.se << ',' << r.summary.seg.mean
                << ',' << r.summary.seg.se << '\n';
        }
        if (!out) throw std::runtime_error("write failed: " + files.table.string());
    }

    std::vector<double> noises;
    for (const auto& r : rows) {
        if (std::find(noises.begin(), noises.end(), r.noise) == noises.end()) noises.push_back(r.noise);
    }
    for (double n : noises) {
        for (bool ap : {true, false}) {
            const auto path = out_dir / ((ap ? "ap_" : "seg_") + dataio::noise_variant_name(n) + ".png");
            plot(rows, n, ap, path);
            files.plots.push_back(path);
        }
    }

    json manifest;
    manifest["table"] = files.table.filename().string();
    manifest["plots"] = json::array();
    for (const auto& p : files.plots) manifest["plots"].push_back(p.filename().string());
    manifest["records"] = records.size();
    manifest["failed"] = json::array();
    for (const auto& r : records) {
        if (!r.ok) manifest["failed"].push_back({{"id", r.key.id()}, {"error", r.error}});
    }
    manifest["rows"] = json::array();
    for (const auto& r : rows) {
        manifest["rows"].push_back({{"noise", r.noise},
                                    {"scheme", segtrain::to_string(r.scheme)},
                                    {"subset", r.subset},
                                    {"train_images", r.train_images},
                                    {"repeats", r.summary.ap.n},
                                    {"ap", {{"mean", r.summary.ap.mean}, {"se", r.summary.ap.se}}},
                                    {"seg", {{"mean", r.summary.seg.mean}, {"se", r.summary.seg.se}}}});
    }
    files.manifest = out_dir / "report.json";
    std::ofstream out(files.manifest);
    if (!out) throw std::runtime_error("cannot write " + files.manifest.string());
    out << manifest.dump(2) << '\n';
    return files;
}

}  // namespace voidseg::experiments
