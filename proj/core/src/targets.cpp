#include "voidseg/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace voidseg::targets {

ThreeClassMap to_three_class(const LabelMap& labels) {
    const int h = labels.height();
    const int w = labels.width();
    ThreeClassMap classes(labels.shape(), static_cast<std::uint8_t>(PixelClass::Background));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = labels(y, x);
            if (id == 0) continue;
            bool border = false;
            for (int dy = -1; dy <= 1 && !border; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy;
                    const int nx = x + dx;
                    if ((dy == 0 && dx == 0) || ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                    if (labels(ny, nx) != id) {
                        border = true;
                        break;
                    }
                }
            }
            classes(y, x) = static_cast<std::uint8_t>(border ? PixelClass::Border : PixelClass::Foreground);
        }
    }
    return classes;
}

BorderWeightMap class_weight_map(const ThreeClassMap& classes, float w_border) {
    if (!(w_border > 0.0f)) throw std::invalid_argument("border weight must be positive");
    BorderWeightMap weights(classes.shape(), 1.0f);
    auto src = classes.pixels();
    auto dst = weights.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] == static_cast<std::uint8_t>(PixelClass::Border)) dst[i] = w_border;
    }
    return weights;
}

std::vector<RayDirection> ray_directions(int n_rays) {
    if (n_rays < 3) throw std::invalid_argument("n_rays must be at least 3");
    std::vector<RayDirection> dirs(static_cast<std::size_t>(n_rays));
    for (int k = 0; k < n_rays; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / n_rays;
        dirs[static_cast<std::size_t>(k)] = {std::sin(angle), std::cos(angle)};
    }
    return dirs;
}

PixelCoord ray_step_offset(const RayDirection& dir, int step) {
    return {static_cast<int>(std::floor(step * dir.dy + 0.5)),
            static_cast<int>(std::floor(step * dir.dx + 0.5))};
}

namespace {

// 1-D squared distance transform (Felzenszwalb & Huttenlocher). Requires
// at least one finite sample; callers guarantee that through padding.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    auto at = [](auto& vec, int i) -> auto& { return vec[static_cast<std::size_t>(i)]; };
    int k = 0;
    at(v, 0) = 0;
    at(z, 0) = -std::numeric_limits<double>::infinity();
    at(z, 1) = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s = 0.0;
        while (true) {
            const int p = at(v, k);
            s = ((at(f, q) + q * q) - (at(f, p) + p * p)) / (2.0 * (q - p));
            if (s > at(z, k)) break;
            --k;
        }
        ++k;
        at(v, k) = q;
        at(z, k) = s;
        at(z, k + 1) = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (at(z, k + 1) < q) ++k;
        const int p = at(v, k);
        at(d, q) = (q - p) * (q - p) + at(f, p);
    }
}

struct Box {
    int y0, x0, y1, x1;  // inclusive
};

}  // namespace

RawImage instance_edt(const LabelMap& labels) {
    const int h = labels.height();
    const int w = labels.width();
    std::unordered_map<std::int32_t, Box> boxes;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = labels(y, x);
            if (id == 0) continue;
            auto [it, inserted] = boxes.try_emplace(id, Box{y, x, y, x});
            if (!inserted) {
                auto& b = it->second;
                b.y0 = std::min(b.y0, y);
                b.x0 = std::min(b.x0, x);
                b.y1 = std::max(b.y1, y);
                b.x1 = std::max(b.x1, x);
            }
        }
    }

    // finite stand-in for infinity keeps the parabola intersections well defined
    constexpr double inf = 1e12;
    RawImage out(labels.shape(), 0.0f);
    for (const auto& [id, box] : boxes) {
        // Pad by one pixel: the nearest non-instance pixel always lies inside
        // the padded box, and padding outside the image is background.
        const int oy = box.y0 - 1;
        const int ox = box.x0 - 1;
        const int bh = box.y1 - box.y0 + 3;
        const int bw = box.x1 - box.x0 + 3;
        std::vector<double> grid(static_cast<std::size_t>(bh) * static_cast<std::size_t>(bw));
        for (int y = 0; y < bh; ++y) {
            for (int x = 0; x < bw; ++x) {
                const int iy = oy + y;
                const int ix = ox + x;
                const bool inside = iy >= 0 && ix >= 0 && iy < h && ix < w && labels(iy, ix) == id;
                grid[static_cast<std::size_t>(y) * static_cast<std::size_t>(bw) + static_cast<std::size_t>(x)] =
                    inside ? inf : 0.0;
            }
        }
        const int n = std::max(bh, bw);
        std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n)),
            z(static_cast<std::size_t>(n) + 1);
        std::vector<int> v(static_cast<std::size_t>(n));
        // columns
        f.resize(static_cast<std::size_t>(bh));
        d.resize(static_cast<std::size_t>(bh));
        for (int x = 0; x < bw; ++x) {
            for (int y = 0; y < bh; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y * bw + x)];
            edt_1d(f, d, v, z);
            for (int y = 0; y < bh; ++y) grid[static_cast<std::size_t>(y * bw + x)] = d[static_cast<std::size_t>(y)];
        }
        // rows
        f.resize(static_cast<std::size_t>(bw));
        d.resize(static_cast<std::size_t>(bw));
        for (int y = 0; y < bh; ++y) {
            for (int x = 0; x < bw; ++x) f[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y * bw + x)];
            edt_1d(f, d, v, z);
            for (int x = 0; x < bw; ++x) grid[static_cast<std::size_t>(y * bw + x)] = d[static_cast<std::size_t>(x)];
        }
        for (int y = 1; y < bh - 1; ++y) {
            for (int x = 1; x < bw - 1; ++x) {
                const int iy = oy + y;
                const int ix = ox + x;
                if (labels(iy, ix) == id) {
                    out(iy, ix) = static_cast<float>(std::sqrt(grid[static_cast<std::size_t>(y * bw + x)]));
                }
            }
        }
    }
    return out;
}

StarTarget star_distances(const LabelMap& labels, int n_rays) {
    const auto dirs = ray_directions(n_rays);
    const int h = labels.height();
    const int w = labels.width();
    const int max_steps = static_cast<int>(std::ceil(std::hypot(h, w))) + 1;

    // offsets[k][i - 1] is the pixel offset of step i along ray k
    std::vector<std::vector<PixelCoord>> offsets(dirs.size());
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        offsets[k].reserve(static_cast<std::size_t>(max_steps));
        for (int i = 1; i <= max_steps; ++i) offsets[k].push_back(ray_step_offset(dirs[k], i));
    }

    StarTarget target;
    target.n_rays = n_rays;
    target.shape = labels.shape();
    const std::size_t area = labels.shape().area();
    target.distances.assign(area * dirs.size(), 0.0f);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = labels(y, x);
            if (id == 0) continue;
            const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                                    static_cast<std::size_t>(x);
            for (std::size_t k = 0; k < dirs.size(); ++k) {
                int steps = max_steps;
                for (int i = 1; i <= max_steps; ++i) {
                    const auto& off = offsets[k][static_cast<std::size_t>(i - 1)];
                    const int ny = y + off.y;
                    const int nx = x + off.x;
                    if (ny < 0 || nx < 0 || ny >= h || nx >= w || labels(ny, nx) != id) {
                        steps = i;
                        break;
                    }
                }
                target.distances[k * area + pix] = static_cast<float>(steps);
            }
        }
    }

    target.object_prob = instance_edt(labels);
    std::unordered_map<std::int32_t, float> peak;
    for (std::size_t i = 0; i < area; ++i) {
        const auto id = labels.pixels()[i];
        if (id == 0) continue;
        auto& m = peak[id];
        m = std::max(m, target.object_prob.pixels()[i]);
    }
    auto prob = target.object_prob.pixels();
    for (std::size_t i = 0; i < area; ++i) {
        const auto id = labels.pixels()[i];
        if (id != 0) prob[i] /= peak[id];
    }
    return target;
}

}  // namespace voidseg::targets
