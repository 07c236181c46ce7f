#include "crowdkd/density.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>

#include "crowdkd/image_io.hpp"

namespace crowdkd {

struct Scene::LazySlot {
    std::once_flag flag;
    Tensor pixels;
};

Scene Scene::in_memory(std::string id, Tensor image, std::vector<Point> points) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("scene image must be {3,H,W}");
    }
    Scene s;
    s.id_ = std::move(id);
    s.points_ = std::move(points);
    s.slot_ = std::make_shared<LazySlot>();
    s.slot_->pixels = std::move(image);
    std::call_once(s.slot_->flag, [] {});
    return s;
}

Scene Scene::lazy(std::string id, std::string image_path, std::vector<Point> points) {
    Scene s;
    s.id_ = std::move(id);
    s.points_ = std::move(points);
    s.image_path_ = std::move(image_path);
    s.slot_ = std::make_shared<LazySlot>();
    return s;
}

const Tensor& Scene::image() const {
    if (!slot_) throw std::logic_error("scene '" + id_ + "' has no image");
    std::call_once(slot_->flag, [this] { slot_->pixels = read_image(image_path_); });
    return slot_->pixels;
}

Tensor block_sum_pool(const Tensor& grid, int scale) {
    if (grid.rank() != 2) throw std::invalid_argument("block_sum_pool: expected {H,W}");
    const int h = grid.dim(0), w = grid.dim(1);
    if (scale < 1 || h % scale != 0 || w % scale != 0) {
        throw std::invalid_argument("block_sum_pool: scale must divide both sides");
    }
    if (scale == 1) return grid;
    Tensor out({h / scale, w / scale});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.at(y / scale, x / scale) += grid.at(y, x);
        }
    }
    return out;
}

DensityMap rasterize_density(const std::vector<Point>& points, int height, int width, double sigma, int scale) {
    if (sigma <= 0.0) throw std::invalid_argument("rasterize_density: sigma must be positive");
    if (height < 1 || width < 1) throw std::invalid_argument("rasterize_density: empty shape");
    if (scale < 1 || height % scale != 0 || width % scale != 0) {
        throw std::invalid_argument("rasterize_density: scale must divide the image shape");
    }
    for (const Point& p : points) {
        if (p.x < 0.0 || p.x > width || p.y < 0.0 || p.y > height) {
            throw std::invalid_argument("rasterize_density: point outside image bounds");
        }
    }

    Tensor full({height, width});
    const double radius = 4.0 * sigma;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (const Point& p : points) {
        const int y0 = static_cast<int>(std::ceil(p.y - radius));
        const int y1 = static_cast<int>(std::floor(p.y + radius));
        const int x0 = static_cast<int>(std::ceil(p.x - radius));
        const int x1 = static_cast<int>(std::floor(p.x + radius));
        // Kernel mass over the whole truncation window, clipped or not.
        double total = 0.0;
        for (int y = y0; y <= y1; ++y) {
            const double dy2 = (y - p.y) * (y - p.y);
            for (int x = x0; x <= x1; ++x) {
                const double dx2 = (x - p.x) * (x - p.x);
                total += std::exp(-(dx2 + dy2) * inv2s2);
            }
        }
        if (total <= 0.0) continue;
        for (int y = std::max(y0, 0); y <= std::min(y1, height - 1); ++y) {
            const double dy2 = (y - p.y) * (y - p.y);
            for (int x = std::max(x0, 0); x <= std::min(x1, width - 1); ++x) {
                const double dx2 = (x - p.x) * (x - p.x);
                full.at(y, x) += std::exp(-(dx2 + dy2) * inv2s2) / total;
            }
        }
    }

    DensityMap map;
    map.values = block_sum_pool(full, scale);
    map.scale = scale;
    return map;
}

double count(const DensityMap& map) { return map.values.sum(); }

}  // namespace crowdkd
