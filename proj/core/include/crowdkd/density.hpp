#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crowdkd/tensor.hpp"

namespace crowdkd {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// An annotated image: pixel grid plus head locations. Pixel values live in
/// [0,1]; point coordinates in [0,W]x[0,H]. The pixel data may be decoded
/// from disk on first access.
class Scene {
public:
    Scene() = default;

    static Scene in_memory(std::string id, Tensor image, std::vector<Point> points);
    static Scene lazy(std::string id, std::string image_path, std::vector<Point> points);

    const std::string& id() const { return id_; }
    const std::vector<Point>& points() const { return points_; }
    std::vector<Point>& points() { return points_; }

    /// Decoded {3,H,W} pixels; thread-safe one-shot decode for lazy scenes.
    const Tensor& image() const;
    int height() const { return image().dim(1); }
    int width() const { return image().dim(2); }

    const std::string& image_path() const { return image_path_; }

private:
    struct LazySlot;

    std::string id_;
    std::vector<Point> points_;
    std::string image_path_;
    std::shared_ptr<LazySlot> slot_;
};

/// Nonnegative people-per-pixel grid; sum approximates the head count.
/// `scale` is the downsample factor relative to the source image.
struct DensityMap {
    Tensor values;  // {H,W}
    int scale = 1;
};

/// Places one unit-mass Gaussian of std `sigma` per point, truncated at
/// 4*sigma and renormalized over the truncation window before boundary
/// clipping, then block-sum pools to (H/scale, W/scale).
DensityMap rasterize_density(const std::vector<Point>& points, int height, int width, double sigma,
                             int scale = 1);

/// Integral of the map, i.e. the count estimate.
double count(const DensityMap& map);

/// Mass-conserving block-sum pooling of a {H,W} grid.
Tensor block_sum_pool(const Tensor& grid, int scale);

}  // namespace crowdkd
