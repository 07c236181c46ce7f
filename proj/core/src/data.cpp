#include "crowdkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "crowdkd/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace crowdkd {

const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + name);
}

namespace {

json read_json_file(const fs::path& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing " + what + ": " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed JSON in " + what + " " + path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace

Dataset load_dataset(const std::string& root, Split split) {
    const fs::path rootp(root);
    const json manifest = read_json_file(rootp / "manifest.json", "manifest");
    const std::string key = split_name(split);

    Dataset ds;
    ds.split = split;
    ds.root = root;
    if (!manifest.contains(key)) return ds;
    if (!manifest[key].is_array()) {
        throw std::runtime_error("manifest split '" + key + "' must be a list: " + (rootp / "manifest.json").string());
    }

    std::set<std::string> ids;
    for (const auto& entry : manifest[key]) {
        const fs::path scene_path = rootp / entry.get<std::string>();
        const json doc = read_json_file(scene_path, "scene '" + scene_path.stem().string() + "'");
        const std::string id = scene_path.stem().string();
        if (!ids.insert(id).second) throw std::runtime_error("duplicate scene id: " + id);
        if (!doc.contains("image") || !doc.contains("points")) {
            throw std::runtime_error("scene '" + id + "' must have 'image' and 'points' fields");
        }
        const fs::path image_path = rootp / doc["image"].get<std::string>();
        if (!fs::exists(image_path)) {
            throw std::runtime_error("scene '" + id + "' references a missing image: " + image_path.string());
        }
        std::vector<Point> points;
        for (const auto& pt : doc["points"]) {
            if (!pt.is_array() || pt.size() != 2) {
                throw std::runtime_error("scene '" + id + "' has a malformed point entry");
            }
            points.push_back({pt[0].get<double>(), pt[1].get<double>()});
        }
        ds.scenes.push_back(Scene::lazy(id, image_path.string(), std::move(points)));
    }
    return ds;
}

namespace {

// Coarse value-noise background: a low-resolution random grid sampled
// bilinearly, plus mild per-pixel grain.
void paint_background(Tensor& img, Rng& rng) {
    const int h = img.dim(1), w = img.dim(2);
    const int gn = 5;
    double grid[3][gn][gn];
    for (int c = 0; c < 3; ++c) {
        for (int gy = 0; gy < gn; ++gy) {
            for (int gx = 0; gx < gn; ++gx) {
                grid[c][gy][gx] = rng.uniform(0.35, 0.75);
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        const double fy = (h > 1) ? static_cast<double>(y) / (h - 1) * (gn - 1) : 0.0;
        const int y0 = std::min(static_cast<int>(fy), gn - 2);
        const double ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = (w > 1) ? static_cast<double>(x) / (w - 1) * (gn - 1) : 0.0;
            const int x0 = std::min(static_cast<int>(fx), gn - 2);
            const double tx = fx - x0;
            const double grain = rng.uniform(-0.03, 0.03);
            for (int c = 0; c < 3; ++c) {
                const double v = (1 - ty) * ((1 - tx) * grid[c][y0][x0] + tx * grid[c][y0][x0 + 1]) +
                                 ty * ((1 - tx) * grid[c][y0 + 1][x0] + tx * grid[c][y0 + 1][x0 + 1]);
                img.at(c, y, x) = v + grain;
            }
        }
    }
}

void paint_head(Tensor& img, Rng& rng, Point& out_point) {
    const int h = img.dim(1), w = img.dim(2);
    const double margin = 3.0;
    const double cx = rng.uniform(margin, w - margin);
    const double cy = rng.uniform(margin, h - margin);
    const double radius = rng.uniform(1.5, 3.0);
    const double shade[3] = {rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25)};

    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius + 1)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const double wgt = std::max(0.0, 1.0 - d2 / (radius * radius));
            if (wgt <= 0.0) continue;
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = (1.0 - wgt) * img.at(c, y, x) + wgt * shade[c];
            }
        }
    }
    out_point = {cx, cy};
}

}  // namespace

Dataset synth_scenes(int n, int height, int width, int count_lo, int count_hi, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synth_scenes: n must be >= 1");
    if (count_lo < 0 || count_lo > count_hi) throw std::invalid_argument("synth_scenes: invalid count range");
    if (height < 32 || width < 32) throw std::invalid_argument("synth_scenes: shape must be at least 32x32");

    Dataset ds;
    ds.split = Split::train;
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::from(seed, static_cast<std::uint64_t>(i));
        Tensor img({3, height, width});
        paint_background(img, rng);
        const int k = rng.uniform_int(count_lo, count_hi);
        std::vector<Point> points(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) paint_head(img, rng, points[static_cast<std::size_t>(j)]);
        for (std::int64_t p = 0; p < img.size(); ++p) img[p] = std::clamp(img[p], 0.0, 1.0);

        std::ostringstream id;
        id << "scene_" << seed << '_' << i;
        ds.scenes.push_back(Scene::in_memory(id.str(), std::move(img), std::move(points)));
    }
    return ds;
}

Scene augment(const Scene& scene, int crop_h, int crop_w, double flip_prob, Rng& rng) {
    const Tensor& img = scene.image();
    const int h = img.dim(1), w = img.dim(2);
    if (crop_h < 1 || crop_w < 1 || crop_h > h || crop_w > w) {
        throw std::invalid_argument("augment: crop larger than image");
    }
    const int y0 = rng.uniform_int(0, h - crop_h);
    const int x0 = rng.uniform_int(0, w - crop_w);
    const bool flip = rng.uniform() < flip_prob;

    Tensor out({3, crop_h, crop_w});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < crop_h; ++y) {
            for (int x = 0; x < crop_w; ++x) {
                const int sx = flip ? (crop_w - 1 - x) : x;
                out.at(c, y, x) = img.at(c, y0 + y, x0 + sx);
            }
        }
    }
    std::vector<Point> points;
    for (const Point& p : scene.points()) {
        if (p.x < x0 || p.x >= x0 + crop_w || p.y < y0 || p.y >= y0 + crop_h) continue;
        double nx = p.x - x0;
        const double ny = p.y - y0;
        if (flip) nx = crop_w - nx;  // mirror of the continuous coordinate
        points.push_back({nx, ny});
    }
    return Scene::in_memory(scene.id(), std::move(out), std::move(points));
}

void save_dataset(const std::string& root, const Dataset& train, const Dataset& test, bool force) {
    const fs::path rootp(root);
    const fs::path manifest_path = rootp / "manifest.json";
    if (fs::exists(manifest_path) && !force) {
        throw std::runtime_error("refusing to overwrite existing dataset at " + manifest_path.string() +
                                 " (use force)");
    }
    fs::create_directories(rootp / "scenes");
    fs::create_directories(rootp / "images");

    json manifest;
    for (const Dataset* ds : {&train, &test}) {
        json list = json::array();
        for (const Scene& s : ds->scenes) {
            const std::string image_rel = "images/" + s.id() + ".png";
            const std::string scene_rel = "scenes/" + s.id() + ".json";
            write_png_rgb((rootp / image_rel).string(), s.image());

            json doc;
            doc["image"] = image_rel;
            json pts = json::array();
            for (const Point& p : s.points()) pts.push_back({p.x, p.y});
            doc["points"] = pts;
            std::ofstream out(rootp / scene_rel);
            out << doc.dump(2) << '\n';
            list.push_back(scene_rel);
        }
        manifest[split_name(ds->split)] = std::move(list);
    }
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << '\n';
}

}  // namespace crowdkd
