#include "crowdkd/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "crowdkd/density.hpp"
#include "crowdkd/image_io.hpp"

namespace crowdkd {

namespace {

void check_pairs(const std::vector<double>& preds, const std::vector<double>& gts) {
    if (preds.empty() || preds.size() != gts.size()) {
        throw std::invalid_argument("metrics: prediction/ground-truth lists must be nonempty and equal-sized");
    }
}

}  // namespace

double mae(const std::vector<double>& preds, const std::vector<double>& gts) {
    check_pairs(preds, gts);
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) acc += std::abs(preds[i] - gts[i]);
    return acc / static_cast<double>(preds.size());
}

double mse(const std::vector<double>& preds, const std::vector<double>& gts) {
    check_pairs(preds, gts);
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - gts[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(preds.size()));
}

double game(const Tensor& pred, const Tensor& gt, int level) {
    if (pred.rank() != 2 || !pred.same_shape(gt)) {
        throw std::invalid_argument("game: maps must be {H,W} with identical shapes");
    }
    if (level < 0) throw std::invalid_argument("game: level must be >= 0");
    const int h = pred.dim(0), w = pred.dim(1);
    const int cells = 1 << level;
    if (cells > h || cells > w) {
        throw std::invalid_argument("game: 2^level exceeds the map side");
    }
    // Proportional integer boundaries: level-L cell edges are a subset of
    // the level-(L+1) edges, so refinements nest and GAME stays monotone.
    double acc = 0.0;
    for (int cy = 0; cy < cells; ++cy) {
        const int y0 = static_cast<int>((static_cast<std::int64_t>(cy) * h) / cells);
        const int y1 = static_cast<int>((static_cast<std::int64_t>(cy + 1) * h) / cells);
        for (int cx = 0; cx < cells; ++cx) {
            const int x0 = static_cast<int>((static_cast<std::int64_t>(cx) * w) / cells);
            const int x1 = static_cast<int>((static_cast<std::int64_t>(cx + 1) * w) / cells);
            double cp = 0.0, cg = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    cp += pred.at(y, x);
                    cg += gt.at(y, x);
                }
            }
            acc += std::abs(cp - cg);
        }
    }
    return acc;
}

double boosting_ratio(double teacher_perf, double student_perf) {
    if (student_perf <= 0.0) throw std::invalid_argument("boosting_ratio: student performance must be positive");
    return teacher_perf / student_perf;
}

std::string to_json(const EvalResult& r) {
    std::ostringstream os;
    os.precision(12);
    os << "{\"n\":" << r.n << ",\"mae\":" << r.mae << ",\"mse\":" << r.mse << ",\"game\":{";
    bool first = true;
    for (const auto& [level, value] : r.game) {
        if (!first) os << ',';
        first = false;
        os << '"' << level << "\":" << value;
    }
    os << "}}";
    return os.str();
}

EvalResult evaluate_maps(const std::vector<std::pair<Tensor, Tensor>>& pred_gt, int game_max_level) {
    if (pred_gt.empty()) throw std::invalid_argument("evaluate_maps: no scenes");
    std::vector<double> preds, gts;
    preds.reserve(pred_gt.size());
    gts.reserve(pred_gt.size());
    EvalResult r;
    for (int level = 0; level <= game_max_level; ++level) r.game[level] = 0.0;
    for (const auto& [pred, gt] : pred_gt) {
        preds.push_back(pred.sum());
        gts.push_back(gt.sum());
        for (int level = 0; level <= game_max_level; ++level) r.game[level] += game(pred, gt, level);
    }
    for (int level = 0; level <= game_max_level; ++level) r.game[level] /= static_cast<double>(pred_gt.size());
    r.mae = mae(preds, gts);
    r.mse = mse(preds, gts);
    r.n = static_cast<int>(pred_gt.size());
    return r;
}

EvalResult evaluate_model(Network& net, const Dataset& data, double sigma, int game_max_level,
                          const std::string& dump_dir) {
    if (data.empty()) throw std::invalid_argument("evaluate_model: empty dataset");
    if (!dump_dir.empty()) std::filesystem::create_directories(dump_dir);

    const int stride = net.total_stride();
    std::vector<std::pair<Tensor, Tensor>> pairs;
    pairs.reserve(data.size());
    for (const Scene& scene : data.scenes) {
        const Var out = net.forward(constant(scene.image()));
        const Tensor& m = out.value();  // {1,h,w}
        Tensor pred({m.dim(1), m.dim(2)});
        for (std::int64_t i = 0; i < pred.size(); ++i) pred[i] = m[i];
        const DensityMap gt = rasterize_density(scene.points(), scene.height(), scene.width(), sigma, stride);
        if (!dump_dir.empty()) {
            write_png_gray((std::filesystem::path(dump_dir) / (scene.id() + ".png")).string(), pred);
        }
        pairs.emplace_back(std::move(pred), gt.values);
    }
    return evaluate_maps(pairs, game_max_level);
}

}  // namespace crowdkd
