#pragma once

#include <map>
#include <string>
#include <vector>

#include "crowdkd/arch.hpp"
#include "crowdkd/data.hpp"

namespace crowdkd {

/// Mean absolute count error over scenes.
double mae(const std::vector<double>& preds, const std::vector<double>& gts);

/// Root-mean-square count error (the conventional "MSE" of this task).
double mse(const std::vector<double>& preds, const std::vector<double>& gts);

/// Grid average absolute error of one scene: both maps are cut into a
/// 2^level x 2^level grid of near-equal cells with nested proportional
/// boundaries, and per-cell count differences are accumulated.
double game(const Tensor& pred, const Tensor& gt, int level);

/// Teacher performance over student performance; for lower-is-better
/// metrics a ratio above one means the student beats the teacher.
double boosting_ratio(double teacher_perf, double student_perf);

struct EvalResult {
    double mae = 0.0;
    double mse = 0.0;
    std::map<int, double> game;  // level -> dataset mean
    int n = 0;
};

std::string to_json(const EvalResult& r);

/// Metrics over (predicted, ground-truth) map pairs; counts are the map
/// integrals so game[0] coincides with mae exactly.
EvalResult evaluate_maps(const std::vector<std::pair<Tensor, Tensor>>& pred_gt, int game_max_level = 3);

/// Runs net.forward over the dataset; ground truth is rasterized at the
/// network output resolution. Optionally dumps predicted maps as PNGs.
EvalResult evaluate_model(Network& net, const Dataset& data, double sigma = 4.0, int game_max_level = 3,
                          const std::string& dump_dir = "");

}  // namespace crowdkd
