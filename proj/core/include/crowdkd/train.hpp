#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crowdkd/arch.hpp"
#include "crowdkd/data.hpp"
#include "crowdkd/distill.hpp"
#include "crowdkd/review.hpp"

namespace crowdkd {

enum class Supervision { hard_only, hard_plus_soft };

const char* supervision_name(Supervision s);
Supervision supervision_from_name(const std::string& name);

/// Everything one distillation run needs; mirrors the JSON config schema.
struct DistillPlan {
    std::string teacher_checkpoint;  // used by the CLI; in-process runs pass the teacher directly
    int cpr_denom = 4;
    int rounds = 2;
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    double lr = 1e-4;
    double weight_decay = 5e-4;
    int epochs = 100;
    std::uint64_t seed = 0;
    Supervision supervision = Supervision::hard_only;
    double sigma = 4.0;
    double soft_weight = 1.0;
    double clip_norm = 0.0;      // 0 disables
    int plateau_patience = 0;    // epochs without improvement before an early stop; 0 disables
    bool deterministic = true;
    Similarity similarity = Similarity::cosine;

    void validate() const;
};

struct TeacherTrainConfig {
    int epochs = 200;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double sigma = 4.0;
    std::uint64_t seed = 0;
    double clip_norm = 0.0;
    int plateau_patience = 0;
    bool deterministic = true;
};

struct EpochLosses {
    double review = 0.0;
    double intra = 0.0;
    double inter = 0.0;
    double soft = 0.0;
    double total = 0.0;
};

struct TrainReport {
    std::vector<EpochLosses> epochs;  // per-epoch means over scenes
    double wall_seconds = 0.0;
    std::string checkpoint_path;
};

std::string to_json_lines(const TrainReport& report);

struct LossBreakdown {
    Var total;
    Var review;
    Var intra;
    Var inter;
};

/// Combined objective: review + lambda1 * intra + lambda2 * inter, with the
/// components returned separately for logging.
LossBreakdown total_loss(const std::vector<Var>& maps, const Var& ground_truth,
                         const std::vector<Var>& teacher_taps, const std::vector<Var>& aligned_taps,
                         double lambda1, double lambda2, const IntraOptions& intra_opts = {},
                         int ref_index = -1);

/// Plain supervised training of a teacher against rasterized ground truth
/// with a squared-error density loss.
TrainReport train_teacher(TeacherNet& teacher, const Dataset& data, const TeacherTrainConfig& cfg);

struct DistillResult {
    std::unique_ptr<StudentNet> student;
    TrainReport report;
};

/// Builds the student for the teacher's tap layout, freezes the teacher,
/// and optimizes the combined objective over the dataset. Aligners train
/// jointly but stay out of the inference parameter set.
DistillResult train_distill(const DistillPlan& plan, const Dataset& data, TeacherNet& teacher);

}  // namespace crowdkd
