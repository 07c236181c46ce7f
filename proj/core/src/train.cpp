#include "crowdkd/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "crowdkd/density.hpp"

namespace crowdkd {

const char* supervision_name(Supervision s) { return s == Supervision::hard_only ? "hard" : "hard+soft"; }

Supervision supervision_from_name(const std::string& name) {
    if (name == "hard") return Supervision::hard_only;
    if (name == "hard+soft") return Supervision::hard_plus_soft;
    throw std::invalid_argument("unknown supervision mode: " + name + " (expect 'hard' or 'hard+soft')");
}

void DistillPlan::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("plan: loss weights must be nonnegative");
    if (lr <= 0.0) throw std::invalid_argument("plan: learning rate must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("plan: weight decay must be nonnegative");
    if (epochs < 0) throw std::invalid_argument("plan: epochs must be nonnegative");
    if (rounds < 0) throw std::invalid_argument("plan: review rounds must be nonnegative");
    if (cpr_denom < 1 || cpr_denom > 5) throw std::invalid_argument("plan: cpr must be one of 1,1/2,...,1/5");
    if (sigma <= 0.0) throw std::invalid_argument("plan: sigma must be positive");
    if (soft_weight < 0.0) throw std::invalid_argument("plan: soft weight must be nonnegative");
    if (plateau_patience < 0) throw std::invalid_argument("plan: plateau patience must be nonnegative");
}

namespace {

// Early-stop bookkeeping for the optional loss-plateau cutoff.
struct PlateauWatch {
    int patience;
    double best = std::numeric_limits<double>::infinity();
    int streak = 0;

    explicit PlateauWatch(int patience) : patience(patience) {}
    bool stalled(double epoch_total) {
        if (patience <= 0) return false;
        if (epoch_total < best - 1e-12) {
            best = epoch_total;
            streak = 0;
            return false;
        }
        return ++streak >= patience;
    }
};

}  // namespace

std::string to_json_lines(const TrainReport& report) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        const EpochLosses& l = report.epochs[e];
        os << "{\"epoch\":" << (e + 1) << ",\"review\":" << l.review << ",\"intra\":" << l.intra
           << ",\"inter\":" << l.inter << ",\"soft\":" << l.soft << ",\"total\":" << l.total << "}\n";
    }
    return os.str();
}

LossBreakdown total_loss(const std::vector<Var>& maps, const Var& ground_truth,
                         const std::vector<Var>& teacher_taps, const std::vector<Var>& aligned_taps,
                         double lambda1, double lambda2, const IntraOptions& intra_opts, int ref_index) {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("total_loss: weights must be nonnegative");
    LossBreakdown out;
    out.review = review_loss(maps, ground_truth);
    out.intra = intra_pt_loss(teacher_taps, aligned_taps, intra_opts);
    out.inter = inter_rt_loss(teacher_taps, aligned_taps, ref_index);
    out.total = add(out.review, add(scale(out.intra, lambda1), scale(out.inter, lambda2)));
    return out;
}

namespace {

Var density_target(const Scene& scene, double sigma, int stride) {
    const DensityMap gt = rasterize_density(scene.points(), scene.height(), scene.width(), sigma, stride);
    Tensor g({1, gt.values.dim(0), gt.values.dim(1)});
    for (std::int64_t i = 0; i < gt.values.size(); ++i) g[i] = gt.values[i];
    return constant(std::move(g));
}

std::vector<Var> trainable_of(ParamStore& store) {
    std::vector<Var> out;
    for (const auto& e : store.entries()) out.push_back(e.var);
    return out;
}

}  // namespace

TrainReport train_teacher(TeacherNet& teacher, const Dataset& data, const TeacherTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train_teacher: empty dataset");
    if (cfg.epochs < 0) throw std::invalid_argument("train_teacher: epochs must be nonnegative");
    const auto t0 = std::chrono::steady_clock::now();

    teacher.params().set_requires_grad(true);
    AdamConfig ac;
    ac.lr = cfg.lr;
    ac.weight_decay = cfg.weight_decay;
    ac.clip_norm = cfg.clip_norm;
    Adam opt(trainable_of(teacher.params()), ac);

    const int stride = teacher.total_stride();
    std::vector<Var> targets;
    targets.reserve(data.size());
    for (const Scene& s : data.scenes) targets.push_back(density_target(s, cfg.sigma, stride));

    TrainReport report;
    PlateauWatch plateau(cfg.plateau_patience);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochLosses acc;
        for (std::size_t i = 0; i < data.scenes.size(); ++i) {
            const Var pred = teacher.forward(constant(data.scenes[i].image()));
            const Var loss = sum_sq_diff(pred, targets[i]);
            opt.zero_grad();
            backward(loss);
            opt.step();
            acc.review += loss.value().item();
            acc.total += loss.value().item();
        }
        acc.review /= static_cast<double>(data.size());
        acc.total /= static_cast<double>(data.size());
        report.epochs.push_back(acc);
        if (plateau.stalled(acc.total)) break;
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

DistillResult train_distill(const DistillPlan& plan, const Dataset& data, TeacherNet& teacher) {
    plan.validate();
    if (data.empty()) throw std::invalid_argument("train_distill: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();

    // Configuration errors surface before any training work starts.
    const StudentSpec spec = StudentSpec::for_teacher(teacher.profile(), plan.cpr_denom);
    auto student = build_student(spec, teacher.profile(), plan.seed);
    student->attach_aligners(teacher.profile().tap_channels(), plan.seed + 1);

    teacher.params().set_requires_grad(false);

    AdamConfig ac;
    ac.lr = plan.lr;
    ac.weight_decay = plan.weight_decay;
    ac.clip_norm = plan.clip_norm;
    std::vector<Var> trainable = trainable_of(student->params());
    for (const Var& v : trainable_of(*student->aux_params())) trainable.push_back(v);
    Adam opt(std::move(trainable), ac);

    const int stride = student->total_stride();
    if (stride != teacher.total_stride()) {
        throw std::invalid_argument("train_distill: teacher/student stride mismatch");
    }

    // The teacher is frozen, so its taps (and map, for soft supervision)
    // are computed once per scene and reused every epoch.
    struct TeacherCache {
        std::vector<Var> taps;
        Var map;
    };
    std::vector<TeacherCache> cache(data.size());
    std::vector<Var> targets;
    targets.reserve(data.size());
    for (std::size_t i = 0; i < data.scenes.size(); ++i) {
        const Var image = constant(data.scenes[i].image());
        auto enc = teacher.encode(image);
        cache[i].taps = std::move(enc.taps);
        if (plan.supervision == Supervision::hard_plus_soft) cache[i].map = teacher.decode(enc.tail);
        targets.push_back(density_target(data.scenes[i], plan.sigma, stride));
    }

    IntraOptions intra_opts;
    intra_opts.kind = plan.similarity;
    ReviewConfig rc;
    rc.rounds = plan.rounds;

    TrainReport report;
    PlateauWatch plateau(plan.plateau_patience);
    for (int epoch = 0; epoch < plan.epochs; ++epoch) {
        EpochLosses acc;
        for (std::size_t i = 0; i < data.scenes.size(); ++i) {
            const Var image = constant(data.scenes[i].image());
            auto enc = student->encode(image);
            const std::vector<Var> aligned = student->align(enc.taps);
            const std::vector<Var> maps = review_forward(enc.tail, *student, plan.rounds, rc);

            LossBreakdown loss =
                total_loss(maps, targets[i], cache[i].taps, aligned, plan.lambda1, plan.lambda2, intra_opts);
            double soft_value = 0.0;
            if (plan.supervision == Supervision::hard_plus_soft) {
                const Var soft = sum_sq_diff(maps.back(), cache[i].map);
                soft_value = soft.value().item();
                loss.total = add(loss.total, scale(soft, plan.soft_weight));
            }

            // Logged components must recombine to the logged total.
            const double recombined = loss.review.value().item() + plan.lambda1 * loss.intra.value().item() +
                                      plan.lambda2 * loss.inter.value().item() + plan.soft_weight * soft_value;
            const double total_value = loss.total.value().item();
            if (std::abs(total_value - recombined) > 1e-6 * (1.0 + std::abs(total_value))) {
                throw std::runtime_error("train_distill: loss decomposition drifted");
            }

            opt.zero_grad();
            backward(loss.total);
            opt.step();

            acc.review += loss.review.value().item();
            acc.intra += loss.intra.value().item();
            acc.inter += loss.inter.value().item();
            acc.soft += soft_value;
            acc.total += total_value;
        }
        const double n = static_cast<double>(data.size());
        acc.review /= n;
        acc.intra /= n;
        acc.inter /= n;
        acc.soft /= n;
        acc.total /= n;
        report.epochs.push_back(acc);
        if (plateau.stalled(acc.total)) break;
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(student), std::move(report)};
}

}  // namespace crowdkd
