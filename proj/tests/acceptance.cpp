// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 1-8 and 10 are quick; criterion 9 is a full desk-scale
// train/distill run and dominates the runtime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "crowdkd/checkpoint.hpp"
#include "crowdkd/data.hpp"
#include "crowdkd/density.hpp"
#include "crowdkd/distill.hpp"
#include "crowdkd/metrics.hpp"
#include "crowdkd/review.hpp"
#include "crowdkd/train.hpp"
#include "oracles.hpp"

using namespace crowdkd;

namespace {

struct Criterion {
    int id;
    std::string name;
    std::function<bool(std::string&)> run;
};

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

// ---------------------------------------------------------------- 1: FSP

bool c1_fsp_oracle(std::string& detail) {
    Rng rng(101);
    double worst = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 200; ++trial) {
        const int h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
        const int m = rng.uniform_int(1, 3), n = rng.uniform_int(1, 3);
        const Tensor f1 = oracle::random_tensor({m, h, w}, rng);
        const Tensor f2 = oracle::random_tensor({n, h, w}, rng);
        const Tensor got = fsp_matrix(f1, f2).values;
        const Tensor want = oracle::fsp_brute(f1, f2);
        for (std::int64_t i = 0; i < want.size(); ++i) {
            worst = std::max(worst, std::abs(got[i] - want[i]));
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "max abs err " << worst << " over 200 pairs in " << secs << " s";
    detail = os.str();
    return worst < 1e-9 && secs < 5.0;
}

// ----------------------------------------------------- 2: intra-PT bounds

bool c2_intra_properties(std::string& detail) {
    Rng rng(102);
    std::vector<Tensor> taps = {oracle::random_tensor({2, 3, 4}, rng, 0.3, 1.5),
                                oracle::random_tensor({3, 2, 2}, rng, 0.3, 1.5),
                                oracle::random_tensor({1, 4, 4}, rng, 0.3, 1.5)};
    double hw_sum = 0.0;
    for (const auto& t : taps) hw_sum += static_cast<double>(t.dim(1)) * t.dim(2);

    const double at_match = intra_pt_loss(taps, taps);
    if (!(at_match < 1e-5)) {
        detail = "matched loss " + std::to_string(at_match) + " not < 1e-5";
        return false;
    }

    std::vector<Tensor> neg;
    for (const auto& t : taps) {
        Tensor n = t;
        for (std::int64_t i = 0; i < n.size(); ++i) n[i] = -n[i];
        neg.push_back(n);
    }
    const double at_anti = intra_pt_loss(taps, neg);
    if (std::abs(at_anti - 2.0 * hw_sum) > 1e-4) {
        detail = "antiparallel loss " + std::to_string(at_anti) + " vs " + std::to_string(2.0 * hw_sum);
        return false;
    }

    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Tensor> s;
        for (const auto& t : taps) s.push_back(oracle::random_tensor(t.shape(), rng));
        const double loss = intra_pt_loss(taps, s);
        if (!(loss >= 0.0 && loss <= 2.0 * hw_sum)) {
            detail = "trial " + std::to_string(trial) + " loss " + std::to_string(loss) + " out of bounds";
            return false;
        }
    }

    const Tensor t = oracle::random_tensor({4, 3, 3}, rng, 0.2, 1.2);
    const Tensor s = oracle::random_tensor({4, 3, 3}, rng, 0.2, 1.2);
    const Tensor base = cosine_similarity_map(t, s);
    for (double c : {0.25, 2.0, 40.0}) {
        Tensor sc = s;
        for (std::int64_t i = 0; i < sc.size(); ++i) sc[i] *= c;
        const Tensor scaled = cosine_similarity_map(t, sc);
        for (std::int64_t i = 0; i < base.size(); ++i) {
            if (std::abs(scaled[i] - base[i]) > 1e-6) {
                detail = "cosine not scale invariant at c=" + std::to_string(c);
                return false;
            }
        }
    }
    detail = "matched " + std::to_string(at_match) + ", antiparallel gap " +
             std::to_string(std::abs(at_anti - 2.0 * hw_sum)) + ", 1000 bound trials ok";
    return true;
}

// -------------------------------------------------- 3: gradient checks

bool c3_gradients(std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(103);
    const double step = 1e-4;
    double worst = 0.0;
    auto track = [&worst](double err) { worst = std::max(worst, err); };

    // intra
    {
        const Tensor t = oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.4);
        const Tensor s0 = oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.4);
        Var leaf(s0, true);
        backward(intra_pt_loss({constant(t)}, {leaf}));
        const Tensor num = oracle::finite_difference(
            [&](const Tensor& p) { return intra_pt_loss({t}, {p}); }, s0, step);
        track(oracle::max_rel_err(leaf.grad(), num));
    }
    // inter
    {
        std::vector<Tensor> t = {oracle::random_tensor({2, 2, 2}, rng), oracle::random_tensor({2, 2, 2}, rng)};
        const Tensor s0 = oracle::random_tensor({2, 2, 2}, rng);
        const Tensor s1 = oracle::random_tensor({2, 2, 2}, rng);
        Var leaf(s0, true);
        backward(inter_rt_loss({constant(t[0]), constant(t[1])}, {leaf, constant(s1)}));
        const Tensor num = oracle::finite_difference(
            [&](const Tensor& p) { return inter_rt_loss(t, {p, s1}); }, s0, step);
        track(oracle::max_rel_err(leaf.grad(), num));
    }
    // review
    {
        const Tensor g = oracle::random_tensor({2, 2, 2}, rng);
        const Tensor m0 = oracle::random_tensor({2, 2, 2}, rng);
        const Tensor m1 = oracle::random_tensor({2, 2, 2}, rng);
        Var leaf(m0, true);
        backward(review_loss({leaf, constant(m1)}, constant(g)));
        const Tensor num = oracle::finite_difference(
            [&](const Tensor& p) { return review_loss(std::vector<Tensor>{p, m1}, g); }, m0, step);
        track(oracle::max_rel_err(leaf.grad(), num));
    }
    // total, w.r.t. both the aligned tap and the map
    {
        const Tensor g = oracle::random_tensor({1, 2, 2}, rng);
        const Tensor m0 = oracle::random_tensor({1, 2, 2}, rng);
        std::vector<Tensor> t = {oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.4),
                                 oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.4)};
        const Tensor s0 = oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.4);
        const Tensor s1 = oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.4);

        Var sleaf(s0, true);
        Var mleaf(m0, true);
        const LossBreakdown l = total_loss({mleaf}, constant(g), {constant(t[0]), constant(t[1])},
                                           {sleaf, constant(s1)}, 0.5, 0.5);
        backward(l.total);
        auto eval = [&](const Tensor& sp, const Tensor& mp) {
            return total_loss({constant(mp)}, constant(g), {constant(t[0]), constant(t[1])},
                              {constant(sp), constant(s1)}, 0.5, 0.5)
                .total.value()
                .item();
        };
        const Tensor num_s = oracle::finite_difference(
            [&](const Tensor& p) { return eval(p, m0); }, s0, step);
        track(oracle::max_rel_err(sleaf.grad(), num_s));
        const Tensor num_m = oracle::finite_difference(
            [&](const Tensor& p) { return eval(s0, p); }, m0, step);
        track(oracle::max_rel_err(mleaf.grad(), num_m));
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "worst rel err " << worst << " in " << secs << " s";
    detail = os.str();
    return worst < 1e-3 && secs < 30.0;
}

// -------------------------------------------------- 4: metric identities

bool c4_metric_identities(std::string& detail) {
    Rng rng(104);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (int i = 0; i < 25; ++i) {
        pairs.emplace_back(oracle::random_tensor({8, 8}, rng, 0.0, 1.0),
                           oracle::random_tensor({8, 8}, rng, 0.0, 1.0));
    }
    const EvalResult r = evaluate_maps(pairs, 3);
    if (r.game.at(0) != r.mae) {
        detail = "game(0) mean != mae";
        return false;
    }

    for (int trial = 0; trial < 100; ++trial) {
        const int h = 8 + 2 * rng.uniform_int(0, 10);
        const int w = 8 + 2 * rng.uniform_int(0, 10);
        const Tensor a = oracle::random_tensor({h, w}, rng, 0.0, 0.5);
        const Tensor b = oracle::random_tensor({h, w}, rng, 0.0, 0.5);
        double prev = -1.0;
        for (int level = 0; level <= 3; ++level) {
            const double cur = game(a, b, level);
            if (cur + 1e-12 < prev) {
                detail = "game not monotone at trial " + std::to_string(trial);
                return false;
            }
            prev = cur;
        }
    }

    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.uniform_int(1, 15);
        std::vector<double> p, g;
        for (int i = 0; i < n; ++i) {
            p.push_back(rng.uniform(0, 40));
            g.push_back(rng.uniform(0, 40));
        }
        if (mse(p, g) + 1e-12 < mae(p, g)) {
            detail = "mse < mae at trial " + std::to_string(trial);
            return false;
        }
    }

    if (std::abs(mse({3}, {5}) - 2.0) > 1e-12) {
        detail = "mse single pair (3,5) != 2";
        return false;
    }
    detail = "game(0)==mae exact, 100 monotonicity and 100 power-mean trials ok";
    return true;
}

// --------------------------------------------- 5: boosting-ratio checks

bool c5_boosting_ratio(std::string& detail) {
    const double part_b = boosting_ratio(10.23 + 16.50, 8.99 + 13.39);
    const double worldexpo = boosting_ratio(8.6, 7.0);
    std::ostringstream os;
    os << "count ratio " << part_b << ", scene-average ratio " << worldexpo;
    detail = os.str();
    return std::abs(part_b - 1.19) <= 0.005 && std::abs(worldexpo - 1.23) <= 0.005;
}

// ------------------------------------------- 6: wrapper param invariance

bool c6_wrap_invariance(std::string& detail) {
    auto toy = build_teacher(NetworkProfile::toy(), 1);
    auto csrnet = build_teacher(NetworkProfile::csrnet_like(), 1);
    const NetworkProfile tp = NetworkProfile::csrnet_like();
    auto student = build_student(StudentSpec::for_teacher(tp, 4), tp, 1);

    std::vector<Network*> nets = {toy.get(), csrnet.get(), student.get()};
    for (Network* net : nets) {
        const auto base = count_parameters(*net, ParamScope::inference);
        for (int p : {1, 2, 3}) {
            ReviewWrapper wrapped = wrap_with_review(*net, p);
            if (count_parameters(wrapped, ParamScope::inference) != base) {
                detail = "parameter count changed under wrapping";
                return false;
            }
        }
    }
    detail = "toy/csrnet_like/student counts exactly invariant for p in {1,2,3}";
    return true;
}

// --------------------------------------- 7: review recurrence correctness

bool c7_review_recurrence(std::string& detail) {
    auto net = build_teacher(NetworkProfile::toy(), 7);
    Rng rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor feature = oracle::random_tensor({32, 8, 8}, rng);
        const Var m0 = net->decode(constant(feature));
        const Var step = review_step(constant(feature), constant(Tensor({1, 8, 8})), *net);
        if (!bit_equal(m0.value(), step.value())) {
            detail = "zero-map step differs from the plain decode";
            return false;
        }
    }
    ReviewWrapper wrapped = wrap_with_review(*net, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor image = oracle::random_tensor({3, 64, 64}, rng, 0.0, 1.0);
        const Tensor a = wrapped.forward(constant(image)).value();
        const Tensor b = net->forward(constant(image)).value();
        if (!bit_equal(a, b)) {
            detail = "p=0 wrap differs from the unwrapped forward";
            return false;
        }
    }
    detail = "zero-map and p=0 identities bit-exact on 20 random inputs each";
    return true;
}

// -------------------------------------------------- 8: architecture audit

bool c8_shape_audit(std::string& detail) {
    const NetworkProfile teacher_profile = NetworkProfile::csrnet_like();
    const StudentSpec spec = StudentSpec::for_teacher(teacher_profile, 4);
    const std::vector<int> widths = spec.tap_channels();
    if (widths != std::vector<int>{16, 16, 32, 64, 128}) {
        detail = "quarter-width channels are wrong";
        return false;
    }

    auto teacher = build_teacher(teacher_profile, 1);
    auto student = build_student(spec, teacher_profile, 2);
    Rng rng(108);
    const Tensor image = oracle::random_tensor({3, 128, 128}, rng, 0.0, 1.0);
    const auto t = tap_features(*teacher, image);
    const auto s = tap_features(*student, image);
    if (t.size() != s.size()) {
        detail = "tap count mismatch";
        return false;
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k].dim(1) != s[k].dim(1) || t[k].dim(2) != s[k].dim(2)) {
            detail = "tap " + std::to_string(k) + " spatial mismatch";
            return false;
        }
    }

    const double params = static_cast<double>(count_parameters(*student, ParamScope::inference));
    std::ostringstream os;
    os << "widths (16,16,32,64,128), 5 matched taps on 128x128, student params " << params / 1e6 << "M";
    detail = os.str();
    return std::abs(params - 1.49e6) <= 0.20 * 1.49e6;
}

// ------------------------------------------------- 9: end-to-end desk run

bool c9_desk_run(std::string& detail) {
    const Dataset data = synth_scenes(50, 64, 64, 5, 30, 1);

    auto teacher = build_teacher(NetworkProfile::toy(), 1);
    TeacherTrainConfig tc;
    tc.epochs = 200;
    tc.seed = 1;
    const TrainReport teacher_report = train_teacher(*teacher, data, tc);

    DistillPlan plan;
    plan.cpr_denom = 4;
    plan.rounds = 2;
    plan.epochs = 100;
    plan.seed = 1;
    DistillResult distilled = train_distill(plan, data, *teacher);

    const double first = distilled.report.epochs.front().total;
    const double last = distilled.report.epochs.back().total;
    if (!(last < 0.5 * first)) {
        detail = "distill loss did not halve: first " + std::to_string(first) + ", last " + std::to_string(last);
        return false;
    }

    ReviewWrapper wrapped = wrap_with_review(*distilled.student, plan.rounds);
    const EvalResult r = evaluate_model(wrapped, data, plan.sigma, 3);
    if (!std::isfinite(r.mae) || !std::isfinite(r.mse) || !std::isfinite(r.game.at(3))) {
        detail = "metrics are not finite";
        return false;
    }

    // overfit variant: one scene, teacher alone
    const Dataset one = synth_scenes(1, 64, 64, 5, 30, 1);
    auto over = build_teacher(NetworkProfile::toy(), 2);
    TeacherTrainConfig oc;
    oc.epochs = 300;
    oc.seed = 2;
    train_teacher(*over, one, oc);
    const Var pred = over->forward(constant(one.scenes[0].image()));
    const double got = pred.value().sum();
    const double want = static_cast<double>(one.scenes[0].points().size());
    if (std::abs(got - want) > 0.10 * want) {
        detail = "overfit count " + std::to_string(got) + " vs " + std::to_string(want);
        return false;
    }

    std::ostringstream os;
    os << "teacher " << teacher_report.wall_seconds << " s, distill " << distilled.report.wall_seconds
       << " s, loss " << first << " -> " << last << ", mae " << r.mae << ", overfit " << got << "/" << want;
    detail = os.str();
    return true;
}

// ------------------------------------------------------- 10: determinism

bool c10_determinism(std::string& detail) {
    const Dataset data = synth_scenes(5, 32, 32, 1, 5, 9);
    auto teacher = build_teacher(NetworkProfile::toy(), 3);
    TeacherTrainConfig tc;
    tc.epochs = 5;
    train_teacher(*teacher, data, tc);

    DistillPlan plan;
    plan.epochs = 3;
    plan.rounds = 2;
    plan.seed = 4;
    plan.deterministic = true;
    const DistillResult a = train_distill(plan, data, *teacher);
    const DistillResult b = train_distill(plan, data, *teacher);
    if (to_json_lines(a.report) != to_json_lines(b.report)) {
        detail = "per-epoch logs differ between identical runs";
        return false;
    }
    detail = "two runs, byte-identical epoch logs";
    return true;
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "FSP oracle equivalence", c1_fsp_oracle},
        {2, "Intra-PT properties", c2_intra_properties},
        {3, "Gradient checks", c3_gradients},
        {4, "Metric identities", c4_metric_identities},
        {5, "Boosting-ratio spot checks", c5_boosting_ratio},
        {6, "Review wrapper invariance", c6_wrap_invariance},
        {7, "Review recurrence correctness", c7_review_recurrence},
        {8, "Architecture shape audit", c8_shape_audit},
        {9, "End-to-end desk run", c9_desk_run},
        {10, "Determinism", c10_determinism},
    };

    int failures = 0;
    for (auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %2d: %s (%.1f s) — %s\n", ok ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
