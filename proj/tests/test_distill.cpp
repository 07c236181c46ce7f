#include <doctest.h>

#include <cmath>

#include "crowdkd/distill.hpp"
#include "oracles.hpp"

using namespace crowdkd;

TEST_CASE("intra loss: matched features vanish, negated features saturate") {
    Rng rng(31);
    std::vector<Tensor> t;
    t.push_back(oracle::random_tensor({3, 4, 4}, rng, 0.4, 1.6));
    t.push_back(oracle::random_tensor({2, 2, 3}, rng, 0.4, 1.6));
    CHECK(intra_pt_loss(t, t) >= 0.0);
    CHECK(intra_pt_loss(t, t) < 1e-5);

    // single H=2, W=3, C=4 feature with S_hat = -T: every location adds 2
    const Tensor f = oracle::random_tensor({4, 2, 3}, rng, 0.4, 1.6);
    Tensor neg = f;
    for (std::int64_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
    CHECK(intra_pt_loss({f}, {neg}) == doctest::Approx(12.0).epsilon(1e-4));
}

TEST_CASE("intra loss matches the double-loop oracle on random features") {
    Rng rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Tensor> t, s;
        t.push_back(oracle::random_tensor({2, 3, 3}, rng));
        s.push_back(oracle::random_tensor({2, 3, 3}, rng));
        CHECK(intra_pt_loss(t, s) == doctest::Approx(oracle::intra_brute(t, s, 1e-8)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(intra_pt_loss(std::vector<Tensor>{Tensor({1, 2, 2})}, std::vector<Tensor>{}),
                    std::invalid_argument);
}

TEST_CASE("intra loss is nonnegative and vanishes exactly on positively parallel pairs") {
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor t = oracle::random_tensor({3, 3, 2}, rng, 0.1, 2.0);
        const double c = rng.uniform(0.2, 5.0);
        Tensor s = t;
        for (std::int64_t i = 0; i < s.size(); ++i) s[i] *= c;
        const double parallel = intra_pt_loss({t}, {s});
        CHECK(parallel >= 0.0);
        CHECK(parallel < 1e-5);

        const Tensor u = oracle::random_tensor({3, 3, 2}, rng);
        CHECK(intra_pt_loss({t}, {u}) >= 0.0);
    }
}

TEST_CASE("cosine similarity is scale invariant for positive scalings") {
    Rng rng(34);
    const Tensor t = oracle::random_tensor({4, 3, 3}, rng, 0.2, 1.2);
    const Tensor s = oracle::random_tensor({4, 3, 3}, rng, 0.2, 1.2);
    const Tensor base = cosine_similarity_map(t, s);
    for (double c : {0.5, 3.0, 117.0}) {
        Tensor sc = s;
        for (std::int64_t i = 0; i < sc.size(); ++i) sc[i] *= c;
        const Tensor scaled = cosine_similarity_map(t, sc);
        for (std::int64_t i = 0; i < base.size(); ++i) CHECK(std::abs(scaled[i] - base[i]) < 1e-6);
    }
}

TEST_CASE("as-written similarity variant divides by the teacher norm only") {
    const Tensor t({2, 1, 1}, {2.0, 0.0});
    const Tensor s({2, 1, 1}, {4.0, 0.0});
    // dot = 8, |t|^2 = 4 -> 2.0 (not a cosine)
    CHECK(cosine_similarity_map(t, s, 1e-8, Similarity::teacher_norm)[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(cosine_similarity_map(t, s, 1e-8, Similarity::cosine)[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fsp matrix basics") {
    const Tensor ones = Tensor::full({1, 3, 5}, 1.0);
    CHECK(fsp_matrix(ones, ones).values.item() == doctest::Approx(1.0));

    const Tensor f1({1, 1, 1}, {2.0});
    const Tensor f2({1, 1, 1}, {3.0});
    CHECK(fsp_matrix(f1, f2).values.item() == doctest::Approx(6.0));
}

TEST_CASE("fsp matches the triple-loop oracle; transpose symmetry is exact") {
    Rng rng(35);
    const Tensor f1 = oracle::random_tensor({2, 3, 4}, rng);
    const Tensor f2 = oracle::random_tensor({3, 3, 4}, rng);
    const FSPMatrix m = fsp_matrix(f1, f2);
    CHECK(m.values.shape() == std::vector<int>{2, 3});
    const Tensor want = oracle::fsp_brute(f1, f2);
    for (std::int64_t i = 0; i < want.size(); ++i) CHECK(std::abs(m.values[i] - want[i]) < 1e-9);

    const FSPMatrix mt = fsp_matrix(f2, f1);
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 3; ++q) {
            CHECK(m.values.at(p, q) == mt.values.at(q, p));
        }
    }
}

TEST_CASE("fsp is bilinear in each argument") {
    Rng rng(36);
    const Tensor f1 = oracle::random_tensor({2, 2, 3}, rng);
    const Tensor f2 = oracle::random_tensor({4, 2, 3}, rng);
    const double a = 2.75;
    Tensor f1s = f1;
    for (std::int64_t i = 0; i < f1s.size(); ++i) f1s[i] *= a;
    const Tensor lhs = fsp_matrix(f1s, f2).values;
    const Tensor rhs = fsp_matrix(f1, f2).values;
    for (std::int64_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - a * rhs[i]) < 1e-9);
}

TEST_CASE("resize_feature: identity, constants, and the closed-form ramp") {
    Rng rng(37);
    const Tensor f = oracle::random_tensor({2, 4, 4}, rng);
    const Tensor same = resize_feature(f, 4, 4);
    for (std::int64_t i = 0; i < f.size(); ++i) CHECK(same[i] == f[i]);

    const Tensor c = Tensor::full({3, 5, 5}, -0.75);
    const Tensor cr = resize_feature(c, 3, 9);
    for (std::int64_t i = 0; i < cr.size(); ++i) CHECK(cr[i] == doctest::Approx(-0.75));

    Tensor ramp({1, 4, 4});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) ramp.at(0, y, x) = y * 4 + x;
    }
    const Tensor down = resize_feature(ramp, 2, 2);
    const Tensor want = oracle::bilinear_brute(ramp, 2, 2);
    for (std::int64_t i = 0; i < down.size(); ++i) CHECK(down[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("inter loss: identical sets vanish; single features have no pairs") {
    Rng rng(38);
    std::vector<Tensor> t;
    t.push_back(oracle::random_tensor({2, 4, 4}, rng));
    t.push_back(oracle::random_tensor({3, 2, 2}, rng));
    CHECK(inter_rt_loss(t, t) == doctest::Approx(0.0).epsilon(1e-6));

    std::vector<Tensor> single = {oracle::random_tensor({2, 2, 2}, rng)};
    CHECK(inter_rt_loss(single, single) == 0.0);
}

TEST_CASE("inter loss matches the composed fsp/frobenius oracle") {
    Rng rng(39);
    std::vector<Tensor> t, s;
    for (int k = 0; k < 2; ++k) {
        t.push_back(oracle::random_tensor({2, 2, 2}, rng));
        s.push_back(oracle::random_tensor({2, 2, 2}, rng));
    }
    // same resolution, so resizing is the identity and the oracle composes directly
    const Tensor ft = oracle::fsp_brute(t[0], t[1]);
    const Tensor fs = oracle::fsp_brute(s[0], s[1]);
    double want = 0.0;
    for (std::int64_t i = 0; i < ft.size(); ++i) want += (ft[i] - fs[i]) * (ft[i] - fs[i]);
    CHECK(inter_rt_loss(t, s) == doctest::Approx(want).epsilon(1e-10));

    // multi-resolution: compose the oracle with the bilinear oracle
    std::vector<Tensor> t2 = {oracle::random_tensor({2, 4, 4}, rng), oracle::random_tensor({3, 2, 2}, rng)};
    std::vector<Tensor> s2 = {oracle::random_tensor({2, 4, 4}, rng), oracle::random_tensor({3, 2, 2}, rng)};
    const Tensor rt0 = oracle::bilinear_brute(t2[0], 2, 2);
    const Tensor rs0 = oracle::bilinear_brute(s2[0], 2, 2);
    const Tensor ft2 = oracle::fsp_brute(rt0, t2[1]);
    const Tensor fs2 = oracle::fsp_brute(rs0, s2[1]);
    double want2 = 0.0;
    for (std::int64_t i = 0; i < ft2.size(); ++i) want2 += (ft2[i] - fs2[i]) * (ft2[i] - fs2[i]);
    CHECK(inter_rt_loss(t2, s2) == doctest::Approx(want2).epsilon(1e-10));

    CHECK_THROWS_AS(inter_rt_loss(t2, std::vector<Tensor>{t2[0]}), std::invalid_argument);
}

TEST_CASE("loss gradients with respect to the student side match finite differences") {
    Rng rng(40);
    const double step = 1e-4;

    SUBCASE("intra") {
        const Tensor t = oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.5);
        const Tensor s0 = oracle::random_tensor({2, 2, 2}, rng, 0.3, 1.5);
        Var leaf(s0, true);
        backward(intra_pt_loss({constant(t)}, {leaf}));
        const Tensor numeric = oracle::finite_difference(
            [&](const Tensor& probe) { return intra_pt_loss({t}, {probe}); }, s0, step);
        CHECK(oracle::max_rel_err(leaf.grad(), numeric) < 1e-3);
    }

    SUBCASE("inter") {
        std::vector<Tensor> t = {oracle::random_tensor({2, 2, 2}, rng), oracle::random_tensor({2, 2, 2}, rng)};
        const Tensor s0 = oracle::random_tensor({2, 2, 2}, rng);
        const Tensor s1 = oracle::random_tensor({2, 2, 2}, rng);
        Var leaf(s0, true);
        backward(inter_rt_loss({constant(t[0]), constant(t[1])}, {leaf, constant(s1)}));
        const Tensor numeric = oracle::finite_difference(
            [&](const Tensor& probe) { return inter_rt_loss(t, {probe, s1}); }, s0, step);
        CHECK(oracle::max_rel_err(leaf.grad(), numeric) < 1e-3);
    }
}
