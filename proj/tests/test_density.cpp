#include <doctest.h>

#include <cmath>

#include "crowdkd/density.hpp"
#include "oracles.hpp"

using namespace crowdkd;

TEST_CASE("rasterize: empty point list gives the all-zero map") {
    const DensityMap m = rasterize_density({}, 32, 32, 2.0, 1);
    CHECK(m.values.shape() == std::vector<int>{32, 32});
    CHECK(count(m) == 0.0);
}

TEST_CASE("rasterize: one interior point carries unit mass") {
    const DensityMap m = rasterize_density({{16, 16}}, 32, 32, 2.0, 1);
    CHECK(count(m) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("rasterize: boundary points match the brute-force oracle") {
    const std::vector<Point> pts = {{1, 1}, {30, 30}};
    const DensityMap m = rasterize_density(pts, 32, 32, 3.0, 1);
    const Tensor want = oracle::rasterize_brute(pts, 32, 32, 3.0);
    CHECK(count(m) == doctest::Approx(want.sum()).epsilon(1e-12));
    for (std::int64_t i = 0; i < want.size(); ++i) {
        CHECK(std::abs(m.values[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("count is the plain integral") {
    DensityMap zero{Tensor({8, 8}), 1};
    CHECK(count(zero) == 0.0);
    DensityMap single{Tensor({8, 8}), 1};
    single.values.at(3, 5) = 3.5;
    CHECK(count(single) == 3.5);

    Rng rng(12);
    std::vector<Point> pts;
    for (int i = 0; i < 5; ++i) pts.push_back({rng.uniform(10, 22), rng.uniform(10, 22)});
    const DensityMap m = rasterize_density(pts, 32, 32, 2.0, 1);
    const Tensor want = oracle::rasterize_brute(pts, 32, 32, 2.0);
    CHECK(count(m) == doctest::Approx(want.sum()).epsilon(1e-9));
    CHECK(count(m) == doctest::Approx(5.0).epsilon(1e-3));
}

TEST_CASE("mass conservation for interior point sets") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Point> pts;
        const int n = rng.uniform_int(1, 20);
        for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(17, 47), rng.uniform(17, 47)});
        const DensityMap m = rasterize_density(pts, 64, 64, 4.0, 1);
        CHECK(std::abs(count(m) - n) <= 1e-3 * n + 1e-6);
        CHECK(m.values.min() >= 0.0);
    }
}

TEST_CASE("block-sum pooling conserves mass exactly") {
    Rng rng(5);
    std::vector<Point> pts;
    for (int i = 0; i < 12; ++i) pts.push_back({rng.uniform(0, 64), rng.uniform(0, 64)});
    const DensityMap full = rasterize_density(pts, 64, 64, 4.0, 1);
    for (int scale : {2, 4, 8}) {
        const DensityMap pooled = rasterize_density(pts, 64, 64, 4.0, scale);
        CHECK(pooled.values.shape() == std::vector<int>{64 / scale, 64 / scale});
        CHECK(std::abs(count(pooled) - count(full)) < 1e-9);
    }
}

TEST_CASE("rasterize input validation") {
    CHECK_THROWS_AS(rasterize_density({}, 32, 32, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(rasterize_density({}, 32, 32, -1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(rasterize_density({}, 32, 32, 2.0, 5), std::invalid_argument);
    CHECK_THROWS_AS(rasterize_density({{40, 10}}, 32, 32, 2.0, 1), std::invalid_argument);
}
