#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "tsopt/design.hpp"
#include "tsopt/problems/registry.hpp"
#include "tsopt/rng.hpp"

using namespace tsopt;

TEST_CASE("rng streams are reproducible and stream-separated") {
    RngStream a(42, 7), b(42, 7), c(42, 8);
    for (int i = 0; i < 100; ++i) {
        const double u = a.uniform01();
        REQUIRE(u == b.uniform01());
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
    // different stream ids should diverge immediately
    RngStream a2(42, 7);
    bool any_diff = false;
    for (int i = 0; i < 16; ++i) any_diff |= (a2.next_u64() != c.next_u64());
    REQUIRE(any_diff);
}

TEST_CASE("normal quantile inverts the CDF") {
    for (double p : {1e-6, 0.01, 0.2, 0.5, 0.8, 0.99, 1.0 - 1e-6}) {
        REQUIRE(normal_cdf(normal_quantile(p)) == Catch::Approx(p).margin(1e-12));
    }
    REQUIRE(normal_quantile(0.5) == 0.0);
}

TEST_CASE("categorical_sample handles point mass, LLN, and degenerate weights") {
    RngStream rng(1, 0);
    auto idx = categorical_sample({1.0, 0.0, 0.0}, 5, rng);
    for (auto i : idx) REQUIRE(i == 0);

    auto many = categorical_sample({0.25, 0.25, 0.25, 0.25}, 100000, rng);
    std::array<int, 4> counts{};
    for (auto i : many) counts[i]++;
    for (int k = 0; k < 4; ++k)
        REQUIRE(std::abs(counts[k] / 1e5 - 0.25) < 0.01);

    REQUIRE_THROWS_AS(categorical_sample({0.0, 0.0}, 3, rng), DegenerateWeights);
    REQUIRE_THROWS_AS(categorical_sample({-1.0, 2.0}, 3, rng), DegenerateWeights);
}

TEST_CASE("lhd degenerate and error cases") {
    RngStream rng(3, 0);
    auto d = maximin_lhd({301}, 1, rng);
    REQUIRE(d.size() == 1);
    REQUIRE(d.points[0][0] < 301);

    REQUIRE_THROWS_AS(maximin_lhd({3, 2}, 7, rng), SizeTooLarge);
}

TEST_CASE("lhd stratifies each axis once per stratum") {
    RngStream rng(11, 0);
    auto d = maximin_lhd({10, 10}, 10, rng);
    for (std::size_t axis = 0; axis < 2; ++axis) {
        std::set<std::size_t> seen;
        for (const auto& p : d.points) seen.insert(p[axis]);
        REQUIRE(seen.size() == 10); // every value used exactly once when m == n
    }

    // m = 301, n = 10: exactly one point per consecutive index block
    auto d2 = maximin_lhd({301}, 10, rng);
    std::set<std::size_t> strata;
    for (const auto& p : d2.points) {
        bool placed = false;
        for (std::size_t s = 0; s < 10; ++s) {
            if (p[0] >= s * 301 / 10 && p[0] < (s + 1) * 301 / 10) {
                strata.insert(s);
                placed = true;
                break;
            }
        }
        REQUIRE(placed);
    }
    REQUIRE(strata.size() == 10);
}

TEST_CASE("maximin beats a plain random lhd on average") {
    double plain_sum = 0.0, maximin_sum = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
        RngStream r1(seed, 0), r2(seed, 0);
        auto plain = random_lhd({10, 10}, 10, r1);
        auto opt = maximin_lhd({10, 10}, 10, r2, 100);
        plain_sum += detail::lhd_min_pairwise_distance(plain, {10, 10});
        maximin_sum += detail::lhd_min_pairwise_distance(opt, {10, 10});
    }
    REQUIRE(maximin_sum >= plain_sum);
}

TEST_CASE("lhd is reproducible for equal streams") {
    RngStream r1(99, 3), r2(99, 3);
    auto a = maximin_lhd({50, 20, 20}, 15, r1);
    auto b = maximin_lhd({50, 20, 20}, 15, r2);
    REQUIRE(a.points == b.points);
}

TEST_CASE("scenario sampling matches the problem distributions") {
    auto linear = make_problem("linear");
    RngStream rng(5, 1);
    auto scen = sample_scenarios(*linear, 3, rng);
    REQUIRE(scen.size() == 3);
    for (const auto& s : scen) {
        REQUIRE(s.values.size() == 1);
        REQUIRE(s.values[0] > 0.0);
    }

    auto sc = make_problem("supplychain", {{"sigma", 20.0}});
    auto one = sample_scenarios(*sc, 1, rng);
    REQUIRE(one.size() == 1);
    REQUIRE(one[0].values.size() == 4);
    for (double d : one[0].values) REQUIRE(d >= 0.0);

    REQUIRE(sample_scenarios(*linear, 0, rng).empty());

    // reproducibility across equal streams
    RngStream s1(7, 2), s2(7, 2);
    auto a = sample_scenarios(*sc, 5, s1);
    auto b = sample_scenarios(*sc, 5, s2);
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(a[i].values == b[i].values);
}
