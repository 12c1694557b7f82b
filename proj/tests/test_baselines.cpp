#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tsopt/baselines.hpp"
#include "tsopt/oracle.hpp"
#include "tsopt/problems/registry.hpp"

using namespace tsopt;

TEST_CASE("random SAA with full second-stage coverage matches the exhaustive optimum") {
    auto linear = make_problem("linear");
    // C / (N1 N2) = 501 >= |Y(x)| for every x, so each scenario is solved exactly
    RandomSaaConfig cfg{1, 1};
    BudgetMeter meter(501);
    RngStream rng(7, 0);
    const RunRecord rec = run_random_saa(*linear, cfg, meter, rng);
    REQUIRE(rec.trace.size() == 1);
    // exact per-scenario optimum is 0 at y = 0, so Gbar = -3x
    REQUIRE(rec.gbar_star == Catch::Approx(-3.0 * rec.xstar.coords[0]));
    REQUIRE(meter.spent() <= 501);
}

TEST_CASE("random SAA respects allocation preconditions and budget parity") {
    auto linear = make_problem("linear");
    RandomSaaConfig cfg{10, 10};
    BudgetMeter small(5);
    RngStream rng(8, 0);
    REQUIRE_THROWS_AS(run_random_saa(*linear, cfg, small, rng), AllocationInfeasible);

    BudgetMeter meter(600);
    const RunRecord rec = run_random_saa(*linear, cfg, meter, rng);
    REQUIRE(meter.spent() <= 600);
    REQUIRE(rec.spent == meter.spent());
    REQUIRE(std::isfinite(rec.gbar_star));

    // N1 = 1 degenerate case returns that single candidate
    BudgetMeter one(40);
    RandomSaaConfig single{1, 4};
    RngStream rng2(9, 0);
    const RunRecord rec1 = run_random_saa(*linear, single, one, rng2);
    REQUIRE(rec1.trace.size() == 1);
    REQUIRE(rec1.xstar.index == rec1.trace[0].xhat.index);
}

TEST_CASE("random SAA aggregate is the arithmetic mean of kept incumbents") {
    // with N2 scenarios and exact coverage, Gbar = c0 + mean of per-scenario bests
    auto linear = make_problem("linear");
    RandomSaaConfig cfg{1, 5};
    BudgetMeter meter(5 * 501);
    RngStream rng(10, 0);
    const RunRecord rec = run_random_saa(*linear, cfg, meter, rng);
    REQUIRE(rec.gbar_star == Catch::Approx(-3.0 * rec.xstar.coords[0]));
}

TEST_CASE("dlh-gps runs within budget and reports the joint-mean argmin") {
    auto linear = make_problem("linear");
    DlhGpsConfig cfg;
    cfg.m = 10;
    cfg.r = 10;
    cfg.sigma_gps = 5.0;
    BudgetMeter meter(600);
    RngStream rng(11, 0);
    const RunRecord rec = run_dlh_gps(*linear, cfg, meter, rng);
    REQUIRE(rec.spent <= 600);
    REQUIRE(!rec.trace.empty());
    REQUIRE(std::isfinite(rec.gbar_star));
    REQUIRE(rec.xstar.coords[0] >= 0.0);
    REQUIRE(rec.xstar.coords[0] <= 3.0);
    // iterations are recorded in order
    for (std::size_t i = 1; i < rec.trace.size(); ++i)
        REQUIRE(rec.trace[i].iteration == rec.trace[i - 1].iteration + 1);
}

TEST_CASE("dlh-gps degenerates to SAA at one random point when r consumes the budget") {
    auto linear = make_problem("linear");
    DlhGpsConfig cfg;
    cfg.m = 1;
    cfg.r = 50;
    BudgetMeter meter(50);
    RngStream rng(12, 0);
    const RunRecord rec = run_dlh_gps(*linear, cfg, meter, rng);
    REQUIRE(meter.spent() == 50);
    REQUIRE(!rec.trace.empty());
    // a single joint point was visited; its mean is the report
    REQUIRE(rec.trace.size() == 1);
}

TEST_CASE("dlh-gps config validation") {
    auto linear = make_problem("linear");
    DlhGpsConfig bad;
    bad.sigma_gps = 0.0;
    BudgetMeter meter(100);
    RngStream rng(13, 0);
    REQUIRE_THROWS_AS(run_dlh_gps(*linear, bad, meter, rng), ConfigError);
}
