#pragma once

#include <cmath>
#include <string>

#include "tsopt/problem.hpp"

namespace tsopt {

/// Two-stage linear toy problem:
///   min_{x in [0,3]} -3x + E[ min_{y >= 0, 0.5x + y <= 5} xi * y ],
/// xi ~ exp(N(0,1)), both decision grids discretized with increment 0.01.
/// The second-stage optimum is y = 0 for every xi > 0, so G(x) = -3x and
/// x* = 3 with G(x*) = -9.
class LinearToyProblem final : public TwoStageProblem {
public:
    static constexpr double kIncrement = 0.01;

    std::string name() const override { return "linear"; }

    std::size_t first_stage_size() const override { return 301; }

    FirstStageDecision first_stage_at(std::size_t i) const override {
        return {{double(i) * kIncrement}, i};
    }

    // y in {0, 0.01, ..., 5 - 0.5x}; counted in integer hundredths.
    std::size_t second_stage_size(const FirstStageDecision& x) const override {
        const std::size_t i = x.index;
        return 501 - (i + 1) / 2;
    }

    SecondStageDecision second_stage_at(const FirstStageDecision&, std::size_t j) const override {
        return {{double(j) * kIncrement}, j};
    }

    std::size_t first_stage_dim() const override { return 1; }
    std::size_t second_stage_dim() const override { return 1; }
    std::size_t scenario_dim() const override { return 1; }

    Scenario sample_scenario(RngStream& rng) const override { return {{rng.lognormal(0.0, 1.0)}}; }

    double first_stage_cost(const FirstStageDecision& x) const override {
        return -3.0 * x.coords[0];
    }

    double response(const FirstStageDecision&, const SecondStageDecision& y,
                    const Scenario& xi) const override {
        return xi.values[0] * y.coords[0];
    }

    double response_by_index(const FirstStageDecision&, std::size_t j,
                             const Scenario& xi) const override {
        return xi.values[0] * double(j) * kIncrement;
    }

    bool is_feasible(const FirstStageDecision& x, const SecondStageDecision& y) const override {
        const double yv = y.coords[0];
        return yv >= -1e-12 && 0.5 * x.coords[0] + yv <= 5.0 + 1e-9;
    }

    std::pair<std::vector<double>, std::vector<double>> first_stage_bounds() const override {
        return {{0.0}, {3.0}};
    }
    std::pair<std::vector<double>, std::vector<double>> second_stage_bounds() const override {
        return {{0.0}, {5.0}};
    }
};

} // namespace tsopt
