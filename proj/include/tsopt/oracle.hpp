#pragma once

#include <limits>
#include <vector>

#include "tsopt/problem.hpp"

namespace tsopt {

/// Exact second-stage optimum by full enumeration of Y(x); ties broken by
/// enumeration order. Never charged against a budget meter.
inline std::pair<SecondStageDecision, double> brute_force_second_stage(
    const TwoStageProblem& problem, const FirstStageDecision& x, const Scenario& xi) {
    const std::size_t n = problem.second_stage_size(x);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double q = problem.response_by_index(x, j, xi);
        if (q < best) {
            best = q;
            best_j = j;
        }
    }
    return {problem.second_stage_at(x, best_j), best};
}

/// Reporting oracle for the true objective G(x): first-stage cost plus the
/// SAA mean of exhaustively solved second-stage problems over N_B fresh
/// scenarios.
inline double evaluate_true_objective(const TwoStageProblem& problem, const FirstStageDecision& x,
                                      std::size_t n_scenarios, RngStream& rng) {
    double acc = 0.0;
    for (std::size_t b = 0; b < n_scenarios; ++b) {
        const Scenario xi = problem.sample_scenario(rng);
        acc += brute_force_second_stage(problem, x, xi).second;
    }
    return problem.first_stage_cost(x) + acc / double(n_scenarios);
}

/// The side-experiment surface: G(x) for every x in the first-stage set,
/// all evaluated on one common batch of N_B scenarios.
inline std::vector<double> evaluate_true_surface(const TwoStageProblem& problem,
                                                 std::size_t n_scenarios, RngStream& rng) {
    const std::size_t nx = problem.first_stage_size();
    std::vector<double> surface(nx, 0.0);
    std::vector<Scenario> scenarios = sample_scenarios(problem, n_scenarios, rng);
    for (std::size_t i = 0; i < nx; ++i) {
        const FirstStageDecision x = problem.first_stage_at(i);
        double acc = 0.0;
        for (const Scenario& xi : scenarios)
            acc += brute_force_second_stage(problem, x, xi).second;
        surface[i] = problem.first_stage_cost(x) + acc / double(n_scenarios);
    }
    return surface;
}

} // namespace tsopt
