#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsopt/errors.hpp"
#include "tsopt/rng.hpp"

namespace tsopt {

/// First-stage ("here and now") decision: a point of the finite feasible set.
struct FirstStageDecision {
    std::vector<double> coords;
    std::size_t index = 0;
};

/// Second-stage ("wait and see") decision, enumerated within Y(x) for a given x.
struct SecondStageDecision {
    std::vector<double> coords;
    std::size_t index = 0;
};

/// One realization of the random inputs.
struct Scenario {
    std::vector<double> values;
};

/// Abstract two-stage problem with finite decision sets and a black-box
/// second-stage response. Implementations must be pure and reentrant:
/// response() is deterministic given (x, y, xi) and holds no mutable state.
class TwoStageProblem {
public:
    virtual ~TwoStageProblem() = default;

    virtual std::string name() const = 0;

    virtual std::size_t first_stage_size() const = 0;
    virtual FirstStageDecision first_stage_at(std::size_t i) const = 0;

    /// |Y(x)|, always >= 1 (relatively complete recourse).
    virtual std::size_t second_stage_size(const FirstStageDecision& x) const = 0;
    virtual SecondStageDecision second_stage_at(const FirstStageDecision& x,
                                                std::size_t j) const = 0;

    virtual std::size_t first_stage_dim() const = 0;
    virtual std::size_t second_stage_dim() const = 0;
    virtual std::size_t scenario_dim() const = 0;

    virtual Scenario sample_scenario(RngStream& rng) const = 0;

    /// The deterministic first-stage cost c0(x).
    virtual double first_stage_cost(const FirstStageDecision& x) const = 0;

    /// The black-box response q(x, y, xi). Deterministic in its arguments.
    virtual double response(const FirstStageDecision& x, const SecondStageDecision& y,
                            const Scenario& xi) const = 0;

    /// response() for the j-th element of Y(x). Overridable to skip the
    /// decision construction in exhaustive sweeps.
    virtual double response_by_index(const FirstStageDecision& x, std::size_t j,
                                     const Scenario& xi) const {
        return response(x, second_stage_at(x, j), xi);
    }

    /// Constraint check for y in Y(x); O(1), no enumeration.
    virtual bool is_feasible(const FirstStageDecision& x,
                             const SecondStageDecision& y) const = 0;

    /// Per-axis (lo, hi) bounds of the first-stage coordinates.
    virtual std::pair<std::vector<double>, std::vector<double>> first_stage_bounds() const = 0;
    /// Per-axis (lo, hi) bounds of the second-stage coordinates over all x.
    virtual std::pair<std::vector<double>, std::vector<double>> second_stage_bounds() const = 0;
};

/// Counts every simulation charged against the budget C. The single
/// synchronization point for concurrent sub-searches.
class BudgetMeter {
public:
    explicit BudgetMeter(std::int64_t budget) : budget_(budget) {}

    /// Atomically claim one evaluation. Returns false when the budget is gone.
    bool try_spend() {
        std::int64_t cur = spent_.load(std::memory_order_relaxed);
        while (cur < budget_) {
            if (spent_.compare_exchange_weak(cur, cur + 1, std::memory_order_relaxed))
                return true;
        }
        return false;
    }

    std::int64_t budget() const { return budget_; }
    std::int64_t spent() const { return spent_.load(std::memory_order_relaxed); }
    bool exhausted() const { return spent() >= budget_; }

private:
    std::int64_t budget_;
    std::atomic<std::int64_t> spent_{0};
};

/// Budget-metered simulation call. Returns nullopt (and leaves the meter
/// untouched) once the budget is exhausted.
inline std::optional<double> metered_response(BudgetMeter& meter, const TwoStageProblem& problem,
                                              const FirstStageDecision& x,
                                              const SecondStageDecision& y, const Scenario& xi) {
    if (!problem.is_feasible(x, y))
        throw InfeasibleDecision("metered_response: y not in Y(x) for problem " + problem.name());
    if (!meter.try_spend()) return std::nullopt;
    return problem.response(x, y, xi);
}

/// Complete, duplicate-free enumeration of Y(x) in the problem's canonical order.
inline std::vector<SecondStageDecision> enumerate_feasible_pairs(const TwoStageProblem& problem,
                                                                 const FirstStageDecision& x) {
    const std::size_t n = problem.second_stage_size(x);
    std::vector<SecondStageDecision> out;
    out.reserve(n);
    for (std::size_t j = 0; j < n; ++j) out.push_back(problem.second_stage_at(x, j));
    return out;
}

/// n i.i.d. scenarios from the problem's input distribution.
inline std::vector<Scenario> sample_scenarios(const TwoStageProblem& problem, std::size_t n,
                                              RngStream& rng) {
    std::vector<Scenario> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(problem.sample_scenario(rng));
    return out;
}

} // namespace tsopt
