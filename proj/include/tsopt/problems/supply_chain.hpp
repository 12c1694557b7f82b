#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "tsopt/problem.hpp"

namespace tsopt {

/// Shared parameters of the supply-chain benchmarks.
struct SupplyChainParams {
    double sigma = 20.0;       // weekly demand SD; 0 gives a deterministic test mode
    double demand_mean = 150.0;
    double price_soy = 10.0;   // P_s, first-stage unit cost
    double price_raw = 5.0;    // P_r, chemical order unit cost
    double price_hold = 5.0;   // P_e, holding cost per unit left
    double price_sub = 100.0;  // P_c, subcontract penalty per unmet unit
    int initial_inventory = 100;
    double x_max = 5000.0;
    double x_step = 20.0;
    static constexpr int weeks = 4;
    static constexpr int days_per_week = 5;
};

/// The ten admissible (s, S) review pairs.
inline const std::vector<std::pair<int, int>>& ss_policy_pairs() {
    static const std::vector<std::pair<int, int>> pairs = {
        {100, 200}, {100, 300}, {100, 400}, {100, 500}, {200, 300},
        {200, 400}, {200, 500}, {300, 400}, {300, 500}, {400, 500}};
    return pairs;
}

namespace detail {

/// Chemical inventory over `days` days at consumption rate u under a daily
/// (s, S) review with zero lead time: consume first, then order up to S if
/// the level fell to s or below. Returns (units ordered, ending inventory).
inline std::pair<int, int> run_chemical_policy(int u, int s, int S, int inventory, int days) {
    int ordered = 0;
    for (int day = 0; day < days; ++day) {
        inventory = std::max(inventory - u, 0);
        if (inventory <= s) {
            ordered += S - inventory;
            inventory = S;
        }
    }
    return {ordered, inventory};
}

inline std::size_t find_pair_index(double s, double S) {
    const auto& pairs = ss_policy_pairs();
    const int si = int(std::llround(s));
    const int Si = int(std::llround(S));
    for (std::size_t p = 0; p < pairs.size(); ++p)
        if (pairs[p].first == si && pairs[p].second == Si) return p;
    throw InfeasibleDecision("supplychain: (s, S) not among the listed review pairs");
}

/// Weekly product balance: production 5u per week against demand d_i, with
/// carry-over inventory h+ and subcontracted shortfall h-.
inline double product_cost(const double* demands, int weeks, const int* weekly_u,
                           double price_sub, double price_hold) {
    double carry = 0.0;
    double cost = 0.0;
    for (int i = 0; i < weeks; ++i) {
        const double produced = 5.0 * weekly_u[i];
        const double shortfall = std::max(demands[i] - carry - produced, 0.0);
        carry = std::max(carry + produced - demands[i], 0.0);
        cost += price_sub * shortfall + price_hold * carry;
    }
    return cost;
}

} // namespace detail

/// Supply-chain benchmark. First stage: soy order x on {0, 20, ..., 5000}.
/// Second stage y = (u, s, S): daily production rate u <= x/20 and a daily
/// (s, S) review policy for the fast-delivery chemical, chosen from the ten
/// listed pairs. Scenario: four weekly demands d_i ~ max(0, N(mean, sigma^2)).
class SupplyChainProblem final : public TwoStageProblem {
public:
    explicit SupplyChainProblem(SupplyChainParams params = {}) : params_(params) {
        grid_size_ = static_cast<std::size_t>(std::llround(params_.x_max / params_.x_step)) + 1;
        u_global_max_ = static_cast<int>(std::floor(params_.x_max / 20.0 + 1e-9));
        build_chemical_table();
    }

    const SupplyChainParams& params() const { return params_; }

    std::string name() const override { return "supplychain"; }

    std::size_t first_stage_size() const override { return grid_size_; }

    FirstStageDecision first_stage_at(std::size_t i) const override {
        return {{double(i) * params_.x_step}, i};
    }

    std::size_t second_stage_size(const FirstStageDecision& x) const override {
        return std::size_t(u_max(x) + 1) * ss_policy_pairs().size();
    }

    SecondStageDecision second_stage_at(const FirstStageDecision&, std::size_t j) const override {
        const std::size_t npairs = ss_policy_pairs().size();
        const int u = int(j / npairs);
        const auto& p = ss_policy_pairs()[j % npairs];
        return {{double(u), double(p.first), double(p.second)}, j};
    }

    std::size_t first_stage_dim() const override { return 1; }
    std::size_t second_stage_dim() const override { return 3; }
    std::size_t scenario_dim() const override { return SupplyChainParams::weeks; }

    Scenario sample_scenario(RngStream& rng) const override {
        Scenario xi;
        xi.values.resize(SupplyChainParams::weeks);
        for (double& d : xi.values)
            d = std::max(0.0, rng.normal(params_.demand_mean, params_.sigma));
        return xi;
    }

    double first_stage_cost(const FirstStageDecision& x) const override {
        return params_.price_soy * x.coords[0];
    }

    double response(const FirstStageDecision&, const SecondStageDecision& y,
                    const Scenario& xi) const override {
        const int u = int(std::llround(y.coords[0]));
        const std::size_t pair = detail::find_pair_index(y.coords[1], y.coords[2]);
        const int weekly_u[SupplyChainParams::weeks] = {u, u, u, u};
        return chemical_cost_[std::size_t(u) * ss_policy_pairs().size() + pair] +
               detail::product_cost(xi.values.data(), SupplyChainParams::weeks, weekly_u,
                                    params_.price_sub, params_.price_hold);
    }

    double response_by_index(const FirstStageDecision&, std::size_t j,
                             const Scenario& xi) const override {
        const int u = int(j / ss_policy_pairs().size());
        const int weekly_u[SupplyChainParams::weeks] = {u, u, u, u};
        return chemical_cost_[j] + detail::product_cost(xi.values.data(),
                                                        SupplyChainParams::weeks, weekly_u,
                                                        params_.price_sub, params_.price_hold);
    }

    bool is_feasible(const FirstStageDecision& x, const SecondStageDecision& y) const override {
        const int u = int(std::llround(y.coords[0]));
        if (u < 0 || u > u_max(x)) return false;
        const int s = int(std::llround(y.coords[1]));
        const int S = int(std::llround(y.coords[2]));
        for (const auto& p : ss_policy_pairs())
            if (p.first == s && p.second == S) return true;
        return false;
    }

    std::pair<std::vector<double>, std::vector<double>> first_stage_bounds() const override {
        return {{0.0}, {params_.x_max}};
    }
    std::pair<std::vector<double>, std::vector<double>> second_stage_bounds() const override {
        return {{0.0, 100.0, 200.0}, {double(u_global_max_), 400.0, 500.0}};
    }

private:
    int u_max(const FirstStageDecision& x) const {
        return static_cast<int>(std::floor(x.coords[0] / 20.0 + 1e-9));
    }


    // The chemical trajectory depends only on (u, s, S); tabulated once so
    // the response stays pure and cheap under exhaustive oracles.
    void build_chemical_table() {
        const auto& pairs = ss_policy_pairs();
        chemical_cost_.resize(std::size_t(u_global_max_ + 1) * pairs.size());
        const int days = SupplyChainParams::weeks * SupplyChainParams::days_per_week;
        for (int u = 0; u <= u_global_max_; ++u) {
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                const auto [ordered, end_inv] = detail::run_chemical_policy(
                    u, pairs[p].first, pairs[p].second, params_.initial_inventory, days);
                (void)end_inv;
                chemical_cost_[std::size_t(u) * pairs.size() + p] = params_.price_raw * ordered;
            }
        }
    }

    SupplyChainParams params_;
    std::size_t grid_size_ = 0;
    int u_global_max_ = 0;
    std::vector<double> chemical_cost_;
};

/// Extended supply-chain variant: y = (u1, u2, s1, S1, s2, S2) with
/// 0 <= u1 + u2 <= x/10; (u1, s1, S1) governs weeks 1-2 and (u2, s2, S2)
/// weeks 3-4, with the chemical inventory carried across the boundary.
class ExtendedSupplyChainProblem final : public TwoStageProblem {
public:
    explicit ExtendedSupplyChainProblem(SupplyChainParams params = {}) : params_(params) {
        grid_size_ = static_cast<std::size_t>(std::llround(params_.x_max / params_.x_step)) + 1;
        u_global_max_ = static_cast<int>(std::floor(params_.x_max / 10.0 + 1e-9));
        build_segment_tables();
    }

    const SupplyChainParams& params() const { return params_; }

    std::string name() const override { return "supplychain-ext"; }

    std::size_t first_stage_size() const override { return grid_size_; }

    FirstStageDecision first_stage_at(std::size_t i) const override {
        return {{double(i) * params_.x_step}, i};
    }

    std::size_t second_stage_size(const FirstStageDecision& x) const override {
        const std::size_t U = std::size_t(u_sum_max(x));
        const std::size_t ncombo = (U + 1) * (U + 2) / 2;
        const std::size_t npairs = ss_policy_pairs().size();
        return ncombo * npairs * npairs;
    }

    SecondStageDecision second_stage_at(const FirstStageDecision& x, std::size_t j) const override {
        const std::size_t npairs = ss_policy_pairs().size();
        const std::size_t pp = j % (npairs * npairs);
        const std::size_t combo = j / (npairs * npairs);
        const auto [u1, u2] = decode_u_combo(combo, u_sum_max(x));
        const auto& p1 = ss_policy_pairs()[pp / npairs];
        const auto& p2 = ss_policy_pairs()[pp % npairs];
        return {{double(u1), double(u2), double(p1.first), double(p1.second), double(p2.first),
                 double(p2.second)},
                j};
    }

    std::size_t first_stage_dim() const override { return 1; }
    std::size_t second_stage_dim() const override { return 6; }
    std::size_t scenario_dim() const override { return SupplyChainParams::weeks; }

    Scenario sample_scenario(RngStream& rng) const override {
        Scenario xi;
        xi.values.resize(SupplyChainParams::weeks);
        for (double& d : xi.values)
            d = std::max(0.0, rng.normal(params_.demand_mean, params_.sigma));
        return xi;
    }

    double first_stage_cost(const FirstStageDecision& x) const override {
        return params_.price_soy * x.coords[0];
    }

    double response(const FirstStageDecision&, const SecondStageDecision& y,
                    const Scenario& xi) const override {
        const int u1 = int(std::llround(y.coords[0]));
        const int u2 = int(std::llround(y.coords[1]));
        const std::size_t npairs = ss_policy_pairs().size();
        const std::size_t p1 = detail::find_pair_index(y.coords[2], y.coords[3]);
        const std::size_t p2 = detail::find_pair_index(y.coords[4], y.coords[5]);

        const auto& first = first_segment_[std::size_t(u1) * npairs + p1];
        const double chem2 =
            second_segment_cost_[(std::size_t(first.end_inventory) * std::size_t(u_global_max_ + 1) +
                                  std::size_t(u2)) * npairs + p2];
        const int weekly_u[SupplyChainParams::weeks] = {u1, u1, u2, u2};
        return first.cost + chem2 +
               detail::product_cost(xi.values.data(), SupplyChainParams::weeks, weekly_u,
                                    params_.price_sub, params_.price_hold);
    }

    double response_by_index(const FirstStageDecision& x, std::size_t j,
                             const Scenario& xi) const override {
        const std::size_t npairs = ss_policy_pairs().size();
        const std::size_t pp = j % (npairs * npairs);
        const auto [u1, u2] = decode_u_combo(j / (npairs * npairs), u_sum_max(x));
        const auto& first = first_segment_[std::size_t(u1) * npairs + pp / npairs];
        const double chem2 =
            second_segment_cost_[(std::size_t(first.end_inventory) * std::size_t(u_global_max_ + 1) +
                                  std::size_t(u2)) * npairs + pp % npairs];
        const int weekly_u[SupplyChainParams::weeks] = {u1, u1, u2, u2};
        return first.cost + chem2 +
               detail::product_cost(xi.values.data(), SupplyChainParams::weeks, weekly_u,
                                    params_.price_sub, params_.price_hold);
    }

    bool is_feasible(const FirstStageDecision& x, const SecondStageDecision& y) const override {
        const int u1 = int(std::llround(y.coords[0]));
        const int u2 = int(std::llround(y.coords[1]));
        return u1 >= 0 && u2 >= 0 && u1 + u2 <= u_sum_max(x);
    }

    std::pair<std::vector<double>, std::vector<double>> first_stage_bounds() const override {
        return {{0.0}, {params_.x_max}};
    }
    std::pair<std::vector<double>, std::vector<double>> second_stage_bounds() const override {
        return {{0.0, 0.0, 100.0, 200.0, 100.0, 200.0},
                {double(u_global_max_), double(u_global_max_), 400.0, 500.0, 400.0, 500.0}};
    }

private:
    int u_sum_max(const FirstStageDecision& x) const {
        return static_cast<int>(std::floor(x.coords[0] / 10.0 + 1e-9));
    }

    // combos (u1, u2) with u1 + u2 <= U, ordered u1-major then u2.
    static std::pair<int, int> decode_u_combo(std::size_t combo, int U) {
        std::size_t lo = 0, hi = std::size_t(U);
        auto offset = [U](std::size_t r) {
            return r * std::size_t(U + 1) - r * (r - 1) / 2;
        };
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            if (offset(mid) <= combo)
                lo = mid;
            else
                hi = mid - 1;
        }
        return {int(lo), int(combo - offset(lo))};
    }

    struct Segment {
        double cost = 0.0;
        int end_inventory = 0;
    };

    void build_segment_tables() {
        const auto& pairs = ss_policy_pairs();
        const std::size_t npairs = pairs.size();
        const int segment_days = 2 * SupplyChainParams::days_per_week;

        first_segment_.resize(std::size_t(u_global_max_ + 1) * npairs);
        for (int u = 0; u <= u_global_max_; ++u) {
            for (std::size_t p = 0; p < npairs; ++p) {
                const auto [ordered, end_inv] = detail::run_chemical_policy(
                    u, pairs[p].first, pairs[p].second, params_.initial_inventory, segment_days);
                first_segment_[std::size_t(u) * npairs + p] = {params_.price_raw * ordered, end_inv};
            }
        }

        // all reachable end inventories lie in [0, max S]
        const int max_inv = 500;
        second_segment_cost_.resize(std::size_t(max_inv + 1) * std::size_t(u_global_max_ + 1) *
                                    npairs);
        for (int inv = 0; inv <= max_inv; ++inv) {
            for (int u = 0; u <= u_global_max_; ++u) {
                for (std::size_t p = 0; p < npairs; ++p) {
                    const auto [ordered, end_inv] = detail::run_chemical_policy(
                        u, pairs[p].first, pairs[p].second, inv, segment_days);
                    (void)end_inv;
                    second_segment_cost_[(std::size_t(inv) * std::size_t(u_global_max_ + 1) +
                                          std::size_t(u)) * npairs + p] =
                        params_.price_raw * ordered;
                }
            }
        }
    }

    SupplyChainParams params_;
    std::size_t grid_size_ = 0;
    int u_global_max_ = 0;
    std::vector<Segment> first_segment_;
    std::vector<double> second_segment_cost_;
};

/// Week-by-week second-stage cost of the basic supply-chain model; exposed
/// for direct checks against hand-traceable cases.
inline double simulate_supply_chain(const SupplyChainProblem& problem, const FirstStageDecision& x,
                                    const SecondStageDecision& y, const Scenario& xi) {
    if (!problem.is_feasible(x, y))
        throw InfeasibleDecision("simulate_supply_chain: infeasible (x, y)");
    return problem.response(x, y, xi);
}

} // namespace tsopt
