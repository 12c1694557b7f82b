#pragma once

#include <map>
#include <memory>
#include <string>

#include "tsopt/errors.hpp"
#include "tsopt/problems/linear.hpp"
#include "tsopt/problems/supply_chain.hpp"

namespace tsopt {

using ParamMap = std::map<std::string, double>;

namespace detail {

inline SupplyChainParams supply_chain_params_from(const ParamMap& params) {
    SupplyChainParams p;
    auto get = [&params](const std::string& key, double fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    p.sigma = get("sigma", p.sigma);
    p.demand_mean = get("demand_mean", p.demand_mean);
    p.price_soy = get("price_soy", p.price_soy);
    p.price_raw = get("price_raw", p.price_raw);
    p.price_hold = get("price_hold", p.price_hold);
    p.price_sub = get("price_sub", p.price_sub);
    p.initial_inventory = int(get("initial_inventory", p.initial_inventory));
    p.x_max = get("x_max", p.x_max);
    p.x_step = get("x_step", p.x_step);
    return p;
}

} // namespace detail

/// Problem factory keyed by registered name: "linear", "supplychain",
/// "supplychain-ext". Unknown parameter keys are ignored by problems that
/// do not use them.
inline std::unique_ptr<TwoStageProblem> make_problem(const std::string& name,
                                                     const ParamMap& params = {}) {
    if (name == "linear") return std::make_unique<LinearToyProblem>();
    if (name == "supplychain")
        return std::make_unique<SupplyChainProblem>(detail::supply_chain_params_from(params));
    if (name == "supplychain-ext")
        return std::make_unique<ExtendedSupplyChainProblem>(
            detail::supply_chain_params_from(params));
    throw ConfigError("unknown problem name: " + name);
}

} // namespace tsopt
