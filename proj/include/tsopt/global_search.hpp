#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "tsopt/design.hpp"
#include "tsopt/kriging.hpp"
#include "tsopt/problem.hpp"
#include "tsopt/rng.hpp"
#include "tsopt/second_stage.hpp"

namespace tsopt {

/// Full parameter set of the global-local search.
struct AlgoConfig {
    std::int64_t budget = 600;     // C
    double alpha0 = 0.1;
    std::size_t n0 = 10;
    double growth = 1.5;           // g
    std::size_t new_points = 5;    // s, design points sampled per iteration
    int bootstrap_resamples = 100; // T
    int gap_paths = 100;           // B
    std::size_t max_iterations = 100000;  // safety stop, never binding in practice

    void validate() const {
        if (budget < 1) throw ConfigError("algo: budget must be >= 1");
        if (!(alpha0 > 0.0 && alpha0 < 1.0)) throw ConfigError("algo: alpha0 must be in (0,1)");
        if (n0 < 2) throw ConfigError("algo: n0 must be >= 2");
        if (!(growth > 1.0)) throw ConfigError("algo: growth factor must be > 1");
        if (new_points < 1) throw ConfigError("algo: new_points must be >= 1");
        if (bootstrap_resamples < 2) throw ConfigError("algo: bootstrap resamples must be >= 2");
        if (gap_paths < 1) throw ConfigError("algo: gap paths must be >= 1");
    }

    SecondStageConfig second_stage() const {
        SecondStageConfig s;
        s.alpha0 = alpha0;
        s.n0 = n0;
        s.growth = growth;
        s.gap_paths = gap_paths;
        return s;
    }
};

struct IterationRecord {
    int iteration = 0;
    std::int64_t spent = 0;
    FirstStageDecision xhat;
    double gbar = std::numeric_limits<double>::quiet_NaN();
};

/// Trace of one optimization run shared by all algorithms.
struct RunRecord {
    std::vector<IterationRecord> trace;
    FirstStageDecision xstar;
    double gbar_star = std::numeric_limits<double>::quiet_NaN();
    std::int64_t spent = 0;
    bool truncated = false;  // the budget cut a sub-search short
};

/// Search state of the outer loop, exposed for inspection by tests.
struct GlobalState {
    std::map<std::size_t, SiteState> sites;  // keyed by first-stage index
    int iteration = 0;
    std::optional<SkModel> global_model;
    std::vector<IterationRecord> trace;
};

/// True when every scenario at the site carries an incumbent and a gap
/// estimate, so the site's aggregate is fully defined.
inline bool site_complete(const SiteState& site) {
    if (site.scenarios.empty()) return false;
    for (const auto& s : site.scenarios)
        if (!s.has_incumbent || !s.gap_valid) return false;
    return true;
}

/// Per-scenario gap-adjusted responses q(x, yhat_j, xi_j) - E[delta | xi_j],
/// restricted to scenarios whose search produced an incumbent.
inline std::vector<double> adjusted_scenario_values(const SiteState& site) {
    std::vector<double> vals;
    vals.reserve(site.scenarios.size());
    for (const auto& s : site.scenarios)
        if (s.has_incumbent && s.gap_valid) vals.push_back(s.incumbent_value - s.gap);
    return vals;
}

/// The gap-adjusted SAA estimate Gbar(x) = c0(x) + mean_j {q - E[delta|xi_j]}.
inline double gap_adjusted_saa(const SiteState& site, const TwoStageProblem& problem) {
    if (!site_complete(site))
        throw IncompleteSite("gap_adjusted_saa: scenarios missing incumbents or gaps");
    const std::vector<double> vals = adjusted_scenario_values(site);
    double acc = 0.0;
    for (double v : vals) acc += v;
    return problem.first_stage_cost(site.x) + acc / double(vals.size());
}

/// Aggregate usable even when exhaustion left trailing scenarios without
/// incumbents; nullopt when not a single scenario finished.
inline std::optional<double> gap_adjusted_saa_partial(const SiteState& site,
                                                      const TwoStageProblem& problem) {
    const std::vector<double> vals = adjusted_scenario_values(site);
    if (vals.empty()) return std::nullopt;
    double acc = 0.0;
    for (double v : vals) acc += v;
    return problem.first_stage_cost(site.x) + acc / double(vals.size());
}

/// Bootstrap estimate of Var(Gbar(x)): resample the N(x) adjusted responses
/// with replacement T times and return the sample variance of the means.
inline double bootstrap_variance(const SiteState& site, int T, RngStream& rng) {
    const std::vector<double> vals = adjusted_scenario_values(site);
    if (vals.size() < 2) throw IncompleteSite("bootstrap_variance: need at least 2 scenarios");
    if (T < 2) throw ConfigError("bootstrap_variance: T must be >= 2");

    std::vector<double> means(T);
    for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < vals.size(); ++j) acc += vals[rng.uniform_index(vals.size())];
        means[t] = acc / double(vals.size());
    }
    double mbar = 0.0;
    for (double m : means) mbar += m;
    mbar /= double(T);
    double var = 0.0;
    for (double m : means) var += (m - mbar) * (m - mbar);
    return var / double(T - 1);
}

/// Stochastic-kriging fit over all sites that have complete aggregates.
/// `gbars` and `noise` must align with `order`, the site indices used.
inline SkModel fit_global(const TwoStageProblem& problem,
                          const std::vector<FirstStageDecision>& xs,
                          const std::vector<double>& gbars, const std::vector<double>& noise) {
    if (xs.size() < 2) throw SingularSystem("fit_global: need at least 2 complete sites");
    const std::size_t d = problem.first_stage_dim();
    const Eigen::Index k = Eigen::Index(xs.size());
    const Eigen::Index dd = Eigen::Index(d);
    Eigen::MatrixXd design(k, dd);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t c = 0; c < d; ++c)
            design(Eigen::Index(i), Eigen::Index(c)) = xs[i].coords[c];
        g[Eigen::Index(i)] = gbars[i];
        v[Eigen::Index(i)] = noise[i];
    }

    // floor keeps the covariance invertible when a site's responses are constant
    double var_g = 0.0;
    const double mean_g = g.mean();
    for (Eigen::Index i = 0; i < g.size(); ++i) var_g += (g[i] - mean_g) * (g[i] - mean_g);
    var_g /= std::max<double>(1.0, double(g.size() - 1));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::max(v[i], 1e-12 * var_g);

    const auto [lo, hi] = problem.first_stage_bounds();
    const Eigen::Index di = Eigen::Index(d);
    Eigen::VectorXd blo = Eigen::VectorXd::Zero(di);
    Eigen::VectorXd bhi = Eigen::VectorXd::Zero(di);
    for (std::size_t c = 0; c < d; ++c) {
        blo[Eigen::Index(c)] = lo[c];
        bhi[Eigen::Index(c)] = hi[c];
    }
    return SkModel::fit(design, g, v, FitOptions{}, std::make_pair(blo, bhi));
}

/// Probability-of-improvement sampling distribution over the whole feasible
/// set: f(x) proportional to Pr{G~(x) < Gbar(xhat*)}.
inline std::vector<double> sampling_distribution(const SkModel& model, double incumbent_gbar,
                                                 const TwoStageProblem& problem) {
    const std::size_t nx = problem.first_stage_size();
    const std::size_t d = problem.first_stage_dim();
    const Eigen::Index nxi = Eigen::Index(nx);
    const Eigen::Index di = Eigen::Index(d);
    Eigen::MatrixXd grid(nxi, di);
    for (std::size_t i = 0; i < nx; ++i) {
        const FirstStageDecision x = problem.first_stage_at(i);
        for (std::size_t c = 0; c < d; ++c) grid(Eigen::Index(i), Eigen::Index(c)) = x.coords[c];
    }
    const PredictResult pred = model.predict(grid);

    std::vector<double> f(nx);
    double total = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
        const double s = std::sqrt(std::max(pred.variance[Eigen::Index(i)], 0.0));
        double p;
        if (s > 0.0)
            p = normal_cdf((incumbent_gbar - pred.mean[Eigen::Index(i)]) / s);
        else
            p = pred.mean[Eigen::Index(i)] < incumbent_gbar ? 1.0 : 0.0;
        f[i] = p;
        total += p;
    }
    if (total <= 0.0) {
        std::fill(f.begin(), f.end(), 1.0 / double(nx));
    } else {
        for (double& p : f) p /= total;
    }
    return f;
}

/// The full global-local search loop. `out_state` optionally receives the
/// final search state for inspection.
inline RunRecord run_algorithm1(const TwoStageProblem& problem, const AlgoConfig& cfg,
                                RngStream& rng, GlobalState* out_state = nullptr) {
    cfg.validate();
    BudgetMeter meter(cfg.budget);
    const SecondStageConfig sscfg = cfg.second_stage();
    GlobalState state;
    RunRecord rec;

    // Step 1: initial first-stage design by maximin LHD, "10 d" points
    const std::size_t nx = problem.first_stage_size();
    const std::size_t init_points = std::min(nx, 10 * problem.first_stage_dim());
    RngStream lhd_rng = rng.substream(0x696e6974);
    const LhdDesign initial = maximin_lhd({nx}, init_points, lhd_rng);
    std::vector<std::size_t> current;
    for (const auto& pt : initial.points) current.push_back(pt[0]);
    std::sort(current.begin(), current.end());

    for (int k = 1; std::size_t(k) <= cfg.max_iterations; ++k) {
        state.iteration = k;
        RngStream iter_rng = rng.substream(0x6974).substream(std::uint64_t(k));

        // Step 2: second-stage searches at this iteration's design points
        for (std::size_t idx : current) {
            auto it = state.sites.find(idx);
            if (it == state.sites.end()) {
                SiteState fresh;
                fresh.x = problem.first_stage_at(idx);
                it = state.sites.emplace(idx, std::move(fresh)).first;
            }
            SiteState& site = it->second;
            RngStream site_rng = iter_rng.substream(idx);
            RngStream scen_rng = site_rng.substream(0x7363656e);
            begin_visit(site, problem, sscfg, scen_rng);
            RngStream solve_rng = site_rng.substream(0x736f6c76);
            solve_second_stage(site, problem, meter, sscfg, solve_rng);
            // cut short while still initializing marks the whole run truncated
            if (site.truncated && k == 1) rec.truncated = true;
        }

        // Step 3.1: aggregate, bootstrap noise, incumbent
        std::vector<std::size_t> order;
        std::vector<FirstStageDecision> xs;
        std::vector<double> gbars, noise;
        RngStream boot_rng = iter_rng.substream(0x626f6f74);
        for (auto& [idx, site] : state.sites) {
            const auto gbar = gap_adjusted_saa_partial(site, problem);
            if (!gbar) continue;
            order.push_back(idx);
            xs.push_back(site.x);
            gbars.push_back(*gbar);
            const auto vals = adjusted_scenario_values(site);
            if (vals.size() >= 2) {
                RngStream site_boot = boot_rng.substream(idx);
                noise.push_back(bootstrap_variance(site, cfg.bootstrap_resamples, site_boot));
            } else {
                noise.push_back(0.0);
            }
        }
        if (order.empty()) break;  // nothing finished at all

        std::size_t best_pos = 0;
        for (std::size_t i = 1; i < gbars.size(); ++i)
            if (gbars[i] < gbars[best_pos]) best_pos = i;

        IterationRecord ir;
        ir.iteration = k;
        ir.spent = meter.spent();
        ir.xhat = xs[best_pos];
        ir.gbar = gbars[best_pos];
        state.trace.push_back(ir);

        // Step 3.2: stop on exhaustion, otherwise sample the next design set
        if (meter.exhausted()) break;
        if (order.size() < 2) break;  // no spatial information to search with

        state.global_model = fit_global(problem, xs, gbars, noise);
        const std::vector<double> f =
            sampling_distribution(*state.global_model, gbars[best_pos], problem);
        RngStream draw_rng = iter_rng.substream(0x64726177);
        const std::vector<std::size_t> draws = categorical_sample(f, cfg.new_points, draw_rng);
        std::set<std::size_t> unique(draws.begin(), draws.end());
        current.assign(unique.begin(), unique.end());
    }

    rec.trace = state.trace;
    rec.spent = meter.spent();
    if (!state.trace.empty()) {
        rec.xstar = state.trace.back().xhat;
        rec.gbar_star = state.trace.back().gbar;
    } else {
        rec.xstar = problem.first_stage_at(current.empty() ? 0 : current.front());
        rec.truncated = true;
    }
    if (out_state) *out_state = std::move(state);
    return rec;
}

} // namespace tsopt
