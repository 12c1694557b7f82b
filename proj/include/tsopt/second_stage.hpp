#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "tsopt/design.hpp"
#include "tsopt/kriging.hpp"
#include "tsopt/problem.hpp"
#include "tsopt/rng.hpp"

namespace tsopt {

/// Tunables of the per-site second-stage search.
struct SecondStageConfig {
    double alpha0 = 0.1;       // initial relative-EI stopping threshold
    std::size_t n0 = 10;       // initial scenario count
    double growth = 1.5;       // scenario growth factor g
    int gap_paths = 100;       // posterior sample paths per gap estimate
    std::size_t refit_every = 10;
    std::size_t design_cap = 200;
    std::size_t pool_budget = 1000000;  // |Y(x)| * N(x) above which EI pools are subsampled
    std::size_t pool_size = 100000;     // subsampled EI candidate pool per scenario
    std::size_t gap_pool = 128;         // candidates carried into joint path sampling
    double eps_denominator = 1e-8;
};

/// Closed-form expected improvement over the incumbent for a normal
/// posterior with the given mean and standard deviation.
inline double expected_improvement(double incumbent_value, double mean, double sd) {
    if (!std::isfinite(incumbent_value) || !std::isfinite(mean) || !std::isfinite(sd) || sd < 0.0)
        throw NonFiniteInput("expected_improvement: bad inputs");
    const double delta = incumbent_value - mean;
    if (sd == 0.0) return std::max(delta, 0.0);
    const double z = delta / sd;
    return delta * normal_cdf(z) + sd * normal_pdf(z);
}

/// Search state for one scenario at one first-stage decision.
struct ScenarioState {
    Scenario xi;
    bool has_incumbent = false;
    SecondStageDecision incumbent;
    double incumbent_value = std::numeric_limits<double>::infinity();
    bool terminated = false;   // member of the finished set for this visit
    double gap = 0.0;          // estimated expected optimality gap
    bool gap_valid = false;
    std::size_t sims = 0;      // simulations charged for this scenario's search
    std::set<std::size_t> observed;  // candidate indices simulated at this scenario
};

/// Search state for one first-stage decision: its scenarios, threshold
/// schedule, and local metamodel over (y, xi).
struct SiteState {
    FirstStageDecision x;
    std::vector<ScenarioState> scenarios;
    int visits = 0;            // t(x)
    double alpha = 0.0;        // current relative-EI threshold
    std::optional<KrigingModel> model;
    std::size_t points_since_refit = 0;
    std::size_t sims = 0;      // all simulations charged at this site
    bool truncated = false;    // budget ran out during the last visit
};

/// Result of scoring the candidate set by expected improvement.
struct EiEvaluation {
    SecondStageDecision y;
    double ei = 0.0;
    double posterior_mean = 0.0;
    double posterior_sd = 0.0;
};

namespace detail {

/// Per-scenario candidate pool with cached prediction-point coordinates.
struct CandidatePool {
    std::vector<std::size_t> indices;  // indices into Y(x)
    Eigen::MatrixXd points;            // (y, xi) rows aligned with indices
};

inline CandidatePool build_pool(const TwoStageProblem& problem, const FirstStageDecision& x,
                                const Scenario& xi, std::size_t pool_size, RngStream& rng) {
    const std::size_t ny = problem.second_stage_size(x);
    CandidatePool pool;
    if (ny <= pool_size) {
        pool.indices.resize(ny);
        for (std::size_t j = 0; j < ny; ++j) pool.indices[j] = j;
    } else {
        std::set<std::size_t> chosen;
        while (chosen.size() < pool_size) chosen.insert(rng.uniform_index(ny));
        pool.indices.assign(chosen.begin(), chosen.end());
    }

    const std::size_t dy = problem.second_stage_dim();
    const std::size_t dxi = problem.scenario_dim();
    pool.points.resize(Eigen::Index(pool.indices.size()), Eigen::Index(dy + dxi));
    for (std::size_t r = 0; r < pool.indices.size(); ++r) {
        const SecondStageDecision y = problem.second_stage_at(x, pool.indices[r]);
        for (std::size_t c = 0; c < dy; ++c) pool.points(Eigen::Index(r), Eigen::Index(c)) = y.coords[c];
        for (std::size_t c = 0; c < dxi; ++c)
            pool.points(Eigen::Index(r), Eigen::Index(dy + c)) = xi.values[c];
    }
    return pool;
}

inline Eigen::RowVectorXd design_row(const TwoStageProblem& problem, const SecondStageDecision& y,
                                     const Scenario& xi) {
    const std::size_t dy = problem.second_stage_dim();
    const std::size_t dxi = problem.scenario_dim();
    Eigen::RowVectorXd row(Eigen::Index(dy + dxi));
    for (std::size_t c = 0; c < dy; ++c) row[Eigen::Index(c)] = y.coords[c];
    for (std::size_t c = 0; c < dxi; ++c) row[Eigen::Index(dy + c)] = xi.values[c];
    return row;
}

} // namespace detail

/// Advance the site's visit schedule: t -> t+1, alpha = alpha0 * g^{-(t-1)/2},
/// scenario count grown to ceil(n0 * g^{t-1}), and the finished-scenario set
/// reset for the new visit.
inline void begin_visit(SiteState& site, const TwoStageProblem& problem,
                        const SecondStageConfig& cfg, RngStream& rng) {
    site.visits += 1;
    const double t = double(site.visits);
    site.alpha = cfg.alpha0 * std::pow(cfg.growth, -(t - 1.0) / 2.0);
    const auto target = std::size_t(std::ceil(double(cfg.n0) * std::pow(cfg.growth, t - 1.0)));
    while (site.scenarios.size() < target) {
        ScenarioState s;
        s.xi = problem.sample_scenario(rng);
        site.scenarios.push_back(std::move(s));
    }
    for (auto& s : site.scenarios) s.terminated = false;
    site.truncated = false;
}

/// Score every candidate of the pool at the scenario's xi and return the EI
/// maximizer; ties go to the lowest enumeration index.
inline EiEvaluation ei_argmax(const KrigingModel& model, const TwoStageProblem& problem,
                              const FirstStageDecision& x, const detail::CandidatePool& pool,
                              double incumbent_value) {
    const PredictResult pred = model.predict(pool.points);
    double best_ei = -1.0;
    std::size_t best_r = 0;
    double best_mean = 0.0, best_sd = 0.0;
    for (std::size_t r = 0; r < pool.indices.size(); ++r) {
        const double sd = std::sqrt(std::max(pred.variance[Eigen::Index(r)], 0.0));
        const double ei = expected_improvement(incumbent_value, pred.mean[Eigen::Index(r)], sd);
        if (ei > best_ei) {
            best_ei = ei;
            best_r = r;
            best_mean = pred.mean[Eigen::Index(r)];
            best_sd = sd;
        }
    }
    EiEvaluation out;
    out.y = problem.second_stage_at(x, pool.indices[best_r]);
    out.ei = best_ei;
    out.posterior_mean = best_mean;
    out.posterior_sd = best_sd;
    return out;
}

/// The relative-EI stopping rule: max EI over candidates divided by the
/// magnitude of the incumbent response, guarded against tiny denominators.
inline bool stopping_satisfied(double max_ei, double incumbent_value, double alpha,
                               double eps_denominator = 1e-8) {
    const double den = std::max(std::abs(incumbent_value), eps_denominator);
    return max_ei / den <= alpha;
}

namespace detail {

inline double estimate_gap_on_pool(const ScenarioState& scen, const KrigingModel& model,
                                   const TwoStageProblem& problem, const CandidatePool& full_pool,
                                   int B, RngStream& rng, const SecondStageConfig& cfg) {
    const CandidatePool* pool = &full_pool;
    CandidatePool reduced;

    // keep the lowest-mean candidates plus the incumbent
    if (full_pool.indices.size() > cfg.gap_pool) {
        const PredictResult pred = model.predict(full_pool.points);
        std::vector<std::size_t> order(full_pool.indices.size());
        for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
        std::partial_sort(order.begin(), order.begin() + long(cfg.gap_pool), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              return pred.mean[Eigen::Index(a)] < pred.mean[Eigen::Index(b)];
                          });
        order.resize(cfg.gap_pool);
        const std::size_t inc_idx = scen.incumbent.index;
        bool has_inc = false;
        for (std::size_t r : order)
            if (full_pool.indices[r] == inc_idx) has_inc = true;

        reduced.indices.reserve(order.size() + 1);
        reduced.points.resize(Eigen::Index(order.size()) + (has_inc ? 0 : 1),
                              full_pool.points.cols());
        Eigen::Index row = 0;
        for (std::size_t r : order) {
            reduced.indices.push_back(full_pool.indices[r]);
            reduced.points.row(row++) = full_pool.points.row(Eigen::Index(r));
        }
        if (!has_inc) {
            reduced.indices.push_back(inc_idx);
            reduced.points.row(row) = design_row(problem, scen.incumbent, scen.xi);
        }
        pool = &reduced;
    }

    const Eigen::MatrixXd paths = model.sample_paths(pool->points, B, rng);
    double acc = 0.0;
    for (int b = 0; b < B; ++b)
        acc += std::max(0.0, scen.incumbent_value - paths.row(b).minCoeff());
    return acc / double(B);
}

} // namespace detail

/// Expected optimality gap for one scenario: mean over B joint posterior
/// sample paths of max(0, q(x, yhat, xi_j) - min_y path(y, xi_j)). The path
/// is drawn over the candidates with the lowest posterior means (pool capped
/// for tractability), always including the incumbent.
inline double estimate_gap(const SiteState& site, const KrigingModel& model,
                           const TwoStageProblem& problem, std::size_t scenario_j, int B,
                           RngStream& rng, const SecondStageConfig& cfg = {}) {
    const ScenarioState& scen = site.scenarios[scenario_j];
    if (!scen.has_incumbent) throw IncompleteSite("estimate_gap: scenario has no incumbent");
    RngStream pool_rng = rng.substream(0x706f6f6c);
    const detail::CandidatePool pool =
        detail::build_pool(problem, site.x, scen.xi, cfg.pool_size, pool_rng);
    return detail::estimate_gap_on_pool(scen, model, problem, pool, B, rng, cfg);
}

/// One full second-stage search at the site under its current visit state:
/// builds the initial space-filling design and local metamodel on the first
/// visit, initializes incumbents for fresh scenarios, then runs the EI loop
/// per scenario until the relative-EI rule fires everywhere or the budget is
/// exhausted, and finally refreshes the gap estimates.
inline void solve_second_stage(SiteState& site, const TwoStageProblem& problem, BudgetMeter& meter,
                               const SecondStageConfig& cfg, RngStream& rng) {
    const std::size_t ny = problem.second_stage_size(site.x);
    const std::size_t dz = problem.second_stage_dim() + problem.scenario_dim();

    auto note_exhausted = [&site]() { site.truncated = true; };

    // ---- initial local design over Y(x) x Xi ----
    if (!site.model) {
        const std::size_t target =
            std::max<std::size_t>(2, std::min({10 * dz, ny * 5, cfg.design_cap}));

        // scenario axes stratified by empirical quantiles
        const std::size_t dxi = problem.scenario_dim();
        const std::size_t pool_n = std::max<std::size_t>(101, target);
        RngStream axis_rng = rng.substream(0x61786573);
        std::vector<std::vector<double>> axis_vals(dxi);
        for (std::size_t k = 0; k < pool_n; ++k) {
            const Scenario s = problem.sample_scenario(axis_rng);
            for (std::size_t a = 0; a < dxi; ++a) axis_vals[a].push_back(s.values[a]);
        }
        for (auto& v : axis_vals) std::sort(v.begin(), v.end());

        std::vector<std::size_t> axes(1 + dxi);
        axes[0] = ny;
        for (std::size_t a = 0; a < dxi; ++a) axes[1 + a] = pool_n;
        RngStream lhd_rng = rng.substream(0x6c6864);
        const LhdDesign lhd = maximin_lhd(axes, std::min(target, ny * pool_n), lhd_rng);

        const Eigen::Index dzi = Eigen::Index(dz);
        Eigen::MatrixXd design(Eigen::Index(lhd.size()), dzi);
        Eigen::VectorXd outputs(Eigen::Index(lhd.size()));
        Eigen::Index row = 0;
        for (const auto& pt : lhd.points) {
            const SecondStageDecision y = problem.second_stage_at(site.x, pt[0]);
            Scenario xi;
            xi.values.resize(dxi);
            for (std::size_t a = 0; a < dxi; ++a) xi.values[a] = axis_vals[a][pt[1 + a]];
            const auto q = metered_response(meter, problem, site.x, y, xi);
            if (!q) {
                note_exhausted();
                break;
            }
            site.sims += 1;
            design.row(row) = detail::design_row(problem, y, xi);
            outputs[row] = *q;
            ++row;
        }
        if (row < 2) {
            note_exhausted();
            return;
        }
        site.model = KrigingModel::fit(design.topRows(row), outputs.head(row));
        site.points_since_refit = 0;
    }

    KrigingModel& model = *site.model;

    auto absorb_observation = [&](const SecondStageDecision& y, const Scenario& xi, double q) {
        const Eigen::RowVectorXd z = detail::design_row(problem, y, xi);
        if (!model.append(z, q)) {
            model.refit();
            site.points_since_refit = 0;
            if (!model.append(z, q)) return;  // model keeps going without this point
        }
        site.points_since_refit += 1;
        if (site.points_since_refit >= cfg.refit_every) {
            model.refit();
            site.points_since_refit = 0;
        }
    };

    // ---- per-scenario candidate pools (subsampled when the instance is huge) ----
    const bool subsample = ny * std::max<std::size_t>(site.scenarios.size(), 1) > cfg.pool_budget;
    const std::size_t pool_size = subsample ? cfg.pool_size : ny;
    std::vector<detail::CandidatePool> pools(site.scenarios.size());
    RngStream pool_rng = rng.substream(0x706f6f6c73);
    for (std::size_t j = 0; j < site.scenarios.size(); ++j)
        pools[j] = detail::build_pool(problem, site.x, site.scenarios[j].xi, pool_size, pool_rng);

    // ---- incumbent initialization for fresh scenarios ----
    for (std::size_t j = 0; j < site.scenarios.size() && !site.truncated; ++j) {
        ScenarioState& scen = site.scenarios[j];
        if (scen.has_incumbent) continue;
        const PredictResult pred = model.predict(pools[j].points);
        Eigen::Index argmin = 0;
        pred.mean.minCoeff(&argmin);
        const SecondStageDecision y = problem.second_stage_at(site.x, pools[j].indices[argmin]);
        const auto q = metered_response(meter, problem, site.x, y, scen.xi);
        if (!q) {
            note_exhausted();
            break;
        }
        site.sims += 1;
        scen.sims += 1;
        scen.incumbent = y;
        scen.incumbent_value = *q;
        scen.has_incumbent = true;
        scen.observed.insert(y.index);
        absorb_observation(y, scen.xi, *q);
    }

    // ---- EI loop across all scenarios not yet terminated ----
    bool progress = !site.truncated;
    while (progress) {
        progress = false;
        for (std::size_t j = 0; j < site.scenarios.size() && !site.truncated; ++j) {
            ScenarioState& scen = site.scenarios[j];
            if (scen.terminated || !scen.has_incumbent) continue;

            // a finite candidate set cannot support more simulations than |Y(x)|
            if (scen.sims >= ny) {
                scen.terminated = true;
                continue;
            }

            const EiEvaluation ei = ei_argmax(model, problem, site.x, pools[j],
                                              scen.incumbent_value);
            if (stopping_satisfied(ei.ei, scen.incumbent_value, site.alpha,
                                   cfg.eps_denominator)) {
                scen.terminated = true;
                continue;
            }
            if (scen.observed.count(ei.y.index)) {
                // the maximizer is already simulated at this scenario; no
                // real improvement is available
                scen.terminated = true;
                continue;
            }

            const auto q = metered_response(meter, problem, site.x, ei.y, scen.xi);
            if (!q) {
                note_exhausted();
                break;
            }
            site.sims += 1;
            scen.sims += 1;
            scen.observed.insert(ei.y.index);
            if (*q < scen.incumbent_value) {
                scen.incumbent_value = *q;
                scen.incumbent = ei.y;
            }
            absorb_observation(ei.y, scen.xi, *q);
            progress = true;
        }
        if (site.truncated) break;
    }

    // ---- expected optimality gaps (free of simulation cost; also refreshed
    // on truncated visits so the gathered data still reports) ----
    RngStream gap_rng = rng.substream(0x67617073);
    for (std::size_t j = 0; j < site.scenarios.size(); ++j) {
        ScenarioState& scen = site.scenarios[j];
        if (!scen.has_incumbent) continue;
        RngStream scen_rng = gap_rng.substream(j);
        scen.gap = detail::estimate_gap_on_pool(scen, model, problem, pools[j], cfg.gap_paths,
                                                scen_rng, cfg);
        scen.gap_valid = true;
    }
}

} // namespace tsopt
