#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include "tsopt/design.hpp"
#include "tsopt/global_search.hpp"
#include "tsopt/kriging.hpp"
#include "tsopt/problem.hpp"
#include "tsopt/rng.hpp"

namespace tsopt {

/// Random-sampling SAA baseline configuration.
struct RandomSaaConfig {
    std::size_t n1 = 10;  // first-stage candidates
    std::size_t n2 = 10;  // scenarios per candidate
};

namespace detail {

/// k distinct uniform indices from [0, n); the whole range when k >= n.
inline std::vector<std::size_t> distinct_indices(std::size_t n, std::size_t k, RngStream& rng) {
    std::vector<std::size_t> out;
    if (k >= n) {
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = i;
        return out;
    }
    if (4 * k >= n) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        for (std::size_t i = 0; i < k; ++i)
            std::swap(all[i], all[i + rng.uniform_index(n - i)]);
        out.assign(all.begin(), all.begin() + long(k));
        return out;
    }
    std::set<std::size_t> chosen;
    while (chosen.size() < k) chosen.insert(rng.uniform_index(n));
    out.assign(chosen.begin(), chosen.end());
    return out;
}

} // namespace detail

/// Uniform random search: N1 random first-stage points, N2 scenarios each,
/// C/(N1 N2) random second-stage candidates per scenario, best one kept.
inline RunRecord run_random_saa(const TwoStageProblem& problem, const RandomSaaConfig& cfg,
                                BudgetMeter& meter, RngStream& rng) {
    if (cfg.n1 < 1 || cfg.n2 < 1) throw AllocationInfeasible("random-saa: N1, N2 must be >= 1");
    const std::int64_t per_scenario =
        meter.budget() / std::int64_t(cfg.n1 * cfg.n2);
    if (per_scenario < 1)
        throw AllocationInfeasible("random-saa: budget does not cover N1*N2 scenarios");

    RunRecord rec;
    double best_gbar = std::numeric_limits<double>::infinity();
    bool have_best = false;

    for (std::size_t i = 0; i < cfg.n1; ++i) {
        const FirstStageDecision x =
            problem.first_stage_at(rng.uniform_index(problem.first_stage_size()));
        const std::size_t ny = problem.second_stage_size(x);
        double sum_q = 0.0;
        std::size_t scenarios_done = 0;
        for (std::size_t j = 0; j < cfg.n2; ++j) {
            const Scenario xi = problem.sample_scenario(rng);
            const auto candidates =
                detail::distinct_indices(ny, std::size_t(per_scenario), rng);
            double best_q = std::numeric_limits<double>::infinity();
            bool observed = false;
            for (std::size_t cand : candidates) {
                const SecondStageDecision y = problem.second_stage_at(x, cand);
                const auto q = metered_response(meter, problem, x, y, xi);
                if (!q) {
                    rec.truncated = true;
                    break;
                }
                observed = true;
                best_q = std::min(best_q, *q);
            }
            if (!observed) break;
            sum_q += best_q;
            scenarios_done += 1;
        }
        if (scenarios_done == 0) break;
        const double gbar = problem.first_stage_cost(x) + sum_q / double(scenarios_done);
        if (!have_best || gbar < best_gbar) {
            best_gbar = gbar;
            rec.xstar = x;
            have_best = true;
        }
    }

    rec.spent = meter.spent();
    if (have_best) {
        rec.gbar_star = best_gbar;
        IterationRecord ir;
        ir.iteration = 1;
        ir.spent = rec.spent;
        ir.xhat = rec.xstar;
        ir.gbar = best_gbar;
        rec.trace.push_back(ir);
    } else {
        rec.xstar = problem.first_stage_at(0);
        rec.truncated = true;
    }
    return rec;
}

/// Deterministic look-ahead baseline configuration: the two stages collapse
/// into one joint decision w = (x, y) searched by a Gaussian-process-guided
/// sampler with a fixed kernel.
struct DlhGpsConfig {
    std::size_t m = 10;       // joint points sampled per iteration
    std::size_t r = 10;       // scenario replications per point
    double sigma_gps = 5.0;   // fixed spatial standard deviation
    std::size_t pool_size = 100000;  // candidate pool when W is too large to enumerate
};

namespace detail {

/// Lazy enumeration of the joint decision space W = {(x, y in Y(x))}.
struct JointSpace {
    const TwoStageProblem& problem;
    std::vector<std::size_t> offsets;  // prefix sizes per first-stage index
    std::size_t total = 0;

    explicit JointSpace(const TwoStageProblem& p) : problem(p) {
        const std::size_t nx = p.first_stage_size();
        offsets.resize(nx + 1, 0);
        for (std::size_t i = 0; i < nx; ++i)
            offsets[i + 1] = offsets[i] + p.second_stage_size(p.first_stage_at(i));
        total = offsets[nx];
    }

    std::pair<FirstStageDecision, SecondStageDecision> at(std::size_t g) const {
        const auto it = std::upper_bound(offsets.begin(), offsets.end(), g);
        const std::size_t xi = std::size_t(it - offsets.begin()) - 1;
        const FirstStageDecision x = problem.first_stage_at(xi);
        return {x, problem.second_stage_at(x, g - offsets[xi])};
    }

    Eigen::RowVectorXd coords(const FirstStageDecision& x, const SecondStageDecision& y) const {
        Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(Eigen::Index(x.coords.size() + y.coords.size()));
        Eigen::Index c = 0;
        for (double v : x.coords) w[c++] = v;
        for (double v : y.coords) w[c++] = v;
        return w;
    }
};

struct JointPointStats {
    std::size_t global_index = 0;
    FirstStageDecision x;
    SecondStageDecision y;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;

    double mean() const { return sum / double(count); }
    double variance_of_mean() const {
        if (count < 2) return 0.0;
        const double var = (sum_sq - sum * sum / double(count)) / double(count - 1);
        return std::max(var, 0.0) / double(count);
    }
};

} // namespace detail

/// Deterministic look-ahead policy solved by probability-of-improvement
/// sampling over the joint space, with the response surface modeled by a
/// fixed-kernel stochastic-kriging metamodel (exponential correlation,
/// unit decay on normalized coordinates, spatial variance sigma_gps^2).
inline RunRecord run_dlh_gps(const TwoStageProblem& problem, const DlhGpsConfig& cfg,
                             BudgetMeter& meter, RngStream& rng) {
    if (cfg.m < 1 || cfg.r < 1 || !(cfg.sigma_gps > 0.0))
        throw ConfigError("dlh-gps: m >= 1, r >= 1, sigma_gps > 0 required");

    const detail::JointSpace space(problem);
    RunRecord rec;

    std::map<std::size_t, detail::JointPointStats> visited;

    auto simulate_at = [&](std::size_t g) -> bool {
        auto it = visited.find(g);
        if (it == visited.end()) {
            auto [x, y] = space.at(g);
            detail::JointPointStats st;
            st.global_index = g;
            st.x = std::move(x);
            st.y = std::move(y);
            it = visited.emplace(g, std::move(st)).first;
        }
        detail::JointPointStats& st = it->second;
        const double c0 = problem.first_stage_cost(st.x);
        for (std::size_t rep = 0; rep < cfg.r; ++rep) {
            const Scenario xi = problem.sample_scenario(rng);
            const auto q = metered_response(meter, problem, st.x, st.y, xi);
            if (!q) {
                rec.truncated = true;
                return false;
            }
            st.sum += c0 + *q;
            st.sum_sq += (c0 + *q) * (c0 + *q);
            st.count += 1;
        }
        return true;
    };

    // joint-space bounds for coordinate normalization
    const auto [xlo, xhi] = problem.first_stage_bounds();
    const auto [ylo, yhi] = problem.second_stage_bounds();
    const std::size_t dw = xlo.size() + ylo.size();
    const Eigen::Index dwi = Eigen::Index(dw);
    Eigen::VectorXd blo = Eigen::VectorXd::Zero(dwi);
    Eigen::VectorXd bhi = Eigen::VectorXd::Zero(dwi);
    {
        Eigen::Index c = 0;
        for (std::size_t i = 0; i < xlo.size(); ++i, ++c) {
            blo[c] = xlo[i];
            bhi[c] = xhi[i];
        }
        for (std::size_t i = 0; i < ylo.size(); ++i, ++c) {
            blo[c] = ylo[i];
            bhi[c] = yhi[i];
        }
    }

    // initial design: 10 d joint points, stratified over the x axis and the
    // relative position inside Y(x)
    {
        const std::size_t nx = problem.first_stage_size();
        const std::size_t frac_axis = 1024;
        const std::size_t target = std::min<std::size_t>(10 * dw, space.total);
        RngStream lhd_rng = rng.substream(0x6a6c6864);
        const LhdDesign lhd = maximin_lhd({nx, frac_axis}, target, lhd_rng);
        for (const auto& pt : lhd.points) {
            const std::size_t xi = pt[0];
            const std::size_t ny = space.offsets[xi + 1] - space.offsets[xi];
            const std::size_t yi = std::min(ny - 1, pt[1] * ny / frac_axis);
            if (!simulate_at(space.offsets[xi] + yi)) break;
        }
    }

    SkKernel kernel;
    kernel.type = SkKernel::Type::exponential_iso;
    kernel.decay = 1.0;
    const double tau2 = cfg.sigma_gps * cfg.sigma_gps;

    int iteration = 0;
    while (true) {
        iteration += 1;

        const detail::JointPointStats* best = nullptr;
        for (const auto& [g, st] : visited)
            if (st.count > 0 && (!best || st.mean() < best->mean())) best = &st;
        if (!best) break;

        IterationRecord ir;
        ir.iteration = iteration;
        ir.spent = meter.spent();
        ir.xhat = best->x;
        ir.gbar = best->mean();
        rec.trace.push_back(ir);

        if (meter.exhausted() || rec.truncated || visited.size() < 2) break;

        // fixed-kernel metamodel over the visited joint points
        Eigen::MatrixXd design(Eigen::Index(visited.size()), dwi);
        Eigen::VectorXd outputs(Eigen::Index(visited.size()));
        Eigen::VectorXd noise(Eigen::Index(visited.size()));
        {
            Eigen::Index row = 0;
            for (const auto& [g, st] : visited) {
                design.row(row) = space.coords(st.x, st.y);
                outputs[row] = st.mean();
                noise[row] = st.variance_of_mean();
                ++row;
            }
        }
        const SkModel model =
            SkModel::with_fixed(design, outputs, noise, kernel, tau2, std::make_pair(blo, bhi));

        // candidate pool: the full joint space when enumerable, otherwise a
        // uniform subsample plus everything already visited
        std::vector<std::size_t> pool;
        if (space.total <= cfg.pool_size) {
            pool.resize(space.total);
            for (std::size_t g = 0; g < space.total; ++g) pool[g] = g;
        } else {
            std::set<std::size_t> chosen;
            for (const auto& [g, st] : visited) chosen.insert(g);
            RngStream pool_rng = rng.substream(0x77706f6f6c).substream(std::uint64_t(iteration));
            while (chosen.size() < cfg.pool_size) chosen.insert(pool_rng.uniform_index(space.total));
            pool.assign(chosen.begin(), chosen.end());
        }

        Eigen::MatrixXd pool_coords(Eigen::Index(pool.size()), dwi);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            auto [x, y] = space.at(pool[i]);
            pool_coords.row(Eigen::Index(i)) = space.coords(x, y);
        }
        const PredictResult pred = model.predict(pool_coords);
        std::vector<double> f(pool.size());
        double total = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const double s = std::sqrt(std::max(pred.variance[Eigen::Index(i)], 0.0));
            const double p = s > 0.0 ? normal_cdf((best->mean() - pred.mean[Eigen::Index(i)]) / s)
                                     : (pred.mean[Eigen::Index(i)] < best->mean() ? 1.0 : 0.0);
            f[i] = p;
            total += p;
        }
        if (total <= 0.0) std::fill(f.begin(), f.end(), 1.0 / double(pool.size()));

        RngStream draw_rng = rng.substream(0x77647261).substream(std::uint64_t(iteration));
        const auto draws = categorical_sample(f, cfg.m, draw_rng);
        std::set<std::size_t> batch;
        for (std::size_t d : draws) batch.insert(pool[d]);
        for (std::size_t g : batch)
            if (!simulate_at(g)) break;
    }

    rec.spent = meter.spent();
    if (!rec.trace.empty()) {
        rec.xstar = rec.trace.back().xhat;
        rec.gbar_star = rec.trace.back().gbar;
    } else {
        rec.xstar = problem.first_stage_at(0);
        rec.truncated = true;
    }
    return rec;
}

} // namespace tsopt
