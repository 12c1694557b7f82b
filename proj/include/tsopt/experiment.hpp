#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tsopt/baselines.hpp"
#include "tsopt/global_search.hpp"
#include "tsopt/oracle.hpp"
#include "tsopt/problems/registry.hpp"

namespace tsopt {

/// Relative estimation error |Gbar - G| / |G| in percent.
inline double compute_rE(double gbar_hat, double g_true) {
    if (g_true == 0.0) throw ZeroDenominator("compute_rE: true objective is zero");
    return std::abs(gbar_hat - g_true) / std::abs(g_true) * 100.0;
}

/// Signed relative optimality difference (mean - G*) / G* in percent.
inline double compute_rdeltaG(double mean_g_hat, double g_star) {
    if (g_star == 0.0) throw ZeroDenominator("compute_rdeltaG: reference optimum is zero");
    return (mean_g_hat - g_star) / g_star * 100.0;
}

/// Everything one experiment needs: problem, algorithm, budget, replication
/// plan, oracle size, and output location.
struct ExperimentConfig {
    std::string problem_name = "linear";
    ParamMap problem_params;

    std::string algo = "ours";  // ours | random-saa | dlh-gps
    AlgoConfig algo_cfg;
    RandomSaaConfig saa_cfg;
    DlhGpsConfig gps_cfg;
    bool gps_sigma_explicit = false;

    std::size_t reps = 100;               // n_m
    std::size_t oracle_scenarios = 5000;  // N_B
    std::uint64_t seed = 20240601;
    std::string out_dir;                  // empty: nothing written
    std::size_t parallelism = 0;          // 0: hardware concurrency
    int trace_true_g = -1;                // -1 auto, 0 off, 1 on
    std::optional<double> gstar;          // reference optimum for rdeltaG

    void validate() const {
        if (reps < 1) throw ConfigError("run.reps must be >= 1");
        if (oracle_scenarios < 1) throw ConfigError("run.nb must be >= 1");
        if (algo != "ours" && algo != "random-saa" && algo != "dlh-gps")
            throw ConfigError("unknown algorithm: " + algo);
        algo_cfg.validate();
    }

    bool trace_true_enabled() const {
        if (trace_true_g >= 0) return trace_true_g > 0;
        return problem_name != "supplychain-ext";
    }

    double gps_sigma_default() const {
        return problem_name == "linear" ? 5.0 : 15.0;
    }
};

/// Flat dotted key-value configuration text: one `key = value` per line,
/// '#' starts a comment.
inline std::map<std::string, std::string> parse_config_text(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        kv[key] = value;
    }
    return kv;
}

namespace detail {

inline double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": not a number: " + value);
    }
}

inline std::int64_t to_int(const std::string& key, const std::string& value) {
    const double v = to_double(key, value);
    if (v != std::floor(v)) throw ConfigError("config key " + key + ": expected an integer");
    return std::int64_t(v);
}

} // namespace detail

/// Apply one dotted key to the experiment configuration.
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
    using detail::to_double;
    using detail::to_int;
    if (key == "problem.name") {
        cfg.problem_name = value;
    } else if (key.rfind("problem.", 0) == 0) {
        cfg.problem_params[key.substr(8)] = to_double(key, value);
    } else if (key == "algo.name") {
        cfg.algo = value;
    } else if (key == "algo.budget") {
        cfg.algo_cfg.budget = to_int(key, value);
    } else if (key == "algo.alpha0") {
        cfg.algo_cfg.alpha0 = to_double(key, value);
    } else if (key == "algo.n0") {
        cfg.algo_cfg.n0 = std::size_t(to_int(key, value));
    } else if (key == "algo.growth") {
        cfg.algo_cfg.growth = to_double(key, value);
    } else if (key == "algo.new_points") {
        cfg.algo_cfg.new_points = std::size_t(to_int(key, value));
    } else if (key == "algo.bootstrap") {
        cfg.algo_cfg.bootstrap_resamples = int(to_int(key, value));
    } else if (key == "algo.gap_paths") {
        cfg.algo_cfg.gap_paths = int(to_int(key, value));
    } else if (key == "algo.n1") {
        cfg.saa_cfg.n1 = std::size_t(to_int(key, value));
    } else if (key == "algo.n2") {
        cfg.saa_cfg.n2 = std::size_t(to_int(key, value));
    } else if (key == "algo.m") {
        cfg.gps_cfg.m = std::size_t(to_int(key, value));
    } else if (key == "algo.r") {
        cfg.gps_cfg.r = std::size_t(to_int(key, value));
    } else if (key == "algo.sigma_gps") {
        cfg.gps_cfg.sigma_gps = to_double(key, value);
        cfg.gps_sigma_explicit = true;
    } else if (key == "run.reps") {
        cfg.reps = std::size_t(to_int(key, value));
    } else if (key == "run.nb") {
        cfg.oracle_scenarios = std::size_t(to_int(key, value));
    } else if (key == "run.seed") {
        cfg.seed = std::uint64_t(to_int(key, value));
    } else if (key == "run.out_dir") {
        cfg.out_dir = value;
    } else if (key == "run.parallelism") {
        cfg.parallelism = std::size_t(to_int(key, value));
    } else if (key == "run.trace_true") {
        cfg.trace_true_g = int(to_int(key, value));
    } else if (key == "report.gstar") {
        cfg.gstar = to_double(key, value);
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

inline ExperimentConfig load_config(std::istream& in) {
    ExperimentConfig cfg;
    for (const auto& [k, v] : parse_config_text(in)) apply_config_key(cfg, k, v);
    return cfg;
}

/// One macro-replication's reportable outcome.
struct RepResult {
    std::size_t rep_id = 0;
    std::vector<double> xstar;
    double gbar = std::numeric_limits<double>::quiet_NaN();
    double gtrue = std::numeric_limits<double>::quiet_NaN();
    std::int64_t spent = 0;
    std::int64_t wallclock_ms = 0;
    bool truncated = false;
    std::vector<IterationRecord> trace;
    std::vector<double> trace_gtrue;  // aligned with trace when enabled
};

struct SummaryStats {
    std::size_t reps = 0;
    std::vector<double> mean_x, sd_x, se_x;
    double mean_g = 0.0, sd_g = 0.0, se_g = 0.0;
    double mean_gbar = 0.0;
    double mean_re = std::numeric_limits<double>::quiet_NaN();
    double sd_re = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> rdelta_g;
};

struct ExperimentResult {
    std::vector<RepResult> reps;
    SummaryStats summary;
};

namespace detail {

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
    MeanSd out;
    if (v.empty()) return out;
    for (double x : v) out.mean += x;
    out.mean /= double(v.size());
    if (v.size() >= 2) {
        double acc = 0.0;
        for (double x : v) acc += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(acc / double(v.size() - 1));
    }
    return out;
}

/// Deterministic cache of the true objective per first-stage index; the
/// oracle stream is keyed by the index, so values are identical no matter
/// which replication asks first.
class TrueObjectiveCache {
public:
    TrueObjectiveCache(const TwoStageProblem& problem, std::size_t n_scenarios,
                       std::uint64_t seed)
        : problem_(problem), n_(n_scenarios), seed_(seed) {}

    double at(std::size_t x_index) {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(x_index);
            if (it != cache_.end()) return it->second;
        }
        RngStream rng(seed_, 0);
        RngStream oracle = rng.substream(0x6f7261636c65).substream(x_index);
        const double g =
            evaluate_true_objective(problem_, problem_.first_stage_at(x_index), n_, oracle);
        std::lock_guard<std::mutex> lock(mutex_);
        cache_.emplace(x_index, g);
        return g;
    }

private:
    const TwoStageProblem& problem_;
    std::size_t n_;
    std::uint64_t seed_;
    std::mutex mutex_;
    std::map<std::size_t, double> cache_;
};

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

/// Run one macro-replication of the configured algorithm.
inline RunRecord run_one_rep(const TwoStageProblem& problem, const ExperimentConfig& cfg,
                             RngStream& rng) {
    if (cfg.algo == "ours") {
        return run_algorithm1(problem, cfg.algo_cfg, rng);
    }
    if (cfg.algo == "random-saa") {
        BudgetMeter meter(cfg.algo_cfg.budget);
        return run_random_saa(problem, cfg.saa_cfg, meter, rng);
    }
    BudgetMeter meter(cfg.algo_cfg.budget);
    DlhGpsConfig gps = cfg.gps_cfg;
    if (!cfg.gps_sigma_explicit) gps.sigma_gps = cfg.gps_sigma_default();
    return run_dlh_gps(problem, gps, meter, rng);
}

/// Run the full experiment: `reps` independent replications with streams
/// keyed by replication id, optional CSV artifacts, and summary statistics.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto problem = make_problem(cfg.problem_name, cfg.problem_params);
    detail::TrueObjectiveCache oracle(*problem, cfg.oracle_scenarios, cfg.seed);
    const bool trace_true = cfg.trace_true_enabled();

    ExperimentResult result;
    result.reps.resize(cfg.reps);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t rep = next.fetch_add(1);
            if (rep >= cfg.reps) return;
            const auto t0 = std::chrono::steady_clock::now();
            RngStream rng(cfg.seed, rep + 1);
            const RunRecord rec = run_one_rep(*problem, cfg, rng);
            const auto t1 = std::chrono::steady_clock::now();

            RepResult& out = result.reps[rep];
            out.rep_id = rep;
            out.xstar = rec.xstar.coords;
            out.gbar = rec.gbar_star;
            out.gtrue = oracle.at(rec.xstar.index);
            out.spent = rec.spent;
            out.wallclock_ms =
                std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
            out.truncated = rec.truncated;
            out.trace = rec.trace;
            if (trace_true) {
                out.trace_gtrue.reserve(rec.trace.size());
                for (const auto& ir : rec.trace) out.trace_gtrue.push_back(oracle.at(ir.xhat.index));
            }
        }
    };

    std::size_t degree = cfg.parallelism > 0 ? cfg.parallelism
                                             : std::max(1u, std::thread::hardware_concurrency());
    degree = std::min(degree, cfg.reps);
    if (degree <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < degree; ++t) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    // ---- summary ----
    SummaryStats& st = result.summary;
    st.reps = cfg.reps;
    const std::size_t dx = problem->first_stage_dim();
    st.mean_x.assign(dx, 0.0);
    st.sd_x.assign(dx, 0.0);
    st.se_x.assign(dx, 0.0);
    for (std::size_t c = 0; c < dx; ++c) {
        std::vector<double> xs;
        for (const auto& r : result.reps) xs.push_back(r.xstar[c]);
        const auto ms = detail::mean_sd(xs);
        st.mean_x[c] = ms.mean;
        st.sd_x[c] = ms.sd;
        st.se_x[c] = ms.sd / std::sqrt(double(cfg.reps));
    }
    {
        std::vector<double> gs, gbars;
        for (const auto& r : result.reps) {
            gs.push_back(r.gtrue);
            gbars.push_back(r.gbar);
        }
        const auto ms = detail::mean_sd(gs);
        st.mean_g = ms.mean;
        st.sd_g = ms.sd;
        st.se_g = ms.sd / std::sqrt(double(cfg.reps));
        st.mean_gbar = detail::mean_sd(gbars).mean;
    }
    {
        std::vector<double> res;
        for (const auto& r : result.reps)
            if (r.gtrue != 0.0 && std::isfinite(r.gbar)) res.push_back(compute_rE(r.gbar, r.gtrue));
        if (!res.empty()) {
            const auto ms = detail::mean_sd(res);
            st.mean_re = ms.mean;
            st.sd_re = ms.sd;
        }
    }
    if (cfg.gstar && *cfg.gstar != 0.0) st.rdelta_g = compute_rdeltaG(st.mean_g, *cfg.gstar);

    // ---- artifacts ----
    if (!cfg.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.out_dir);
        const std::size_t dxc = problem->first_stage_dim();

        {
            std::ofstream reps_csv(fs::path(cfg.out_dir) / "reps.csv");
            reps_csv << "rep_id";
            for (std::size_t c = 0; c < dxc; ++c) reps_csv << ",xstar_" << c;
            reps_csv << ",gbar,gtrue,spent,wallclock_ms\n";
            for (const auto& r : result.reps) {
                reps_csv << r.rep_id;
                for (double v : r.xstar) reps_csv << ',' << detail::fmt_double(v);
                reps_csv << ',' << detail::fmt_double(r.gbar) << ',' << detail::fmt_double(r.gtrue)
                         << ',' << r.spent << ',' << r.wallclock_ms << '\n';
            }
        }
        {
            std::ofstream summary_csv(fs::path(cfg.out_dir) / "summary.csv");
            summary_csv << "reps";
            for (std::size_t c = 0; c < dxc; ++c)
                summary_csv << ",mean_x_" << c << ",sd_x_" << c << ",se_x_" << c;
            summary_csv << ",mean_gtrue,sd_gtrue,se_gtrue,mean_gbar,mean_re,sd_re,rdelta_g\n";
            summary_csv << st.reps;
            for (std::size_t c = 0; c < dxc; ++c)
                summary_csv << ',' << detail::fmt_double(st.mean_x[c]) << ','
                            << detail::fmt_double(st.sd_x[c]) << ','
                            << detail::fmt_double(st.se_x[c]);
            summary_csv << ',' << detail::fmt_double(st.mean_g) << ','
                        << detail::fmt_double(st.sd_g) << ',' << detail::fmt_double(st.se_g) << ','
                        << detail::fmt_double(st.mean_gbar) << ','
                        << detail::fmt_double(st.mean_re) << ',' << detail::fmt_double(st.sd_re)
                        << ','
                        << (st.rdelta_g ? detail::fmt_double(*st.rdelta_g) : std::string("nan"))
                        << '\n';
        }
        for (const auto& r : result.reps) {
            std::ofstream trace_csv(fs::path(cfg.out_dir) /
                                    ("trace_rep" + std::to_string(r.rep_id) + ".csv"));
            trace_csv << "iter,spent";
            for (std::size_t c = 0; c < dxc; ++c) trace_csv << ",xhat_" << c;
            trace_csv << ",gbar_incumbent,gtrue_incumbent\n";
            for (std::size_t i = 0; i < r.trace.size(); ++i) {
                const auto& ir = r.trace[i];
                trace_csv << ir.iteration << ',' << ir.spent;
                for (double v : ir.xhat.coords) trace_csv << ',' << detail::fmt_double(v);
                trace_csv << ',' << detail::fmt_double(ir.gbar) << ','
                          << (i < r.trace_gtrue.size() ? detail::fmt_double(r.trace_gtrue[i])
                                                       : std::string("nan"))
                          << '\n';
            }
        }
    }
    return result;
}

} // namespace tsopt
