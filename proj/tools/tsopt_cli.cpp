// Command-line driver: run experiments, evaluate the true objective at a
// point, and sweep one config key across values.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tsopt/experiment.hpp"

namespace {

tsopt::ExperimentConfig load_from_file(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw tsopt::ConfigError("cannot open config file: " + path);
    return tsopt::load_config(in);
}

void print_summary(const tsopt::ExperimentConfig& cfg, const tsopt::SummaryStats& st) {
    std::cout << "problem=" << cfg.problem_name << " algo=" << cfg.algo
              << " C=" << cfg.algo_cfg.budget << " reps=" << st.reps << "\n";
    for (std::size_t c = 0; c < st.mean_x.size(); ++c) {
        std::cout << "  xstar[" << c << "]: mean=" << st.mean_x[c] << " sd=" << st.sd_x[c]
                  << " se=" << st.se_x[c] << "\n";
    }
    std::cout << "  G(xstar): mean=" << st.mean_g << " sd=" << st.sd_g << " se=" << st.se_g
              << "\n";
    if (std::isfinite(st.mean_re))
        std::cout << "  rE%: mean=" << st.mean_re << " sd=" << st.sd_re << "\n";
    if (st.rdelta_g) std::cout << "  rdeltaG%: " << *st.rdelta_g << "\n";
}

struct RunOverrides {
    std::string config_path;
    std::string problem;
    std::string algo;
    std::int64_t budget = -1;
    std::int64_t reps = -1;
    std::int64_t seed = -1;
    std::string out;

    tsopt::ExperimentConfig resolve() const {
        tsopt::ExperimentConfig cfg = load_from_file(config_path);
        if (!problem.empty()) cfg.problem_name = problem;
        if (!algo.empty()) cfg.algo = algo;
        if (budget >= 0) cfg.algo_cfg.budget = budget;
        if (reps >= 0) cfg.reps = std::size_t(reps);
        if (seed >= 0) cfg.seed = std::uint64_t(seed);
        if (!out.empty()) cfg.out_dir = out;
        return cfg;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage simulation-optimization benchmark harness"};
    app.require_subcommand(1);

    RunOverrides run_args;
    auto* run = app.add_subcommand("run", "run an experiment of macro-replications");
    run->add_option("--config", run_args.config_path, "flat key=value config file");
    run->add_option("--problem", run_args.problem, "problem name override");
    run->add_option("--algo", run_args.algo, "algorithm override: ours|random-saa|dlh-gps");
    run->add_option("--budget", run_args.budget, "simulation budget C override");
    run->add_option("--reps", run_args.reps, "macro-replication count override");
    run->add_option("--seed", run_args.seed, "base seed override");
    run->add_option("--out", run_args.out, "output directory for CSV artifacts");

    std::string eval_problem = "linear";
    double eval_x = 0.0;
    std::int64_t eval_nb = 5000;
    std::int64_t eval_seed = 1;
    double eval_sigma = -1.0;
    auto* eval = app.add_subcommand("evaluate", "oracle-evaluate the true objective at x");
    eval->add_option("--problem", eval_problem, "problem name")->required();
    eval->add_option("--x", eval_x, "first-stage decision value")->required();
    eval->add_option("--nb", eval_nb, "oracle scenario count N_B");
    eval->add_option("--seed", eval_seed, "oracle seed");
    eval->add_option("--sigma", eval_sigma, "demand sd override (supply chain)");

    RunOverrides sweep_args;
    std::string sweep_param;
    std::string sweep_values;
    auto* sweep = app.add_subcommand("sweep", "run the experiment across values of one key");
    sweep->add_option("--config", sweep_args.config_path, "flat key=value config file");
    sweep->add_option("--param", sweep_param, "config key to sweep, e.g. algo.alpha0")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--problem", sweep_args.problem, "problem name override");
    sweep->add_option("--algo", sweep_args.algo, "algorithm override");
    sweep->add_option("--budget", sweep_args.budget, "simulation budget C override");
    sweep->add_option("--reps", sweep_args.reps, "macro-replication count override");
    sweep->add_option("--seed", sweep_args.seed, "base seed override");
    sweep->add_option("--out", sweep_args.out, "output directory root");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const tsopt::ExperimentConfig cfg = run_args.resolve();
            const auto result = tsopt::run_experiment(cfg);
            print_summary(cfg, result.summary);
            return 0;
        }

        if (eval->parsed()) {
            tsopt::ParamMap params;
            if (eval_sigma >= 0.0) params["sigma"] = eval_sigma;
            const auto problem = tsopt::make_problem(eval_problem, params);
            // snap to the nearest grid point
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < problem->first_stage_size(); ++i) {
                const double d = std::abs(problem->first_stage_at(i).coords[0] - eval_x);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            const auto x = problem->first_stage_at(best);
            tsopt::RngStream rng(std::uint64_t(eval_seed), 0);
            const double g =
                tsopt::evaluate_true_objective(*problem, x, std::size_t(eval_nb), rng);
            std::cout << "x=" << x.coords[0] << " G=" << g << " (N_B=" << eval_nb << ")\n";
            return 0;
        }

        // sweep
        std::vector<std::string> values;
        {
            std::stringstream ss(sweep_values);
            std::string item;
            while (std::getline(ss, item, ',')) values.push_back(item);
        }
        if (values.empty()) throw tsopt::ConfigError("sweep: no values given");

        std::ostringstream table;
        table << "param,value,mean_x_0,sd_x_0,mean_gtrue,sd_gtrue,mean_re\n";
        for (const std::string& v : values) {
            tsopt::ExperimentConfig cfg = sweep_args.resolve();
            tsopt::apply_config_key(cfg, sweep_param, v);
            if (!sweep_args.out.empty())
                cfg.out_dir = (std::filesystem::path(sweep_args.out) / (sweep_param + "=" + v))
                                  .string();
            const auto result = tsopt::run_experiment(cfg);
            std::cout << sweep_param << " = " << v << ":\n";
            print_summary(cfg, result.summary);
            table << sweep_param << ',' << v << ',' << result.summary.mean_x[0] << ','
                  << result.summary.sd_x[0] << ',' << result.summary.mean_g << ','
                  << result.summary.sd_g << ',' << result.summary.mean_re << '\n';
        }
        if (!sweep_args.out.empty()) {
            std::filesystem::create_directories(sweep_args.out);
            std::ofstream f(std::filesystem::path(sweep_args.out) / "sweep_summary.csv");
            f << table.str();
        }
        return 0;
    } catch (const tsopt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
