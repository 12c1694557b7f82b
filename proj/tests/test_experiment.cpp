#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsopt/experiment.hpp"

using namespace tsopt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("relative estimation error") {
    REQUIRE(compute_rE(-9.0, -9.0) == 0.0);
    REQUIRE(compute_rE(-8.55, -9.0) == Catch::Approx(5.0));
    REQUIRE_THROWS_AS(compute_rE(1.0, 0.0), ZeroDenominator);
}

TEST_CASE("relative optimality difference") {
    REQUIRE(compute_rdeltaG(12135.0, 10625.0) == Catch::Approx(14.2).margin(0.05));
    REQUIRE(compute_rdeltaG(11905.0, 10625.0) == Catch::Approx(12.0).margin(0.05));
    REQUIRE(compute_rdeltaG(10625.0, 10625.0) == 0.0);
    REQUIRE_THROWS_AS(compute_rdeltaG(1.0, 0.0), ZeroDenominator);
}

TEST_CASE("config text parsing") {
    std::istringstream in(R"(
# experiment
problem.name = supplychain
problem.sigma = 20
algo.name = ours
algo.budget = 1000
algo.alpha0 = 0.1
run.reps = 20
run.seed = 7
report.gstar = 10625
)");
    const ExperimentConfig cfg = load_config(in);
    REQUIRE(cfg.problem_name == "supplychain");
    REQUIRE(cfg.problem_params.at("sigma") == 20.0);
    REQUIRE(cfg.algo == "ours");
    REQUIRE(cfg.algo_cfg.budget == 1000);
    REQUIRE(cfg.reps == 20);
    REQUIRE(cfg.seed == 7);
    REQUIRE(cfg.gstar.has_value());

    std::istringstream bad("nonsense line\n");
    REQUIRE_THROWS_AS(load_config(bad), ConfigError);
    std::istringstream unknown("foo.bar = 1\n");
    REQUIRE_THROWS_AS(load_config(unknown), ConfigError);

    ExperimentConfig invalid;
    invalid.algo = "mystery";
    REQUIRE_THROWS_AS(invalid.validate(), ConfigError);
}

TEST_CASE("single-replication summary is the replication itself") {
    ExperimentConfig cfg;
    cfg.problem_name = "linear";
    cfg.algo = "ours";
    cfg.algo_cfg.budget = 400;
    cfg.reps = 1;
    cfg.oracle_scenarios = 10;
    cfg.seed = 99;
    const auto result = run_experiment(cfg);
    REQUIRE(result.reps.size() == 1);
    REQUIRE(result.summary.mean_x[0] == result.reps[0].xstar[0]);
    REQUIRE(result.summary.sd_x[0] == 0.0);
    REQUIRE(result.summary.se_x[0] == 0.0);
    // linear problem oracle is exact
    REQUIRE(result.reps[0].gtrue == -3.0 * result.reps[0].xstar[0]);
}

TEST_CASE("experiments are deterministic and parallelism-invariant") {
    const fs::path base = fs::temp_directory_path() / "tsopt_test_out";
    fs::remove_all(base);

    auto make_cfg = [&](const std::string& sub, std::size_t degree) {
        ExperimentConfig cfg;
        cfg.problem_name = "linear";
        cfg.algo = "random-saa";
        cfg.algo_cfg.budget = 600;
        cfg.reps = 6;
        cfg.oracle_scenarios = 10;
        cfg.seed = 12345;
        cfg.parallelism = degree;
        cfg.out_dir = (base / sub).string();
        return cfg;
    };

    run_experiment(make_cfg("serial", 1));
    run_experiment(make_cfg("parallel", 3));
    run_experiment(make_cfg("again", 1));

    const std::string serial = slurp(base / "serial" / "reps.csv");
    REQUIRE(serial == slurp(base / "parallel" / "reps.csv"));
    REQUIRE(serial == slurp(base / "again" / "reps.csv"));
    REQUIRE(slurp(base / "serial" / "summary.csv") == slurp(base / "parallel" / "summary.csv"));
    fs::remove_all(base);
}

TEST_CASE("summary statistics reproduce from the per-rep csv") {
    const fs::path base = fs::temp_directory_path() / "tsopt_test_summary";
    fs::remove_all(base);
    ExperimentConfig cfg;
    cfg.problem_name = "linear";
    cfg.algo = "random-saa";
    cfg.algo_cfg.budget = 600;
    cfg.reps = 8;
    cfg.oracle_scenarios = 10;
    cfg.seed = 4242;
    cfg.out_dir = base.string();
    const auto result = run_experiment(cfg);

    // reparse reps.csv and recompute the x-star statistics
    std::ifstream in(base / "reps.csv");
    std::string header;
    std::getline(in, header);
    std::vector<double> xs, gs;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');  // rep_id
        std::getline(ss, field, ',');
        xs.push_back(std::stod(field));
        std::getline(ss, field, ',');  // gbar
        std::getline(ss, field, ',');
        gs.push_back(std::stod(field));
    }
    REQUIRE(xs.size() == 8);
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= 8.0;
    double sd = 0.0;
    for (double v : xs) sd += (v - mean) * (v - mean);
    sd = std::sqrt(sd / 7.0);
    REQUIRE(result.summary.mean_x[0] == mean);
    REQUIRE(result.summary.sd_x[0] == sd);
    REQUIRE(result.summary.se_x[0] == sd / std::sqrt(8.0));

    double gmean = 0.0;
    for (double v : gs) gmean += v;
    gmean /= 8.0;
    REQUIRE(result.summary.mean_g == gmean);
    fs::remove_all(base);
}

TEST_CASE("trace artifacts carry the convergence data") {
    const fs::path base = fs::temp_directory_path() / "tsopt_test_trace";
    fs::remove_all(base);
    ExperimentConfig cfg;
    cfg.problem_name = "linear";
    cfg.algo = "ours";
    cfg.algo_cfg.budget = 500;
    cfg.reps = 2;
    cfg.oracle_scenarios = 10;
    cfg.seed = 31;
    cfg.out_dir = base.string();
    const auto result = run_experiment(cfg);
    REQUIRE(fs::exists(base / "trace_rep0.csv"));
    REQUIRE(fs::exists(base / "trace_rep1.csv"));
    for (const auto& rep : result.reps) {
        REQUIRE(!rep.trace.empty());
        REQUIRE(rep.trace_gtrue.size() == rep.trace.size());
        for (std::size_t i = 0; i < rep.trace.size(); ++i)
            REQUIRE(rep.trace_gtrue[i] == -3.0 * rep.trace[i].xhat.coords[0]);
    }
    fs::remove_all(base);
}
