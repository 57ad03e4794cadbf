#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cqb/harness.hpp"

using namespace cqb;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p.string();
}

ExperimentConfig tiny_config(const std::string& out) {
    ExperimentConfig cfg;
    cfg.T = 30;
    cfg.n_reps = 2;
    cfg.instance.d = 2;
    cfg.instance.K = 2;
    cfg.instance.lambda = 0.4;
    cfg.instance.slack = 0.05;
    cfg.instance.context.d = 2;
    cfg.instance.context.normalize = true;
    cfg.instance.cert_samples = 500;
    cfg.policies = {PolicyKind::CqbOpt, PolicyKind::Random};
    cfg.out_dir = out;
    return cfg;
}

} // namespace

TEST_CASE("config file parsing and precedence") {
    const auto path = std::filesystem::temp_directory_path() / "cqb_test.cfg";
    {
        std::ofstream out(path);
        out << "# comment\n"
            << "T = 123\n"
            << "lambda = 0.55   # trailing comment\n"
            << "policies = cqb_eps, random\n"
            << "tau_mode = explicit\n"
            << "tau = 17\n"
            << "normalize = on\n"
            << "sweep_eps = 0.05, 0.1, 0.15\n";
    }
    ExperimentConfig cfg;
    apply_config_entries(cfg, parse_config_file(path.string()));
    CHECK(cfg.T == 123);
    CHECK(cfg.instance.lambda == 0.55);
    CHECK(cfg.policies.size() == 2);
    CHECK(cfg.policies[0] == PolicyKind::CqbEps);
    CHECK(cfg.tau_mode == TauMode::Explicit);
    CHECK(cfg.tau == 17);
    CHECK(cfg.instance.context.normalize);
    CHECK(cfg.sweep_eps.size() == 3);

    // CLI overrides win over the file.
    apply_config_entries(cfg, {{"T", "77"}});
    CHECK(cfg.T == 77);

    SUBCASE("unknown keys are reported by name") {
        CHECK_THROWS_WITH_AS(apply_config_entries(cfg, {{"bogus_key", "1"}}),
                             doctest::Contains("bogus_key"), ConfigError);
    }
    SUBCASE("type errors name the field") {
        CHECK_THROWS_WITH_AS(apply_config_entries(cfg, {{"T", "abc"}}),
                             doctest::Contains("T"), ConfigError);
        CHECK_THROWS_WITH_AS(apply_config_entries(cfg, {{"normalize", "maybe"}}),
                             doctest::Contains("normalize"), ConfigError);
    }
}

TEST_CASE("config validation reports field paths") {
    ExperimentConfig cfg;
    cfg.T = 1;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("T"), ConfigError);
    cfg.T = 100;
    cfg.instance.kappa = 2;
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("kappa"), ConfigError);
    cfg.instance.kappa = 10;
    cfg.policies.clear();
    CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("policies"), ConfigError);
}

TEST_CASE("sweep expansion") {
    ExperimentConfig cfg;
    SUBCASE("no axes degenerates to the base point") {
        const auto pts = expand_sweep(cfg);
        REQUIRE(pts.size() == 1);
        CHECK(pts[0].key == "base");
    }
    SUBCASE("eps axis relabels slack per point") {
        cfg.sweep_eps = {0.05, 0.1, 0.15};
        const auto pts = expand_sweep(cfg);
        REQUIRE(pts.size() == 3);
        CHECK(pts[0].key == "eps=0.05");
        CHECK(pts[0].instance.slack == 0.05);
        CHECK(pts[2].instance.slack == 0.15);
    }
    SUBCASE("K axis produces one group per value") {
        cfg.sweep_K = {3, 5, 7, 9};
        const auto pts = expand_sweep(cfg);
        REQUIRE(pts.size() == 4);
        CHECK(pts[1].key == "K=5");
        CHECK(pts[3].instance.K == 9);
    }
    SUBCASE("d axis adjusts the context dimension too") {
        cfg.sweep_d = {3, 10};
        const auto pts = expand_sweep(cfg);
        REQUIRE(pts.size() == 2);
        CHECK(pts[1].instance.d == 10);
        CHECK(pts[1].instance.context.d == 10);
    }
}

TEST_CASE("run_experiment writes schema-stable, deterministic outputs") {
    const auto out1 = temp_dir("cqb_exp1");
    const auto out2 = temp_dir("cqb_exp2");
    auto cfg = tiny_config(out1);
    const auto res1 = run_experiment(cfg);
    CHECK(res1.ok());
    cfg.out_dir = out2;
    const auto res2 = run_experiment(cfg);

    const std::string curves = slurp(res1.curves_path);
    CHECK(curves.rfind("policy,sweep_key,rep,t,Q,Q_star\n", 0) == 0);
    const std::string summary = slurp(res1.summary_path);
    CHECK(summary.rfind("policy,sweep_key,mean_final_Q,std_final_Q,mean_regret,bad_rounds,"
                        "elliptic_lhs,elliptic_rhs\n", 0) == 0);

    // byte-identical CSVs across invocations
    CHECK(curves == slurp(res2.curves_path));
    CHECK(summary == slurp(res2.summary_path));

    // 2 policies x 2 reps x T rounds plus the header
    int lines = 0;
    for (char c : curves) lines += c == '\n';
    CHECK(lines == 1 + 2 * 2 * cfg.T);

    CHECK(slurp(res1.meta_path).find("\"type\":\"config\"") != std::string::npos);
    CHECK(slurp(res1.meta_path).find("estimator_snapshot") != std::string::npos);
}

TEST_CASE("run_experiment: minimal single-rep run does not crash") {
    auto cfg = tiny_config(temp_dir("cqb_exp_min"));
    cfg.T = 2;
    cfg.n_reps = 1;
    cfg.policies = {PolicyKind::Random};
    const auto res = run_experiment(cfg);
    CHECK(res.ok());
    REQUIRE(res.summaries.size() == 1);
    CHECK(res.summaries[0].mean_final_q >= 0);
}

TEST_CASE("run_experiment: worker count does not change results") {
    auto cfg = tiny_config(temp_dir("cqb_exp_w1"));
    const auto res1 = run_experiment(cfg);
    cfg.out_dir = temp_dir("cqb_exp_w4");
    cfg.workers = 4;
    const auto res4 = run_experiment(cfg);
    CHECK(slurp(res1.curves_path) == slurp(res4.curves_path));
    CHECK(slurp(res1.summary_path) == slurp(res4.summary_path));
}

TEST_CASE("run_experiment: infeasible sweep points are skipped with a warning") {
    auto cfg = tiny_config(temp_dir("cqb_exp_skip"));
    cfg.sweep_eps = {0.05, 0.9};  // lambda=0.4: mu >= 1.3 is impossible
    cfg.instance.cert_budget = 30;
    cfg.instance.cert_samples = 50;
    const auto res = run_experiment(cfg);
    CHECK_FALSE(res.ok());
    REQUIRE(res.failures.size() == 1);
    CHECK(res.failures[0].find("eps=0.9") != std::string::npos);
    // the feasible point still produced summaries for both policies
    CHECK(res.summaries.size() == 2);
}

TEST_CASE("psi_check: clean small grid") {
    ExperimentConfig cfg;
    cfg.psi_samples = 150;
    cfg.psi_T_min = 20;
    cfg.psi_T_max = 60;
    cfg.policies = {PolicyKind::CqbOpt, PolicyKind::Random, PolicyKind::QThs};
    cfg.out_dir = temp_dir("cqb_psi");
    const auto res = psi_check(cfg);
    CHECK(res.samples == 150);
    CHECK(res.violations == 0);
    for (const auto& [event, by_value] : res.histogram) {
        for (const auto& [psi, count] : by_value) {
            CHECK(psi >= -1);
            CHECK(psi <= 1);
            CHECK(count > 0);
        }
    }
    const std::string csv = slurp(res.csv_path);
    CHECK(csv.rfind("t,T,seed,psi,divergence_event\n", 0) == 0);
}

TEST_CASE("psi_check: the oracle policy never produces a nonzero psi") {
    ExperimentConfig cfg;
    cfg.psi_samples = 120;
    cfg.psi_T_min = 20;
    cfg.psi_T_max = 50;
    cfg.policies = {PolicyKind::Optimal};
    cfg.out_dir = temp_dir("cqb_psi_opt");
    const auto res = psi_check(cfg);
    CHECK(res.violations == 0);
    for (const auto& [event, by_value] : res.histogram) {
        for (const auto& [psi, count] : by_value) {
            CHECK(psi == 0);
            (void)count;
        }
    }
}

TEST_CASE("psi_check: exhaustive mode sweeps every switch round of short horizons") {
    ExperimentConfig cfg;
    cfg.psi_samples = 100;
    cfg.psi_T_min = 20;
    cfg.psi_T_max = 200;  // clamped to 50 by the exhaustive mode
    cfg.psi_exhaustive = true;
    cfg.policies = {PolicyKind::Random};
    cfg.out_dir = (std::filesystem::temp_directory_path() / "cqb_psi_ex").string();
    const auto res = psi_check(cfg);
    CHECK(res.samples == 100);
    CHECK(res.violations == 0);
    // consecutive switch rounds 1,2,3,... appear in the report
    const std::string csv = slurp(res.csv_path);
    CHECK(csv.find("\n1,") != std::string::npos);
    CHECK(csv.find("\n2,") != std::string::npos);
    CHECK(csv.find("\n3,") != std::string::npos);
}
