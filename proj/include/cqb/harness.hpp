#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cqb/coupling.hpp"
#include "cqb/env.hpp"
#include "cqb/policies.hpp"

namespace cqb {

// Flat key-value experiment configuration; file grammar is `key = value`
// with `#` comments, lists comma-separated. CLI flags override file values.
struct ExperimentConfig {
    int T = 5000;
    int n_reps = 10;
    InstanceConfig instance;
    std::vector<PolicyKind> policies{PolicyKind::CqbEps, PolicyKind::CqbOpt,
                                     PolicyKind::Random, PolicyKind::Optimal};
    // Shared policy knobs, applied to each selected policy.
    double eps_rate = -1.0;
    TauMode tau_mode = TauMode::Practical;
    long long tau = 0;
    double tau_C = 3e-4;
    double tau_C3 = 1.0;
    double ts_R = 0.25;
    double delta = -1.0;

    std::uint64_t master_seed = 1;
    std::vector<double> sweep_eps;
    std::vector<int> sweep_K;
    std::vector<int> sweep_d;
    std::string out_dir = "out";
    int workers = 1;
    bool assert_elliptic = true;
    bool assert_bad_round = true;

    // psi-check grid
    int psi_samples = 10000;
    int psi_T_min = 50;
    int psi_T_max = 200;
    int psi_d_max = 3;
    int psi_K_max = 3;
    bool psi_exhaustive = false;  // sweep every switch round; clamps T to <= 50

    PolicyConfig policy_config(PolicyKind kind) const;
};

std::map<std::string, std::string> parse_config_file(const std::string& path);
void apply_config_entries(ExperimentConfig& cfg,
                          const std::map<std::string, std::string>& entries);
void validate_config(const ExperimentConfig& cfg);

// One sweep point: the base instance config with one axis value substituted.
struct SweepPoint {
    std::string key;  // "base" or e.g. "eps=0.05;K=3"
    InstanceConfig instance;
    double slack_override;  // equals instance.slack; kept for labeling
};

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg);

struct PolicySummary {
    std::string sweep_key;
    PolicyKind policy;
    double mean_final_q = 0;
    double std_final_q = 0;
    double mean_regret = 0;
    double mean_bad_rounds = 0;
    double max_elliptic_lhs = 0;
    double elliptic_rhs = 0;
};

struct ExperimentResult {
    std::vector<PolicySummary> summaries;
    std::vector<std::string> failures;   // assertion breaches / skipped points
    std::string curves_path;
    std::string summary_path;
    std::string meta_path;
    bool ok() const { return failures.empty(); }
};

// Runs every (sweep point, policy, rep) and writes curves.csv, summary.csv
// and meta.jsonl under cfg.out_dir. Derived seeds depend on the rep only, so
// sweep points share common random numbers. Deterministic given
// (config, master_seed).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct PsiCheckResult {
    long long samples = 0;
    long long violations = 0;
    std::map<std::string, std::map<int, long long>> histogram;  // event -> psi -> count
    std::string csv_path;
    bool ok() const { return violations == 0; }
};

// Samples psi(t, T) over a randomized small-scale grid and verifies the
// structural range and per-event refinement on every draw.
PsiCheckResult psi_check(const ExperimentConfig& cfg);

} // namespace cqb
