#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "cqb/harness.hpp"

namespace {

struct CliOverrides {
    std::string config_path;
    std::string seed, T, reps, policies, out, workers;
    bool assert_all = false;
};

void add_common(CLI::App* cmd, CliOverrides& ov) {
    cmd->add_option("--config", ov.config_path, "config file (key = value lines)");
    cmd->add_option("--seed", ov.seed, "master seed (u64)");
    cmd->add_option("--T", ov.T, "horizon");
    cmd->add_option("--reps", ov.reps, "replications per point");
    cmd->add_option("--policies", ov.policies, "comma-separated policy list");
    cmd->add_option("--out", ov.out, "output directory");
    cmd->add_option("--workers", ov.workers, "concurrent workers");
    cmd->add_flag("--assert-all", ov.assert_all, "enable every runtime assertion");
}

cqb::ExperimentConfig build_config(const CliOverrides& ov,
                                   const std::map<std::string, std::string>& extra = {}) {
    cqb::ExperimentConfig cfg;
    if (!ov.config_path.empty()) {
        cqb::apply_config_entries(cfg, cqb::parse_config_file(ov.config_path));
    }
    std::map<std::string, std::string> cli;
    if (!ov.seed.empty()) cli["seed"] = ov.seed;
    if (!ov.T.empty()) cli["T"] = ov.T;
    if (!ov.reps.empty()) cli["reps"] = ov.reps;
    if (!ov.policies.empty()) cli["policies"] = ov.policies;
    if (!ov.out.empty()) cli["out"] = ov.out;
    if (!ov.workers.empty()) cli["workers"] = ov.workers;
    for (const auto& [k, v] : extra) cli[k] = v;
    cqb::apply_config_entries(cfg, cli);
    if (ov.assert_all) {
        cfg.assert_elliptic = true;
        cfg.assert_bad_round = true;
    }
    return cfg;
}

int do_run(const cqb::ExperimentConfig& cfg) {
    const auto result = cqb::run_experiment(cfg);
    std::printf("curves : %s\nsummary: %s\nmeta   : %s\n", result.curves_path.c_str(),
                result.summary_path.c_str(), result.meta_path.c_str());
    for (const auto& s : result.summaries) {
        std::printf("%-12s %-14s mean_final_Q=%-9.3f mean_regret=%-9.3f bad_rounds=%.1f\n",
                    cqb::to_string(s.policy), s.sweep_key.c_str(), s.mean_final_q, s.mean_regret,
                    s.mean_bad_rounds);
    }
    for (const auto& f : result.failures) std::fprintf(stderr, "failure: %s\n", f.c_str());
    return result.ok() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"contextual queueing bandit simulator"};
    app.require_subcommand(1);

    CliOverrides run_ov, sweep_ov, psi_ov, val_ov;
    std::string psi_samples;

    auto* run_cmd = app.add_subcommand("run", "replicated coupled runs at one configuration");
    add_common(run_cmd, run_ov);

    auto* sweep_cmd = app.add_subcommand("sweep", "cross-product sweep over eps/K/d axes");
    add_common(sweep_cmd, sweep_ov);

    auto* psi_cmd = app.add_subcommand("psi-check", "verify the psi structural range empirically");
    add_common(psi_cmd, psi_ov);
    psi_cmd->add_option("--samples", psi_samples, "number of psi draws");

    auto* val_cmd = app.add_subcommand("validate", "config lint and instance feasibility dry-run");
    add_common(val_cmd, val_ov);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return do_run(build_config(run_ov));
        if (sweep_cmd->parsed()) return do_run(build_config(sweep_ov));
        if (psi_cmd->parsed()) {
            std::map<std::string, std::string> extra;
            if (!psi_samples.empty()) extra["psi_samples"] = psi_samples;
            auto cfg = build_config(psi_ov, extra);
            const auto res = cqb::psi_check(cfg);
            std::printf("psi draws: %lld, violations: %lld\n", res.samples, res.violations);
            for (const auto& [event, by_value] : res.histogram) {
                for (const auto& [psi, count] : by_value) {
                    std::printf("  %-22s psi=%+d  %lld\n", event.c_str(), psi, count);
                }
            }
            std::printf("report: %s\n", res.csv_path.c_str());
            return res.ok() ? 0 : 1;
        }
        if (val_cmd->parsed()) {
            auto cfg = build_config(val_ov);
            cqb::validate_config(cfg);
            const auto points = cqb::expand_sweep(cfg);
            for (const auto& p : points) {
                try {
                    const auto inst = cqb::generate_instance(
                        p.instance, cqb::derive_seed(cfg.master_seed, cqb::seed_salt::kInstance, 0));
                    std::printf("point %-14s feasible: S=%g cert_attempts=%d min_margin=%g\n",
                                p.key.c_str(), inst.S, inst.cert.attempts, inst.cert.min_margin);
                    for (auto kind : cfg.policies) {
                        const auto plan = cqb::resolve_policy(cfg.policy_config(kind), inst, cfg.T);
                        if (kind == cqb::PolicyKind::CqbEps) {
                            std::printf("  %-12s eps_rate=%g delta=%g tau=%d\n", cqb::to_string(kind),
                                        plan.eps_rate, plan.delta, plan.tau);
                        } else {
                            std::printf("  %-12s eps_rate=%g delta=%g\n", cqb::to_string(kind),
                                        plan.eps_rate, plan.delta);
                        }
                    }
                } catch (const std::exception& e) {
                    std::printf("point %-14s INFEASIBLE: %s\n", p.key.c_str(), e.what());
                }
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
