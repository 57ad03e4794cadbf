#include "cqb/coupling.hpp"

#include <cmath>
#include <string>

#include "cqb/errors.hpp"

namespace cqb {

RunPlan resolve_policy(const PolicyConfig& cfg, const Instance& inst, int T) {
    RunPlan plan;
    plan.cfg = cfg;
    plan.eps_rate = cfg.eps_rate >= 0 ? cfg.eps_rate : 1.0 / std::sqrt(static_cast<double>(T));
    if (cfg.delta >= 0) {
        plan.delta = cfg.delta;
    } else {
        const double Td = static_cast<double>(T);
        plan.delta = cfg.kind == PolicyKind::CqbEps ? 1.0 / (Td * Td) : 1.0 / Td;
    }
    plan.tau = cfg.kind == PolicyKind::CqbEps
                   ? compute_tau(cfg.tau_mode, cfg, plan.eps_rate, inst, T, plan.delta)
                   : 0;
    return plan;
}

bool same_trace(const Trace& a, const Trace& b) {
    if (a.T != b.T || a.final_queue_len != b.final_queue_len ||
        a.records.size() != b.records.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        if (!same_record(a.records[i], b.records[i])) return false;
    }
    return true;
}

double elliptic_bound(const Instance& inst, int t) {
    return 2.0 * inst.K * inst.d *
           std::log1p(static_cast<double>(t) / (inst.d * inst.K * inst.kappa * inst.lambda0));
}

double bad_round_bound(const Instance& inst, int T, double delta) {
    const double beta_T =
        confidence_radius(T, inst.kappa, inst.lambda0, inst.d, inst.K, delta, inst.S);
    return 32.0 * beta_T * beta_T * inst.K * inst.d *
           std::log1p(static_cast<double>(T) / (inst.d * inst.K * inst.kappa * inst.lambda0)) /
           (inst.slack * inst.slack);
}

QueueRunner::QueueRunner(const Instance& inst, const RandomnessStream& rs, RunPlan plan,
                         int switch_round, const RunOptions& opts)
    : inst_(inst), rs_(rs), plan_(std::move(plan)), switch_round_(switch_round), opts_(opts) {
    if (plan_.uses_estimators()) {
        const EstimatorConfig ecfg{inst.d, inst.K, inst.kappa, inst.S, inst.lambda0, plan_.delta};
        pstate_.estimators.reserve(static_cast<std::size_t>(inst.K));
        for (int k = 0; k < inst.K; ++k) pstate_.estimators.emplace_back(k, ecfg);
    }
    if (plan_.uses_mab_stats()) {
        pstate_.mab_pulls.assign(static_cast<std::size_t>(inst.K), 0);
        pstate_.mab_successes.assign(static_cast<std::size_t>(inst.K), 0);
    }
    trace_.policy = plan_.cfg.kind;
    trace_.seed = rs.master_seed();
}

Decision QueueRunner::decide(int t) {
    switch (plan_.cfg.kind) {
        case PolicyKind::CqbEps:
            return select_cqb_eps(pstate_, queue_, t, plan_.tau, rs_);
        case PolicyKind::CqbOpt:
            return select_cqb_opt(pstate_, queue_);
        case PolicyKind::Optimal:
            return select_optimal(queue_, inst_);
        case PolicyKind::Random:
            return select_random(queue_, inst_.K, rs_, t);
        case PolicyKind::CqbEpsOpt:
            return select_cqb_eps_opt(pstate_, queue_, t, rs_, plan_.eps_rate);
        case PolicyKind::CqbTs:
            return select_cqb_ts(pstate_, queue_, t, rs_, plan_.cfg.ts_R);
        case PolicyKind::QUcb:
            return select_q_ucb(pstate_, queue_, t, rs_);
        case PolicyKind::QThs:
            return select_q_ths(pstate_, queue_, t, rs_);
    }
    throw ConfigError("unhandled policy kind");
}

void QueueRunner::run_round(int t, const Arrival& arrival) {
    if (opts_.observer) opts_.observer(t, queue_, pstate_);

    const bool learned = t <= switch_round_;
    std::optional<std::pair<int, int>> action;
    Decision dec;
    if (!queue_.empty()) {
        dec = learned ? decide(t) : select_optimal(queue_, inst_);
        action = std::make_pair(dec.job_index, dec.server);
    }

    // Uncertainty and radius reflect the pre-update (round t-1) state, so
    // read them before the estimator ingests this round's outcome.
    double unc = 0, beta = 0;
    const bool learned_estimator_pick = action.has_value() && learned && plan_.uses_estimators();
    if (learned_estimator_pick) {
        const auto& est = pstate_.estimators[static_cast<std::size_t>(dec.server)];
        unc = est.uncertainty(queue_.jobs[static_cast<std::size_t>(dec.job_index)].feature);
        beta = est.beta();
    }

    const Vec chosen_feature =
        action.has_value() ? queue_.jobs[static_cast<std::size_t>(dec.job_index)].feature : Vec();

    RoundRecord rec = step(queue_, action, arrival, inst_, rs_, t);
    rec.mode = action.has_value() ? dec.mode : ModeTag::Dummy;
    rec.explored = rec.mode == ModeTag::EpsExplore;

    if (learned_estimator_pick) {
        rec.uncertainty = unc;
        rec.beta = beta;
        rec.bad_round = unc > inst_.slack / (4.0 * beta);
        if (rec.bad_round) ++bad_rounds_;
        trace_.elliptic_lhs += std::min(1.0, unc * unc);
        trace_.elliptic_rhs = elliptic_bound(inst_, t);
        if (opts_.assert_elliptic && trace_.elliptic_lhs > trace_.elliptic_rhs + 1e-9) {
            throw AssertionBreach("elliptical potential exceeded at t=" + std::to_string(t) +
                                  ": " + std::to_string(trace_.elliptic_lhs) + " > " +
                                  std::to_string(trace_.elliptic_rhs));
        }
        pstate_.estimators[static_cast<std::size_t>(dec.server)].observe(chosen_feature,
                                                                         rec.departed);
    } else if (action.has_value() && learned && plan_.uses_mab_stats()) {
        pstate_.mab_pulls[static_cast<std::size_t>(dec.server)] += 1;
        pstate_.mab_successes[static_cast<std::size_t>(dec.server)] += rec.departed ? 1 : 0;
    }

    if (plan_.cfg.kind == PolicyKind::CqbEps) {
        pstate_.explore_prev = sample_explore_flag(rs_, static_cast<std::uint64_t>(t),
                                                   plan_.eps_rate);
    }

    trace_.records.push_back(std::move(rec));
}

void QueueRunner::finalize(int T) {
    trace_.T = T;
    trace_.final_queue_len = queue_.length();
    for (const auto& est : pstate_.estimators) {
        trace_.estimator_snapshots.push_back(est.snapshot_line());
    }
    if (opts_.assert_bad_round && plan_.cfg.kind == PolicyKind::CqbOpt) {
        const double bound = bad_round_bound(inst_, T, plan_.delta);
        if (static_cast<double>(bad_rounds_) > bound) {
            throw AssertionBreach("bad-round count " + std::to_string(bad_rounds_) +
                                  " exceeds bound " + std::to_string(bound));
        }
    }
}

std::pair<Trace, Trace> run_coupled(const PolicyConfig& policy, const Instance& inst, int T,
                                    std::uint64_t seed, const RunOptions& opts) {
    const RandomnessStream rs(seed);
    ContextSource ctx = inst.context;  // per-run cursor state
    QueueRunner alg(inst, rs, resolve_policy(policy, inst, T), std::numeric_limits<int>::max(),
                    opts);
    PolicyConfig opt_cfg;
    opt_cfg.kind = PolicyKind::Optimal;
    RunOptions opt_opts;  // assertions and probes watch the learned queue only
    QueueRunner opt(inst, rs, resolve_policy(opt_cfg, inst, T), std::numeric_limits<int>::max(),
                    opt_opts);
    for (int t = 1; t <= T - 1; ++t) {
        const Arrival arrival = sample_arrival(rs, static_cast<std::uint64_t>(t), ctx, inst.lambda);
        alg.run_round(t, arrival);
        opt.run_round(t, arrival);
    }
    alg.finalize(T);
    opt.finalize(T);
    return {alg.take_trace(), opt.take_trace()};
}

Trace run_policy_switch(const PolicyConfig& policy, const Instance& inst, int T, int t1,
                        std::uint64_t seed, const RunOptions& opts) {
    if (t1 < 0 || t1 > T - 1) throw ConfigError("switch round must lie in [0, T-1]");
    const RandomnessStream rs(seed);
    ContextSource ctx = inst.context;
    QueueRunner runner(inst, rs, resolve_policy(policy, inst, T), t1, opts);
    for (int t = 1; t <= T - 1; ++t) {
        const Arrival arrival = sample_arrival(rs, static_cast<std::uint64_t>(t), ctx, inst.lambda);
        runner.run_round(t, arrival);
    }
    runner.finalize(T);
    return runner.take_trace();
}

const char* to_string(DivergenceEvent e) {
    switch (e) {
        case DivergenceEvent::Agree00: return "AGREE_00";
        case DivergenceEvent::Agree11: return "AGREE_11";
        case DivergenceEvent::DisagreePlus0Minus1: return "DISAGREE_PLUS0_MINUS1";
        case DivergenceEvent::None: return "NONE";
    }
    return "?";
}

namespace {

struct RoundProbe {
    bool captured = false;
    QueueState queue;
    std::vector<Vec> theta_hats;
    std::vector<Mat> Vs;
};

RoundObserver capture_at(int probe_round, RoundProbe& out) {
    return [probe_round, &out](int t, const QueueState& q, const PolicyState& ps) {
        if (t != probe_round) return;
        out.captured = true;
        out.queue = q;
        for (const auto& est : ps.estimators) {
            out.theta_hats.push_back(est.theta_hat());
            out.Vs.push_back(est.V());
        }
    };
}

bool same_probe(const RoundProbe& a, const RoundProbe& b) {
    if (!same_queue(a.queue, b.queue)) return false;
    if (a.theta_hats.size() != b.theta_hats.size()) return false;
    for (std::size_t k = 0; k < a.theta_hats.size(); ++k) {
        if (a.theta_hats[k] != b.theta_hats[k]) return false;
        if (a.Vs[k] != b.Vs[k]) return false;
    }
    return true;
}

} // namespace

PsiSample psi_sample(const PolicyConfig& policy, const Instance& inst, int T, int t,
                     std::uint64_t seed) {
    if (t < 1 || t > T - 1) throw ConfigError("psi switch round must lie in [1, T-1]");

    RoundProbe plus_probe, minus_probe;
    RunOptions plus_opts, minus_opts;
    plus_opts.observer = capture_at(t, plus_probe);
    minus_opts.observer = capture_at(t, minus_probe);

    const Trace plus = run_policy_switch(policy, inst, T, t, seed, plus_opts);
    const Trace minus = run_policy_switch(policy, inst, T, t - 1, seed, minus_opts);

    // The two queues follow the identical rule through round t-1 on the same
    // stream; their states at round t must agree exactly.
    if (t <= T - 1 && (!plus_probe.captured || !minus_probe.captured ||
                       !same_probe(plus_probe, minus_probe))) {
        throw AssertionBreach("coupled pair diverged before the switch round");
    }

    PsiSample s;
    s.t = t;
    s.T = T;
    s.seed = seed;
    s.value = plus.final_queue_len - minus.final_queue_len;

    const RoundRecord& rp = plus.records[static_cast<std::size_t>(t - 1)];
    const RoundRecord& rm = minus.records[static_cast<std::size_t>(t - 1)];
    if (rp.dummy_served) {
        s.event = DivergenceEvent::None;
        if (s.value != 0) {
            throw AssertionBreach("dummy switch round produced psi=" + std::to_string(s.value));
        }
    } else {
        if (rp.departed && !rm.departed) {
            throw AssertionBreach("coupling violated: D+(t)=1, D-(t)=0 at t=" + std::to_string(t));
        }
        if (rp.departed) {
            s.event = DivergenceEvent::Agree11;
        } else {
            s.event = rm.departed ? DivergenceEvent::DisagreePlus0Minus1 : DivergenceEvent::Agree00;
        }
    }

    if (s.value < -1 || s.value > 1) {
        throw AssertionBreach("psi outside {-1,0,1}: " + std::to_string(s.value));
    }
    if ((s.event == DivergenceEvent::Agree00 || s.event == DivergenceEvent::Agree11) &&
        s.value == 1) {
        throw AssertionBreach("psi=1 despite agreeing departures at t=" + std::to_string(t));
    }
    if (s.event == DivergenceEvent::DisagreePlus0Minus1 && s.value == -1) {
        throw AssertionBreach("psi=-1 despite departure disagreement at t=" + std::to_string(t));
    }
    return s;
}

RegretEstimate estimate_regret(const PolicyConfig& policy, const Instance& inst, int T,
                               int n_reps, std::uint64_t seed, const RunOptions& opts) {
    if (n_reps < 1) throw ConfigError("estimate_regret needs n_reps >= 1");
    RegretEstimate est;
    est.mean_q_alg.assign(static_cast<std::size_t>(T), 0.0);
    est.mean_q_opt.assign(static_cast<std::size_t>(T), 0.0);
    for (int rep = 0; rep < n_reps; ++rep) {
        const auto [alg, opt] =
            run_coupled(policy, inst, T, derive_seed(seed, seed_salt::kRun, static_cast<std::uint64_t>(rep)),
                        opts);
        est.regrets.push_back(static_cast<double>(alg.final_queue_len - opt.final_queue_len));
        for (int t = 1; t <= T; ++t) {
            est.mean_q_alg[static_cast<std::size_t>(t - 1)] += alg.q(t);
            est.mean_q_opt[static_cast<std::size_t>(t - 1)] += opt.q(t);
        }
    }
    for (auto& v : est.mean_q_alg) v /= n_reps;
    for (auto& v : est.mean_q_opt) v /= n_reps;
    double sum = 0;
    for (double r : est.regrets) sum += r;
    est.mean = sum / n_reps;
    if (n_reps == 1) {
        est.degenerate = true;
        est.stddev = 0;
    } else {
        double ss = 0;
        for (double r : est.regrets) ss += (r - est.mean) * (r - est.mean);
        est.stddev = std::sqrt(ss / (n_reps - 1));
    }
    return est;
}

long long count_bad_rounds(const Trace& trace, double slack) {
    long long n = 0;
    for (const auto& rec : trace.records) {
        if (rec.dummy_served || rec.beta <= 0) continue;
        if (rec.uncertainty > slack / (4.0 * rec.beta)) ++n;
    }
    return n;
}

} // namespace cqb
