#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cqb/env.hpp"
#include "cqb/estimator.hpp"

namespace cqb {

enum class PolicyKind {
    CqbEps,
    CqbOpt,
    Optimal,
    Random,
    CqbEpsOpt,
    CqbTs,
    QUcb,
    QThs,
};

const char* to_string(PolicyKind p);
PolicyKind policy_from_string(const std::string& name);

enum class TauMode { Theoretical, Practical, Explicit };

struct PolicyConfig {
    PolicyKind kind = PolicyKind::CqbOpt;
    double eps_rate = -1.0;  // < 0: default T^{-1/2}
    long long tau = 0;       // Explicit mode only
    TauMode tau_mode = TauMode::Practical;
    double tau_C = 3e-4;     // practical-formula constant
    double tau_C3 = 1.0;     // theoretical-formula constant
    double ts_R = 0.25;      // CqbTs variance scale
    double delta = -1.0;     // < 0: T^{-2} for CqbEps, T^{-1} otherwise
};

// Pure-exploration length. Formula modes require slack > 2 * eps_rate.
int compute_tau(TauMode mode, const PolicyConfig& cfg, double eps_rate,
                const Instance& inst, int T, double delta);

// E(t) ~ Bern(eps), sampled at the end of round t and consumed at round t+1.
bool sample_explore_flag(const RandomnessStream& rs, std::uint64_t t, double eps);

// Mutable per-run policy state.
struct PolicyState {
    int rr_ptr = 0;  // round-robin pointer, advanced only by pure exploration
    std::vector<ServerEstimator> estimators;
    bool explore_prev = false;  // E(t-1)
    std::vector<long long> mab_pulls;
    std::vector<long long> mab_successes;

    bool has_estimators() const { return !estimators.empty(); }
    bool has_mab_stats() const { return !mab_pulls.empty(); }
};

struct Decision {
    int job_index = -1;
    int server = -1;
    ModeTag mode = ModeTag::Dummy;
};

// Exhaustive UCB argmax over (job, server) pairs; ties break by earliest
// entry_round then lowest server index.
Decision ucb_argmax(const std::vector<ServerEstimator>& estimators, const QueueState& queue);

Decision select_cqb_eps(PolicyState& state, const QueueState& queue, int t, int tau,
                        const RandomnessStream& rs);
Decision select_cqb_opt(const PolicyState& state, const QueueState& queue);
Decision select_optimal(const QueueState& queue, const Instance& inst);
Decision select_random(const QueueState& queue, int K, const RandomnessStream& rs, int t);
Decision select_cqb_eps_opt(const PolicyState& state, const QueueState& queue, int t,
                            const RandomnessStream& rs, double eps_rate);
Decision select_cqb_ts(const PolicyState& state, const QueueState& queue, int t,
                       const RandomnessStream& rs, double ts_R);
Decision select_q_ucb(const PolicyState& state, const QueueState& queue, int t,
                      const RandomnessStream& rs);
Decision select_q_ths(const PolicyState& state, const QueueState& queue, int t,
                      const RandomnessStream& rs);

// Beta(a, b) for integer-count posteriors, drawn from the substream
// (t, ServerPick, base_idx..). Beta(1,1) returns the lane's uniform directly.
double beta_sample(const RandomnessStream& rs, std::uint64_t t, std::uint64_t base_idx,
                   double a, double b);

} // namespace cqb
