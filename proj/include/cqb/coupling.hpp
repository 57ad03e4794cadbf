#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "cqb/env.hpp"
#include "cqb/estimator.hpp"
#include "cqb/policies.hpp"

namespace cqb {

// Policy parameters resolved against a concrete (instance, horizon).
struct RunPlan {
    PolicyConfig cfg;
    double eps_rate = 0;
    double delta = 0;
    int tau = 0;

    bool uses_estimators() const {
        return cfg.kind == PolicyKind::CqbEps || cfg.kind == PolicyKind::CqbOpt ||
               cfg.kind == PolicyKind::CqbEpsOpt || cfg.kind == PolicyKind::CqbTs;
    }
    bool uses_mab_stats() const {
        return cfg.kind == PolicyKind::QUcb || cfg.kind == PolicyKind::QThs;
    }
};

RunPlan resolve_policy(const PolicyConfig& cfg, const Instance& inst, int T);

// One queue's full sample path over rounds 1..T-1 plus Q(T).
struct Trace {
    PolicyKind policy = PolicyKind::Optimal;
    int T = 0;
    std::uint64_t seed = 0;
    std::vector<RoundRecord> records;  // rounds 1..T-1
    int final_queue_len = 0;           // Q(T)
    double elliptic_lhs = 0;           // sum_t min{1, uncertainty^2}
    double elliptic_rhs = 0;           // bound at the last learned selection
    std::vector<std::string> estimator_snapshots;  // final audit records

    // Q(t) for t in [1, T].
    int q(int t) const {
        return t <= static_cast<int>(records.size()) ? records[static_cast<std::size_t>(t - 1)].queue_len
                                                     : final_queue_len;
    }
};

bool same_trace(const Trace& a, const Trace& b);

// Called at the start of each round, before the policy decides.
using RoundObserver =
    std::function<void(int t, const QueueState&, const PolicyState&)>;

struct RunOptions {
    bool assert_elliptic = false;   // Sum min{1,unc^2} <= 2Kd log(1 + t/(dK kappa lambda0))
    bool assert_bad_round = false;  // |B'| within its deterministic bound, checked at the end
    RoundObserver observer;
};

// One queue plus its policy, advanced round by round on a shared stream.
// Rounds <= switch_round use the configured policy (with live estimator
// updates); later rounds use the optimal oracle with frozen estimators.
class QueueRunner {
public:
    QueueRunner(const Instance& inst, const RandomnessStream& rs, RunPlan plan,
                int switch_round, const RunOptions& opts = {});

    void run_round(int t, const Arrival& arrival);
    void finalize(int T);

    const QueueState& queue() const { return queue_; }
    const PolicyState& policy_state() const { return pstate_; }
    Trace take_trace() { return std::move(trace_); }
    long long bad_rounds() const { return bad_rounds_; }

private:
    const Instance& inst_;
    const RandomnessStream& rs_;
    RunPlan plan_;
    int switch_round_;
    RunOptions opts_;
    QueueState queue_;
    PolicyState pstate_;
    Trace trace_;
    long long bad_rounds_ = 0;

    Decision decide(int t);
};

// Runs the learned queue and the optimal queue on one randomness stream.
// The optimal queue knows theta* and never updates estimators.
std::pair<Trace, Trace> run_coupled(const PolicyConfig& policy, const Instance& inst, int T,
                                    std::uint64_t seed, const RunOptions& opts = {});

// Policy-switching queue Q(t1, .): learned policy for rounds 1..t1, optimal
// afterwards. t1 = 0 reproduces the optimal-only queue, t1 = T-1 the
// learned-only queue, on the same stream.
Trace run_policy_switch(const PolicyConfig& policy, const Instance& inst, int T, int t1,
                        std::uint64_t seed, const RunOptions& opts = {});

enum class DivergenceEvent { Agree00, Agree11, DisagreePlus0Minus1, None };

const char* to_string(DivergenceEvent e);

struct PsiSample {
    int t = 0;
    int T = 0;
    std::uint64_t seed = 0;
    int value = 0;  // psi(t,T) = Q+(T) - Q-(T)
    DivergenceEvent event = DivergenceEvent::None;
};

// Runs the coupled pair {switch at t, switch at t-1} and classifies the
// round-t divergence. Throws AssertionBreach if any structural property
// fails (D+ <= D-, psi outside {-1,0,1}, or the per-event refinement).
PsiSample psi_sample(const PolicyConfig& policy, const Instance& inst, int T, int t,
                     std::uint64_t seed);

struct RegretEstimate {
    double mean = 0;
    double stddev = 0;
    bool degenerate = false;  // single replication
    std::vector<double> mean_q_alg;  // averaged Q(t), t = 1..T
    std::vector<double> mean_q_opt;
    std::vector<double> regrets;     // per-rep Q(T) - Q*(T)
};

RegretEstimate estimate_regret(const PolicyConfig& policy, const Instance& inst, int T,
                               int n_reps, std::uint64_t seed, const RunOptions& opts = {});

// |B'|: rounds whose recorded uncertainty exceeds slack / (4 beta).
long long count_bad_rounds(const Trace& trace, double slack);

// Deterministic cap on the bad-round count of a horizon-T run.
double bad_round_bound(const Instance& inst, int T, double delta);

// 2Kd log(1 + t/(dK kappa lambda0)).
double elliptic_bound(const Instance& inst, int t);

} // namespace cqb
