#include "cqb/policies.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "cqb/errors.hpp"

namespace cqb {

const char* to_string(PolicyKind p) {
    switch (p) {
        case PolicyKind::CqbEps: return "CQB_EPS";
        case PolicyKind::CqbOpt: return "CQB_OPT";
        case PolicyKind::Optimal: return "OPTIMAL";
        case PolicyKind::Random: return "RANDOM";
        case PolicyKind::CqbEpsOpt: return "CQB_EPS_OPT";
        case PolicyKind::CqbTs: return "CQB_TS";
        case PolicyKind::QUcb: return "Q_UCB";
        case PolicyKind::QThs: return "Q_THS";
    }
    return "?";
}

PolicyKind policy_from_string(const std::string& name) {
    std::string s;
    for (char c : name) {
        if (c == '-') c = '_';
        s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (s == "cqb_eps") return PolicyKind::CqbEps;
    if (s == "cqb_opt") return PolicyKind::CqbOpt;
    if (s == "optimal") return PolicyKind::Optimal;
    if (s == "random") return PolicyKind::Random;
    if (s == "cqb_eps_opt") return PolicyKind::CqbEpsOpt;
    if (s == "cqb_ts") return PolicyKind::CqbTs;
    if (s == "q_ucb") return PolicyKind::QUcb;
    if (s == "q_ths") return PolicyKind::QThs;
    throw ConfigError("unknown policy: " + name);
}

int compute_tau(TauMode mode, const PolicyConfig& cfg, double eps_rate,
                const Instance& inst, int T, double delta) {
    if (mode == TauMode::Explicit) {
        return static_cast<int>(std::clamp<long long>(cfg.tau, 0, T - 1));
    }
    const double gap = inst.slack - 2.0 * eps_rate;
    if (!(gap > 0.0)) {
        throw ConfigError("tau formula undefined: slack <= 2 * eps_rate (slack=" +
                          std::to_string(inst.slack) + ", eps_rate=" + std::to_string(eps_rate) + ")");
    }
    double tau = 0;
    if (mode == TauMode::Practical) {
        tau = cfg.tau_C * std::pow(inst.d, 3) * std::log(static_cast<double>(T)) * inst.K /
              inst.lambda / (gap * gap);
    } else {
        const double beta_T =
            confidence_radius(T, inst.kappa, inst.lambda0, inst.d, inst.K, delta, inst.S);
        const double s2 = inst.sigma0_sq;
        tau = (2.0 * cfg.tau_C3 * inst.K / inst.lambda) *
                  ((inst.d + std::log(inst.K / delta)) / (s2 * s2) +
                   16.0 * beta_T * beta_T / (s2 * gap * gap)) +
              std::log(1.0 / delta) / (2.0 * inst.lambda * inst.lambda);
    }
    const double up = std::ceil(tau);
    if (up >= static_cast<double>(T - 1)) return T - 1;
    return std::max(0, static_cast<int>(up));
}

bool sample_explore_flag(const RandomnessStream& rs, std::uint64_t t, double eps) {
    return rs.uniform(t, Channel::ExploreCoin) <= eps;
}

Decision ucb_argmax(const std::vector<ServerEstimator>& estimators, const QueueState& queue) {
    Decision best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < queue.length(); ++j) {
        const Vec& x = queue.jobs[static_cast<std::size_t>(j)].feature;
        for (int k = 0; k < static_cast<int>(estimators.size()); ++k) {
            const double score = estimators[static_cast<std::size_t>(k)].ucb_score(x);
            if (score > best_score) {
                best_score = score;
                best = Decision{j, k, ModeTag::Ucb};
            }
        }
    }
    return best;
}

namespace {

// True iff the queue's FIFO tail arrived in round t-1 (selectable since t).
bool arrived_last_round(const QueueState& queue, int t) {
    return !queue.empty() && queue.jobs.back().entry_round == t;
}

} // namespace

Decision select_cqb_eps(PolicyState& state, const QueueState& queue, int t, int tau,
                        const RandomnessStream& rs) {
    const int K = static_cast<int>(state.estimators.size());
    if (t <= tau && arrived_last_round(queue, t)) {
        const int server = state.rr_ptr;
        state.rr_ptr = (state.rr_ptr + 1) % K;
        return Decision{queue.length() - 1, server, ModeTag::PureExplore};
    }
    if (t > tau && state.explore_prev && arrived_last_round(queue, t)) {
        const int server = static_cast<int>(rs.pick(static_cast<std::uint64_t>(t),
                                                    Channel::ServerPick, K));
        return Decision{queue.length() - 1, server, ModeTag::EpsExplore};
    }
    return ucb_argmax(state.estimators, queue);
}

Decision select_cqb_opt(const PolicyState& state, const QueueState& queue) {
    return ucb_argmax(state.estimators, queue);
}

Decision select_optimal(const QueueState& queue, const Instance& inst) {
    Decision best;
    best.mode = ModeTag::Optimal;
    double best_rate = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < queue.length(); ++j) {
        const Vec& x = queue.jobs[static_cast<std::size_t>(j)].feature;
        for (int k = 0; k < inst.K; ++k) {
            const double r = inst.rate(x, k);
            if (r > best_rate) {
                best_rate = r;
                best.job_index = j;
                best.server = k;
            }
        }
    }
    return best;
}

Decision select_random(const QueueState& queue, int K, const RandomnessStream& rs, int t) {
    const auto n = static_cast<std::uint64_t>(queue.length()) * static_cast<std::uint64_t>(K);
    const auto pair = rs.pick(static_cast<std::uint64_t>(t), Channel::ServerPick, n);
    return Decision{static_cast<int>(pair / K), static_cast<int>(pair % K), ModeTag::Random};
}

Decision select_cqb_eps_opt(const PolicyState& state, const QueueState& queue, int t,
                            const RandomnessStream& rs, double eps_rate) {
    if (rs.uniform(static_cast<std::uint64_t>(t), Channel::ExploreCoin) <= eps_rate) {
        const int K = static_cast<int>(state.estimators.size());
        Decision d = select_random(queue, K, rs, t);
        d.mode = ModeTag::EpsExplore;
        return d;
    }
    return ucb_argmax(state.estimators, queue);
}

Decision select_cqb_ts(const PolicyState& state, const QueueState& queue, int t,
                       const RandomnessStream& rs, double ts_R) {
    const int K = static_cast<int>(state.estimators.size());
    Decision best;
    best.mode = ModeTag::Ts;
    double best_sample = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < queue.length(); ++j) {
        const Vec& x = queue.jobs[static_cast<std::size_t>(j)].feature;
        for (int k = 0; k < K; ++k) {
            const auto& est = state.estimators[static_cast<std::size_t>(k)];
            const double mean = x.dot(est.theta_hat());
            const double unc = est.uncertainty(x);
            const double sd = std::sqrt(est.beta()) * unc / ts_R;
            const auto lane = static_cast<std::uint64_t>(j) * K + static_cast<std::uint64_t>(k);
            const double sample =
                mean + sd * rs.normal(static_cast<std::uint64_t>(t), Channel::ServerPick, lane);
            if (sample > best_sample) {
                best_sample = sample;
                best.job_index = j;
                best.server = k;
            }
        }
    }
    return best;
}

namespace {

// Bern(min{1, 3K log^2(t) / t}) exploration coin shared by Q-UCB and Q-ThS.
bool mab_explores(int K, int t, const RandomnessStream& rs) {
    const double lt = std::log(static_cast<double>(t));
    const double p = std::min(1.0, 3.0 * K * lt * lt / t);
    return rs.uniform(static_cast<std::uint64_t>(t), Channel::ExploreCoin) <= p;
}

// Marsaglia-Tsang Gamma(a) for a >= 1, consuming lanes base.. of the round's
// ServerPick channel (two lanes per attempt).
double gamma_sample(const RandomnessStream& rs, std::uint64_t t, std::uint64_t base, double a) {
    if (a == 1.0) return -std::log(1.0 - rs.uniform(t, Channel::ServerPick, base));
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (int i = 0; i < 60; ++i) {
        const double z = rs.normal(t, Channel::ServerPick, base + 2 * i);
        const double v = std::pow(1.0 + c * z, 3);
        if (v <= 0.0) continue;
        const double u = rs.uniform_open(t, Channel::ServerPick, base + 2 * i + 1);
        if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
    }
    throw SolverError("gamma_sample: rejection budget exhausted (a=" + std::to_string(a) + ")");
}

} // namespace

double beta_sample(const RandomnessStream& rs, std::uint64_t t, std::uint64_t base_idx,
                   double a, double b) {
    if (a == 1.0 && b == 1.0) return rs.uniform(t, Channel::ServerPick, base_idx);
    const double ga = gamma_sample(rs, t, base_idx, a);
    const double gb = gamma_sample(rs, t, base_idx + 128, b);
    return ga / (ga + gb);
}

Decision select_q_ucb(const PolicyState& state, const QueueState& queue, int t,
                      const RandomnessStream& rs) {
    (void)queue;  // rule is context-blind; job is always the FIFO head
    const int K = static_cast<int>(state.mab_pulls.size());
    if (mab_explores(K, t, rs)) {
        const int server =
            static_cast<int>(rs.pick(static_cast<std::uint64_t>(t), Channel::ServerPick, K));
        return Decision{0, server, ModeTag::MabExplore};
    }
    const double lt = std::log(static_cast<double>(t));
    int best_k = 0;
    double best_index = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        const long long n = state.mab_pulls[static_cast<std::size_t>(k)];
        double index;
        if (n == 0) {
            index = std::numeric_limits<double>::infinity();
        } else {
            const double mu = static_cast<double>(state.mab_successes[static_cast<std::size_t>(k)]) / n;
            index = mu + std::sqrt(lt * lt / (2.0 * n));
        }
        if (index > best_index) {
            best_index = index;
            best_k = k;
        }
    }
    return Decision{0, best_k, ModeTag::MabExploit};
}

Decision select_q_ths(const PolicyState& state, const QueueState& queue, int t,
                      const RandomnessStream& rs) {
    (void)queue;
    const int K = static_cast<int>(state.mab_pulls.size());
    if (mab_explores(K, t, rs)) {
        const int server =
            static_cast<int>(rs.pick(static_cast<std::uint64_t>(t), Channel::ServerPick, K));
        return Decision{0, server, ModeTag::MabExplore};
    }
    int best_k = 0;
    double best_sample = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        const long long n = state.mab_pulls[static_cast<std::size_t>(k)];
        const long long s = state.mab_successes[static_cast<std::size_t>(k)];
        const double sample = beta_sample(rs, static_cast<std::uint64_t>(t),
                                          static_cast<std::uint64_t>(k) * 512,
                                          static_cast<double>(s) + 1.0,
                                          static_cast<double>(n - s) + 1.0);
        if (sample > best_sample) {
            best_sample = sample;
            best_k = k;
        }
    }
    return Decision{0, best_k, ModeTag::MabExploit};
}

} // namespace cqb
