#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cqb/errors.hpp"
#include "cqb/math.hpp"
#include "cqb/rng.hpp"

namespace cqb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One queued job: its context feature and the first round it can be served.
struct Job {
    Vec feature;
    int entry_round = 0;
};

// FIFO queue of pending jobs; entry_round is nondecreasing along the list.
struct QueueState {
    std::vector<Job> jobs;

    int length() const { return static_cast<int>(jobs.size()); }
    bool empty() const { return jobs.empty(); }
    void push(Vec feature, int entry_round) {
        jobs.push_back(Job{std::move(feature), entry_round});
    }
    void remove(int index) { jobs.erase(jobs.begin() + index); }
};

bool same_queue(const QueueState& a, const QueueState& b);

// Where arriving contexts come from.
struct ContextSpec {
    enum class Kind { Synthetic, Csv } kind = Kind::Synthetic;
    int d = 5;
    bool normalize = false;    // project onto the unit ball
    // CSV-only options
    std::string csv_path;
    bool standardize = false;  // per-column mean 0 / std 1, applied before normalize
    bool with_replacement = true;
};

class ContextSource {
public:
    ContextSource() = default;
    static ContextSource synthetic(int d, bool normalize);
    static ContextSource from_rows(Mat rows, bool normalize, bool with_replacement);

    int dim() const { return d_; }
    bool finite() const { return data_ != nullptr; }
    std::size_t rows() const { return data_ ? static_cast<std::size_t>(data_->rows()) : 0; }

    // Arrival draw for round t (channel ArrivalContext). Without-replacement
    // CSV sources advance a cursor and throw DataError when exhausted.
    Vec draw(const RandomnessStream& rs, std::uint64_t t);

    // Indexed draw for validation sampling; always with replacement, pure in
    // (stream, ordinal).
    Vec draw_at(const RandomnessStream& rs, std::uint64_t ordinal) const;

private:
    int d_ = 0;
    bool normalize_ = false;
    bool with_replacement_ = true;
    std::shared_ptr<const Mat> data_;  // null for synthetic
    std::size_t cursor_ = 0;

    Vec postprocess(Vec x) const;
};

// Loads a context CSV (header row, then one d-dimensional decimal row per
// line) and applies the requested preprocessing.
ContextSource load_contexts_csv(const std::string& path, bool standardize,
                                bool normalize, bool with_replacement = true);

struct CertificateInfo {
    bool enforced = false;
    int attempts = 0;       // accepted on this attempt (1-based); 0 if disabled
    int samples = 0;
    double min_margin = 0;  // min over sample of max_k mu(x' theta_k) - lambda
};

struct InstanceConfig {
    int d = 5;
    int K = 5;
    double lambda = 0.7;     // arrival probability per round
    double slack = 0.1;      // traffic slack epsilon
    double kappa = 10.0;
    double lambda0 = 1.0;
    double R = 0.25;
    double sigma0_sq = 1.0 / 3.0;  // declared context second-moment floor
    double S_explicit = -1.0;      // < 0: set S = ceil(max_k ||theta*_k||)
    ContextSpec context;
    int cert_samples = 10000;
    bool cert_enforce = true;
    int cert_budget = 1000;
};

// Ground-truth problem instance.
struct Instance {
    int d = 0;
    int K = 0;
    double lambda = 0;
    double slack = 0;
    double kappa = 0;
    double S = 0;
    double lambda0 = 0;
    double R = 0;
    double sigma0_sq = 0;
    std::vector<Vec> theta_star;
    Vec dummy_job;
    ContextSource context;
    CertificateInfo cert;

    double rate(const Vec& x, int k) const { return logistic(x.dot(theta_star[k])); }
    double best_rate(const Vec& x) const;
};

// Samples theta*_k componentwise Unif(-1,1), rejecting whole parameter sets
// until the slackness certificate passes (when enforced). Throws ConfigError
// once the rejection budget is exhausted.
Instance generate_instance(const InstanceConfig& cfg, std::uint64_t seed);

struct Arrival {
    bool arrived = false;
    Vec feature;
};

// Round-t arrival: coin on channel ArrivalCoin, context on ArrivalContext.
// Called once per round; coupled queues share the result.
Arrival sample_arrival(const RandomnessStream& rs, std::uint64_t t,
                       ContextSource& ctx, double lambda);

// Shared-uniform service outcome for pair (x, k) at round t. The uniform is
// addressed by the round only, which realizes the monotone coupling: queues
// serving different pairs at the same round compare against the same U.
bool service_draw(const Vec& x, int k, const Instance& inst,
                  const RandomnessStream& rs, std::uint64_t t);

// Which selection rule produced a round's action (verbatim in trace CSVs).
enum class ModeTag {
    PureExplore,
    EpsExplore,
    Ucb,
    Random,
    Ts,
    MabExplore,
    MabExploit,
    Optimal,
    Dummy,
};

const char* to_string(ModeTag m);

// Everything observed in one round of one queue.
struct RoundRecord {
    int t = 0;
    bool arrived = false;
    std::optional<Vec> arrival_feature;
    int queue_len = 0;  // Q(t), before the round's service and arrival
    std::optional<Vec> chosen_feature;
    int chosen_entry = -1;
    int chosen_server = -1;
    bool departed = false;
    bool explored = false;  // the epsilon-exploration branch fired
    bool dummy_served = false;
    ModeTag mode = ModeTag::Dummy;
    double uncertainty = 0.0;  // ||x_t|| in the V^{-1} norm of the chosen server
    double beta = 0.0;         // beta_{t-1,k_t}
    bool bad_round = false;
};

bool same_record(const RoundRecord& a, const RoundRecord& b);

// Advances the queue one round: serves `action` (or the dummy job when the
// queue is empty), then appends the round's arrival with entry_round t+1.
// The service uniform is consumed every round so coupled streams stay
// aligned. Dummy feedback is discarded.
RoundRecord step(QueueState& state, const std::optional<std::pair<int, int>>& action,
                 const Arrival& arrival, const Instance& inst,
                 const RandomnessStream& rs, int t);

} // namespace cqb
