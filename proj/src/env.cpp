#include "cqb/env.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace cqb {

bool same_queue(const QueueState& a, const QueueState& b) {
    if (a.jobs.size() != b.jobs.size()) return false;
    for (std::size_t i = 0; i < a.jobs.size(); ++i) {
        if (a.jobs[i].entry_round != b.jobs[i].entry_round) return false;
        if (a.jobs[i].feature != b.jobs[i].feature) return false;
    }
    return true;
}

ContextSource ContextSource::synthetic(int d, bool normalize) {
    ContextSource src;
    src.d_ = d;
    src.normalize_ = normalize;
    return src;
}

ContextSource ContextSource::from_rows(Mat rows, bool normalize, bool with_replacement) {
    ContextSource src;
    src.d_ = static_cast<int>(rows.cols());
    src.normalize_ = normalize;
    src.with_replacement_ = with_replacement;
    src.data_ = std::make_shared<const Mat>(std::move(rows));
    return src;
}

Vec ContextSource::postprocess(Vec x) const {
    if (normalize_) {
        const double n = x.norm();
        if (n > 1.0) x /= n;
    }
    return x;
}

Vec ContextSource::draw(const RandomnessStream& rs, std::uint64_t t) {
    if (!data_) {
        Vec x(d_);
        for (int i = 0; i < d_; ++i) {
            x[i] = 2.0 * rs.uniform(t, Channel::ArrivalContext, static_cast<std::uint64_t>(i)) - 1.0;
        }
        return postprocess(std::move(x));
    }
    if (with_replacement_) {
        const auto row = rs.pick(t, Channel::ArrivalContext, rows());
        return postprocess(data_->row(static_cast<Eigen::Index>(row)).transpose());
    }
    if (cursor_ >= rows()) {
        throw DataError("context source exhausted after " + std::to_string(rows()) + " rows");
    }
    return postprocess(data_->row(static_cast<Eigen::Index>(cursor_++)).transpose());
}

Vec ContextSource::draw_at(const RandomnessStream& rs, std::uint64_t ordinal) const {
    if (!data_) {
        Vec x(d_);
        for (int i = 0; i < d_; ++i) {
            x[i] = 2.0 * rs.uniform(ordinal, Channel::ArrivalContext, static_cast<std::uint64_t>(i)) - 1.0;
        }
        return postprocess(std::move(x));
    }
    const auto row = rs.pick(ordinal, Channel::ArrivalContext, rows());
    return postprocess(data_->row(static_cast<Eigen::Index>(row)).transpose());
}

ContextSource load_contexts_csv(const std::string& path, bool standardize,
                                bool normalize, bool with_replacement) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open context file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty context file: " + path);

    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t pos = 0;
            double v = 0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
            }
            while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
            if (pos != cell.size()) {
                throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
            }
            row.push_back(v);
        }
        if (row.empty()) continue;
        if (width == 0) {
            width = row.size();
        } else if (row.size() != width) {
            throw DataError(path + ":" + std::to_string(lineno) + ": ragged row (" +
                            std::to_string(row.size()) + " cells, expected " + std::to_string(width) + ")");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("no data rows in context file: " + path);

    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }

    if (standardize) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double mean = m.col(j).mean();
            m.col(j).array() -= mean;
            const double var = m.col(j).squaredNorm() / static_cast<double>(m.rows());
            const double sd = std::sqrt(var);
            if (sd > 0) m.col(j) /= sd;
        }
    }

    return ContextSource::from_rows(std::move(m), normalize, with_replacement);
}

double Instance::best_rate(const Vec& x) const {
    double best = -1.0;
    for (int k = 0; k < K; ++k) {
        best = std::max(best, rate(x, k));
    }
    return best;
}

Instance generate_instance(const InstanceConfig& cfg, std::uint64_t seed) {
    if (cfg.d < 1 || cfg.K < 1) throw ConfigError("instance requires d >= 1 and K >= 1");
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (!(cfg.slack > 0.0)) throw ConfigError("slack must be positive");
    if (cfg.kappa < 4.0) throw ConfigError("kappa must be >= 4");
    if (!(cfg.lambda0 > 0.0)) throw ConfigError("lambda0 must be positive");

    ContextSource ctx;
    switch (cfg.context.kind) {
        case ContextSpec::Kind::Synthetic:
            ctx = ContextSource::synthetic(cfg.d, cfg.context.normalize);
            break;
        case ContextSpec::Kind::Csv:
            ctx = load_contexts_csv(cfg.context.csv_path, cfg.context.standardize,
                                    cfg.context.normalize, cfg.context.with_replacement);
            if (ctx.dim() != cfg.d) {
                throw ConfigError("context file has d=" + std::to_string(ctx.dim()) +
                                  ", config says d=" + std::to_string(cfg.d));
            }
            break;
    }

    const RandomnessStream gen(derive_seed(seed, seed_salt::kInstance));

    Instance inst;
    inst.d = cfg.d;
    inst.K = cfg.K;
    inst.lambda = cfg.lambda;
    inst.slack = cfg.slack;
    inst.kappa = cfg.kappa;
    inst.lambda0 = cfg.lambda0;
    inst.R = cfg.R;
    inst.sigma0_sq = cfg.sigma0_sq;
    inst.dummy_job = Vec::Zero(cfg.d);
    inst.context = ctx;

    const int budget = cfg.cert_enforce ? cfg.cert_budget : 1;
    for (int attempt = 1; attempt <= budget; ++attempt) {
        std::vector<Vec> thetas(cfg.K);
        for (int k = 0; k < cfg.K; ++k) {
            Vec th(cfg.d);
            for (int i = 0; i < cfg.d; ++i) {
                th[i] = 2.0 * gen.uniform(static_cast<std::uint64_t>(attempt), Channel::ServerPick,
                                          static_cast<std::uint64_t>(k) * cfg.d + i) - 1.0;
            }
            thetas[k] = std::move(th);
        }

        double min_margin = std::numeric_limits<double>::infinity();
        bool pass = true;
        if (cfg.cert_enforce && cfg.cert_samples > 0) {
            for (int s = 0; s < cfg.cert_samples; ++s) {
                const Vec x = ctx.draw_at(gen, (static_cast<std::uint64_t>(attempt) << 24) + s);
                double best = -std::numeric_limits<double>::infinity();
                for (int k = 0; k < cfg.K; ++k) {
                    best = std::max(best, logistic(x.dot(thetas[k])));
                }
                min_margin = std::min(min_margin, best - cfg.lambda);
                if (best - cfg.lambda < cfg.slack) {
                    pass = false;
                    break;
                }
            }
        } else {
            min_margin = 0;
        }

        if (pass) {
            inst.theta_star = std::move(thetas);
            double max_norm = 0;
            for (const auto& th : inst.theta_star) max_norm = std::max(max_norm, th.norm());
            if (cfg.S_explicit > 0 && cfg.S_explicit < max_norm) {
                throw ConfigError("S=" + std::to_string(cfg.S_explicit) +
                                  " is below max ||theta*|| = " + std::to_string(max_norm));
            }
            inst.S = cfg.S_explicit > 0 ? cfg.S_explicit : std::ceil(max_norm);
            inst.cert.enforced = cfg.cert_enforce;
            inst.cert.attempts = cfg.cert_enforce ? attempt : 0;
            inst.cert.samples = cfg.cert_enforce ? cfg.cert_samples : 0;
            inst.cert.min_margin = min_margin;
            return inst;
        }
    }
    throw ConfigError("slackness certificate rejected " + std::to_string(budget) +
                      " parameter sets; (lambda=" + std::to_string(cfg.lambda) +
                      ", slack=" + std::to_string(cfg.slack) + ", d=" + std::to_string(cfg.d) +
                      ") looks infeasible");
}

Arrival sample_arrival(const RandomnessStream& rs, std::uint64_t t,
                       ContextSource& ctx, double lambda) {
    Arrival a;
    a.arrived = rs.uniform(t, Channel::ArrivalCoin) <= lambda;
    if (a.arrived) a.feature = ctx.draw(rs, t);
    return a;
}

bool service_draw(const Vec& x, int k, const Instance& inst,
                  const RandomnessStream& rs, std::uint64_t t) {
    if (k < 0 || k >= inst.K) throw std::out_of_range("server index out of range");
    return rs.uniform(t, Channel::ServiceCoin) <= inst.rate(x, k);
}

const char* to_string(ModeTag m) {
    switch (m) {
        case ModeTag::PureExplore: return "PURE_EXPLORE";
        case ModeTag::EpsExplore: return "EPS_EXPLORE";
        case ModeTag::Ucb: return "UCB";
        case ModeTag::Random: return "RANDOM";
        case ModeTag::Ts: return "TS";
        case ModeTag::MabExplore: return "MAB_EXPLORE";
        case ModeTag::MabExploit: return "MAB_EXPLOIT";
        case ModeTag::Optimal: return "OPTIMAL";
        case ModeTag::Dummy: return "DUMMY";
    }
    return "?";
}

bool same_record(const RoundRecord& a, const RoundRecord& b) {
    auto same_opt = [](const std::optional<Vec>& x, const std::optional<Vec>& y) {
        if (x.has_value() != y.has_value()) return false;
        return !x.has_value() || *x == *y;
    };
    return a.t == b.t && a.arrived == b.arrived && same_opt(a.arrival_feature, b.arrival_feature) &&
           a.queue_len == b.queue_len && same_opt(a.chosen_feature, b.chosen_feature) &&
           a.chosen_entry == b.chosen_entry && a.chosen_server == b.chosen_server &&
           a.departed == b.departed && a.explored == b.explored &&
           a.dummy_served == b.dummy_served && a.mode == b.mode &&
           a.uncertainty == b.uncertainty && a.beta == b.beta && a.bad_round == b.bad_round;
}

RoundRecord step(QueueState& state, const std::optional<std::pair<int, int>>& action,
                 const Arrival& arrival, const Instance& inst,
                 const RandomnessStream& rs, int t) {
    RoundRecord rec;
    rec.t = t;
    rec.queue_len = state.length();
    rec.arrived = arrival.arrived;
    if (arrival.arrived) rec.arrival_feature = arrival.feature;

    // The service uniform is consumed unconditionally so that coupled queues
    // with different occupancy stay on the same randomness.
    const double u = rs.uniform(static_cast<std::uint64_t>(t), Channel::ServiceCoin);

    if (state.empty()) {
        if (action.has_value()) throw std::out_of_range("action given for an empty queue");
        rec.dummy_served = true;
        rec.mode = ModeTag::Dummy;
        (void)u;  // dummy feedback is discarded
    } else {
        if (!action.has_value()) throw std::out_of_range("nonempty queue requires an action");
        const auto [job_index, server] = *action;
        if (job_index < 0 || job_index >= state.length()) {
            throw std::out_of_range("job index out of range");
        }
        if (server < 0 || server >= inst.K) throw std::out_of_range("server index out of range");
        const Job& job = state.jobs[static_cast<std::size_t>(job_index)];
        rec.chosen_feature = job.feature;
        rec.chosen_entry = job.entry_round;
        rec.chosen_server = server;
        rec.departed = u <= inst.rate(job.feature, server);
        if (rec.departed) state.remove(job_index);
    }

    if (arrival.arrived) state.push(arrival.feature, t + 1);
    return rec;
}

} // namespace cqb
