#include "cqb/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cqb/errors.hpp"

namespace cqb {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected on/off, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

} // namespace

PolicyConfig ExperimentConfig::policy_config(PolicyKind kind) const {
    PolicyConfig pc;
    pc.kind = kind;
    pc.eps_rate = eps_rate;
    pc.tau_mode = tau_mode;
    pc.tau = tau;
    pc.tau_C = tau_C;
    pc.tau_C3 = tau_C3;
    pc.ts_R = ts_R;
    pc.delta = delta;
    return pc;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::map<std::string, std::string> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return entries;
}

void apply_config_entries(ExperimentConfig& cfg,
                          const std::map<std::string, std::string>& entries) {
    for (const auto& [key, value] : entries) {
        if (key == "T") cfg.T = static_cast<int>(parse_int(key, value));
        else if (key == "reps") cfg.n_reps = static_cast<int>(parse_int(key, value));
        else if (key == "d") cfg.instance.d = static_cast<int>(parse_int(key, value));
        else if (key == "K") cfg.instance.K = static_cast<int>(parse_int(key, value));
        else if (key == "lambda") cfg.instance.lambda = parse_double(key, value);
        else if (key == "slack") cfg.instance.slack = parse_double(key, value);
        else if (key == "kappa") cfg.instance.kappa = parse_double(key, value);
        else if (key == "lambda0") cfg.instance.lambda0 = parse_double(key, value);
        else if (key == "R") cfg.instance.R = parse_double(key, value);
        else if (key == "sigma0_sq") cfg.instance.sigma0_sq = parse_double(key, value);
        else if (key == "S") {
            cfg.instance.S_explicit = value == "auto" ? -1.0 : parse_double(key, value);
        } else if (key == "context") {
            if (value == "synthetic") {
                cfg.instance.context.kind = ContextSpec::Kind::Synthetic;
            } else if (value.rfind("csv:", 0) == 0) {
                cfg.instance.context.kind = ContextSpec::Kind::Csv;
                cfg.instance.context.csv_path = value.substr(4);
            } else {
                throw ConfigError("context: expected 'synthetic' or 'csv:PATH', got '" + value + "'");
            }
        } else if (key == "normalize") cfg.instance.context.normalize = parse_bool(key, value);
        else if (key == "standardize") cfg.instance.context.standardize = parse_bool(key, value);
        else if (key == "with_replacement") cfg.instance.context.with_replacement = parse_bool(key, value);
        else if (key == "cert_samples") cfg.instance.cert_samples = static_cast<int>(parse_int(key, value));
        else if (key == "cert_enforce") cfg.instance.cert_enforce = parse_bool(key, value);
        else if (key == "cert_budget") cfg.instance.cert_budget = static_cast<int>(parse_int(key, value));
        else if (key == "policies") {
            cfg.policies.clear();
            for (const auto& name : split_list(value)) cfg.policies.push_back(policy_from_string(name));
        } else if (key == "eps_rate") {
            cfg.eps_rate = value == "auto" ? -1.0 : parse_double(key, value);
        } else if (key == "tau_mode") {
            if (value == "theoretical") cfg.tau_mode = TauMode::Theoretical;
            else if (value == "practical") cfg.tau_mode = TauMode::Practical;
            else if (value == "explicit") cfg.tau_mode = TauMode::Explicit;
            else throw ConfigError("tau_mode: expected theoretical/practical/explicit");
        } else if (key == "tau") cfg.tau = parse_int(key, value);
        else if (key == "tau_C") cfg.tau_C = parse_double(key, value);
        else if (key == "tau_C3") cfg.tau_C3 = parse_double(key, value);
        else if (key == "ts_R") cfg.ts_R = parse_double(key, value);
        else if (key == "delta") {
            cfg.delta = value == "auto" ? -1.0 : parse_double(key, value);
        } else if (key == "seed") cfg.master_seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "sweep_eps") {
            cfg.sweep_eps.clear();
            for (const auto& v : split_list(value)) cfg.sweep_eps.push_back(parse_double(key, v));
        } else if (key == "sweep_K") {
            cfg.sweep_K.clear();
            for (const auto& v : split_list(value)) cfg.sweep_K.push_back(static_cast<int>(parse_int(key, v)));
        } else if (key == "sweep_d") {
            cfg.sweep_d.clear();
            for (const auto& v : split_list(value)) cfg.sweep_d.push_back(static_cast<int>(parse_int(key, v)));
        } else if (key == "out") cfg.out_dir = value;
        else if (key == "workers") cfg.workers = static_cast<int>(parse_int(key, value));
        else if (key == "assert_elliptic") cfg.assert_elliptic = parse_bool(key, value);
        else if (key == "assert_bad_round") cfg.assert_bad_round = parse_bool(key, value);
        else if (key == "psi_samples") cfg.psi_samples = static_cast<int>(parse_int(key, value));
        else if (key == "psi_T_min") cfg.psi_T_min = static_cast<int>(parse_int(key, value));
        else if (key == "psi_T_max") cfg.psi_T_max = static_cast<int>(parse_int(key, value));
        else if (key == "psi_d_max") cfg.psi_d_max = static_cast<int>(parse_int(key, value));
        else if (key == "psi_K_max") cfg.psi_K_max = static_cast<int>(parse_int(key, value));
        else if (key == "psi_exhaustive") cfg.psi_exhaustive = parse_bool(key, value);
        else throw ConfigError("unknown config key: " + key);
    }
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.T < 2) throw ConfigError("T: must be >= 2");
    if (cfg.n_reps < 1) throw ConfigError("reps: must be >= 1");
    if (cfg.workers < 1) throw ConfigError("workers: must be >= 1");
    if (cfg.policies.empty()) throw ConfigError("policies: at least one required");
    if (cfg.instance.d < 1) throw ConfigError("d: must be >= 1");
    if (cfg.instance.K < 1) throw ConfigError("K: must be >= 1");
    if (cfg.instance.lambda < 0 || cfg.instance.lambda > 1) throw ConfigError("lambda: must lie in [0,1]");
    if (!(cfg.instance.slack > 0)) throw ConfigError("slack: must be positive");
    if (cfg.instance.kappa < 4) throw ConfigError("kappa: must be >= 4");
    if (!(cfg.instance.lambda0 > 0)) throw ConfigError("lambda0: must be positive");
    if (cfg.psi_T_min < 3 || cfg.psi_T_max < cfg.psi_T_min) throw ConfigError("psi_T_min/psi_T_max: bad range");
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg) {
    std::vector<SweepPoint> points;
    const std::vector<double> eps_axis = cfg.sweep_eps.empty()
                                             ? std::vector<double>{cfg.instance.slack}
                                             : cfg.sweep_eps;
    const std::vector<int> k_axis = cfg.sweep_K.empty() ? std::vector<int>{cfg.instance.K} : cfg.sweep_K;
    const std::vector<int> d_axis = cfg.sweep_d.empty() ? std::vector<int>{cfg.instance.d} : cfg.sweep_d;
    const bool swept = !cfg.sweep_eps.empty() || !cfg.sweep_K.empty() || !cfg.sweep_d.empty();

    char buf[64];
    for (double eps : eps_axis) {
        for (int K : k_axis) {
            for (int d : d_axis) {
                SweepPoint p;
                p.instance = cfg.instance;
                p.instance.slack = eps;
                p.instance.K = K;
                p.instance.d = d;
                p.instance.context.d = d;
                p.slack_override = eps;
                if (!swept) {
                    p.key = "base";
                } else {
                    std::string key;
                    if (!cfg.sweep_eps.empty()) {
                        std::snprintf(buf, sizeof(buf), "eps=%g", eps);
                        key += buf;
                    }
                    if (!cfg.sweep_K.empty()) {
                        std::snprintf(buf, sizeof(buf), "%sK=%d", key.empty() ? "" : ";", K);
                        key += buf;
                    }
                    if (!cfg.sweep_d.empty()) {
                        std::snprintf(buf, sizeof(buf), "%sd=%d", key.empty() ? "" : ";", d);
                        key += buf;
                    }
                    p.key = key;
                }
                points.push_back(std::move(p));
            }
        }
    }
    return points;
}

namespace {

struct Task {
    std::size_t point_idx;
    std::size_t policy_idx;
    int rep;
};

struct TaskResult {
    bool ran = false;
    std::string error;
    std::vector<int> q_alg;  // Q(t), t=1..T
    std::vector<int> q_opt;
    long long bad_rounds = 0;
    double elliptic_lhs = 0;
    double elliptic_rhs = 0;
    std::vector<std::string> estimator_snapshots;
};

nlohmann::json config_echo(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["T"] = cfg.T;
    j["reps"] = cfg.n_reps;
    j["d"] = cfg.instance.d;
    j["K"] = cfg.instance.K;
    j["lambda"] = cfg.instance.lambda;
    j["slack"] = cfg.instance.slack;
    j["kappa"] = cfg.instance.kappa;
    j["lambda0"] = cfg.instance.lambda0;
    j["sigma0_sq"] = cfg.instance.sigma0_sq;
    j["S"] = cfg.instance.S_explicit;
    j["normalize"] = cfg.instance.context.normalize;
    j["cert_enforce"] = cfg.instance.cert_enforce;
    j["cert_samples"] = cfg.instance.cert_samples;
    j["R"] = cfg.instance.R;
    j["seed"] = cfg.master_seed;
    j["tau_mode"] = cfg.tau_mode == TauMode::Practical
                        ? "practical"
                        : (cfg.tau_mode == TauMode::Theoretical ? "theoretical" : "explicit");
    j["tau"] = cfg.tau;
    j["tau_C"] = cfg.tau_C;
    j["tau_C3"] = cfg.tau_C3;
    j["eps_rate"] = cfg.eps_rate;
    j["delta"] = cfg.delta;
    j["ts_R"] = cfg.ts_R;
    j["assert_elliptic"] = cfg.assert_elliptic;
    j["assert_bad_round"] = cfg.assert_bad_round;
    j["sweep_eps"] = cfg.sweep_eps;
    j["sweep_K"] = cfg.sweep_K;
    j["sweep_d"] = cfg.sweep_d;
    j["out"] = cfg.out_dir;
    j["workers"] = cfg.workers;
    std::vector<std::string> pols;
    for (auto p : cfg.policies) pols.emplace_back(to_string(p));
    j["policies"] = pols;
    return j;
}

std::string git_hash() {
    std::FILE* pipe = ::popen("git rev-parse HEAD 2>/dev/null", "r");
    if (!pipe) return "unknown";
    char buf[64] = {0};
    std::string out;
    while (std::fgets(buf, sizeof(buf), pipe)) out += buf;
    ::pclose(pipe);
    const auto end = out.find_first_of("\r\n");
    if (end != std::string::npos) out = out.substr(0, end);
    return out.empty() ? "unknown" : out;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto t_start = std::chrono::steady_clock::now();
    const auto points = expand_sweep(cfg);

    // Instances are derived from the rep index only, so sweep points compare
    // under common random numbers. Infeasible points are skipped whole.
    std::vector<std::vector<Instance>> instances(points.size());
    ExperimentResult result;
    std::vector<bool> feasible(points.size(), true);
    for (std::size_t p = 0; p < points.size(); ++p) {
        for (int rep = 0; rep < cfg.n_reps; ++rep) {
            try {
                instances[p].push_back(generate_instance(
                    points[p].instance,
                    derive_seed(cfg.master_seed, seed_salt::kInstance, static_cast<std::uint64_t>(rep))));
            } catch (const ConfigError& e) {
                result.failures.push_back("sweep point '" + points[p].key + "' skipped: " + e.what());
                feasible[p] = false;
                break;
            }
        }
    }

    std::vector<Task> tasks;
    for (std::size_t p = 0; p < points.size(); ++p) {
        if (!feasible[p]) continue;
        for (std::size_t pol = 0; pol < cfg.policies.size(); ++pol) {
            for (int rep = 0; rep < cfg.n_reps; ++rep) tasks.push_back(Task{p, pol, rep});
        }
    }

    std::vector<TaskResult> results(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            TaskResult& out = results[i];
            try {
                RunOptions opts;
                opts.assert_elliptic = cfg.assert_elliptic;
                opts.assert_bad_round = cfg.assert_bad_round;
                const auto& inst = instances[task.point_idx][static_cast<std::size_t>(task.rep)];
                const auto pc = cfg.policy_config(cfg.policies[task.policy_idx]);
                const auto seed =
                    derive_seed(cfg.master_seed, seed_salt::kRun, static_cast<std::uint64_t>(task.rep));
                auto [alg, opt] = run_coupled(pc, inst, cfg.T, seed, opts);
                out.q_alg.reserve(static_cast<std::size_t>(cfg.T));
                out.q_opt.reserve(static_cast<std::size_t>(cfg.T));
                for (int t = 1; t <= cfg.T; ++t) {
                    out.q_alg.push_back(alg.q(t));
                    out.q_opt.push_back(opt.q(t));
                }
                out.bad_rounds = count_bad_rounds(alg, inst.slack);
                out.elliptic_lhs = alg.elliptic_lhs;
                out.elliptic_rhs = alg.elliptic_rhs;
                out.estimator_snapshots = std::move(alg.estimator_snapshots);
                out.ran = true;
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
    };
    const int n_workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(tasks.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    std::filesystem::create_directories(cfg.out_dir);
    result.curves_path = cfg.out_dir + "/curves.csv";
    result.summary_path = cfg.out_dir + "/summary.csv";
    result.meta_path = cfg.out_dir + "/meta.jsonl";

    // Ordered sink: tasks are written in construction order regardless of
    // which worker ran them.
    std::ofstream curves(result.curves_path);
    curves << "policy,sweep_key,rep,t,Q,Q_star\n";
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!results[i].ran) continue;
        const Task& task = tasks[i];
        const char* pol = to_string(cfg.policies[task.policy_idx]);
        const std::string& key = points[task.point_idx].key;
        for (int t = 1; t <= cfg.T; ++t) {
            curves << pol << ',' << key << ',' << task.rep << ',' << t << ','
                   << results[i].q_alg[static_cast<std::size_t>(t - 1)] << ','
                   << results[i].q_opt[static_cast<std::size_t>(t - 1)] << '\n';
        }
    }
    curves.close();

    std::ofstream summary(result.summary_path);
    summary << "policy,sweep_key,mean_final_Q,std_final_Q,mean_regret,bad_rounds,elliptic_lhs,elliptic_rhs\n";
    char buf[160];
    for (std::size_t p = 0; p < points.size(); ++p) {
        if (!feasible[p]) continue;
        for (std::size_t pol = 0; pol < cfg.policies.size(); ++pol) {
            PolicySummary s;
            s.sweep_key = points[p].key;
            s.policy = cfg.policies[pol];
            double sum_q = 0, sum_q2 = 0, sum_reg = 0, sum_bad = 0;
            int n = 0;
            for (std::size_t i = 0; i < tasks.size(); ++i) {
                if (tasks[i].point_idx != p || tasks[i].policy_idx != pol) continue;
                if (!results[i].ran) {
                    result.failures.push_back(std::string(to_string(s.policy)) + "/" + s.sweep_key +
                                              "/rep" + std::to_string(tasks[i].rep) + ": " +
                                              results[i].error);
                    continue;
                }
                const double q = results[i].q_alg.back();
                const double qs = results[i].q_opt.back();
                sum_q += q;
                sum_q2 += q * q;
                sum_reg += q - qs;
                sum_bad += static_cast<double>(results[i].bad_rounds);
                s.max_elliptic_lhs = std::max(s.max_elliptic_lhs, results[i].elliptic_lhs);
                s.elliptic_rhs = std::max(s.elliptic_rhs, results[i].elliptic_rhs);
                ++n;
            }
            if (n == 0) continue;
            s.mean_final_q = sum_q / n;
            s.std_final_q = n > 1 ? std::sqrt((sum_q2 - sum_q * sum_q / n) / (n - 1)) : 0.0;
            s.mean_regret = sum_reg / n;
            s.mean_bad_rounds = sum_bad / n;
            summary << to_string(s.policy) << ',' << s.sweep_key << ',';
            std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", s.mean_final_q,
                          s.std_final_q, s.mean_regret, s.mean_bad_rounds, s.max_elliptic_lhs,
                          s.elliptic_rhs);
            summary << buf;
            result.summaries.push_back(std::move(s));
        }
    }
    summary.close();

    std::ofstream meta(result.meta_path);
    {
        nlohmann::json j;
        j["type"] = "config";
        j["config"] = config_echo(cfg);
        j["git_hash"] = git_hash();
        meta << j.dump() << '\n';
    }
    for (std::size_t p = 0; p < points.size(); ++p) {
        if (!feasible[p]) continue;
        for (std::size_t r = 0; r < instances[p].size(); ++r) {
            const Instance& inst = instances[p][r];
            nlohmann::json j;
            j["type"] = "instance";
            j["sweep_key"] = points[p].key;
            j["rep"] = r;
            j["S"] = inst.S;
            j["cert_enforced"] = inst.cert.enforced;
            j["cert_attempts"] = inst.cert.attempts;
            j["cert_min_margin"] = inst.cert.min_margin;
            meta << j.dump() << '\n';
        }
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!results[i].ran || results[i].estimator_snapshots.empty()) continue;
        nlohmann::json j;
        j["type"] = "estimator_snapshot";
        j["policy"] = to_string(cfg.policies[tasks[i].policy_idx]);
        j["sweep_key"] = points[tasks[i].point_idx].key;
        j["rep"] = tasks[i].rep;
        j["records"] = results[i].estimator_snapshots;
        meta << j.dump() << '\n';
    }
    {
        const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start);
        nlohmann::json j;
        j["type"] = "timing";
        j["seconds"] = elapsed.count();
        meta << j.dump() << '\n';
    }
    for (const auto& f : result.failures) {
        nlohmann::json j;
        j["type"] = "failure";
        j["message"] = f;
        meta << j.dump() << '\n';
    }
    meta.close();
    return result;
}

PsiCheckResult psi_check(const ExperimentConfig& cfg) {
    validate_config(cfg);
    PsiCheckResult res;
    std::filesystem::create_directories(cfg.out_dir);
    res.csv_path = cfg.out_dir + "/psi.csv";
    std::ofstream csv(res.csv_path);
    csv << "t,T,seed,psi,divergence_event\n";

    const RandomnessStream grid(derive_seed(cfg.master_seed, seed_salt::kPsi));

    // Small pool of certified low-load instances, recycled across draws.
    const int pool_size = std::max(1, std::min(100, cfg.psi_samples / 20));
    std::vector<Instance> pool;
    std::vector<InstanceConfig> pool_cfgs;
    for (int i = 0; i < pool_size; ++i) {
        InstanceConfig ic;
        ic.d = 1 + static_cast<int>(grid.pick(static_cast<std::uint64_t>(i), Channel::ArrivalCoin,
                                              static_cast<std::uint64_t>(cfg.psi_d_max)));
        ic.K = 1 + static_cast<int>(grid.pick(static_cast<std::uint64_t>(i), Channel::ServiceCoin,
                                              static_cast<std::uint64_t>(cfg.psi_K_max)));
        ic.lambda = 0.25 + 0.05 * static_cast<double>(grid.pick(static_cast<std::uint64_t>(i),
                                                                Channel::ExploreCoin, 3));
        ic.slack = 0.05;
        ic.kappa = 10.0;
        ic.context.kind = ContextSpec::Kind::Synthetic;
        ic.context.d = ic.d;
        ic.context.normalize = true;
        ic.cert_samples = 2000;
        ic.cert_budget = 5000;
        pool.push_back(generate_instance(ic, derive_seed(cfg.master_seed, seed_salt::kPsi,
                                                         static_cast<std::uint64_t>(i) + 1000)));
        pool_cfgs.push_back(ic);
    }

    auto run_one = [&](PolicyConfig pc, const Instance& inst, int T, int t, std::uint64_t seed) {
        if (pc.kind == PolicyKind::CqbEps) {
            // The practical tau formula needs slack > 2 eps; at this scale we
            // pin both knobs instead.
            pc.tau_mode = TauMode::Explicit;
            pc.tau = T / 4;
            pc.eps_rate = 0.02;
        }
        ++res.samples;
        try {
            const PsiSample s = psi_sample(pc, inst, T, t, seed);
            res.histogram[to_string(s.event)][s.value] += 1;
            csv << s.t << ',' << s.T << ',' << s.seed << ',' << s.value << ',' << to_string(s.event)
                << '\n';
        } catch (const AssertionBreach& e) {
            ++res.violations;
            csv << t << ',' << T << ',' << seed << ",VIOLATION," << e.what() << '\n';
        }
    };

    const std::vector<PolicyKind>& pols = cfg.policies;
    const int T_cap = cfg.psi_exhaustive ? std::min(cfg.psi_T_max, 50) : cfg.psi_T_max;
    const int T_floor = std::min(cfg.psi_T_min, T_cap);
    for (long long i = 0; res.samples < cfg.psi_samples; ++i) {
        const Instance& inst = pool[static_cast<std::size_t>(i % pool_size)];
        const PolicyConfig pc = cfg.policy_config(pols[static_cast<std::size_t>(i) % pols.size()]);
        const int T = T_floor +
                      static_cast<int>(grid.pick(static_cast<std::uint64_t>(i), Channel::ArrivalContext,
                                                 static_cast<std::uint64_t>(T_cap - T_floor + 1)));
        const auto seed = derive_seed(cfg.master_seed, seed_salt::kPsi, 1u << 20 | static_cast<std::uint64_t>(i));
        if (cfg.psi_exhaustive) {
            for (int t = 1; t <= T - 1 && res.samples < cfg.psi_samples; ++t) {
                run_one(pc, inst, T, t, seed);
            }
        } else {
            const int t = 1 + static_cast<int>(grid.pick(static_cast<std::uint64_t>(i), Channel::ServerPick,
                                                         static_cast<std::uint64_t>(T - 1)));
            run_one(pc, inst, T, t, seed);
        }
    }
    return res;
}

} // namespace cqb
