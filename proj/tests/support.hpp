#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "cqb/env.hpp"
#include "cqb/estimator.hpp"

namespace cqb::test {

// Instance with hand-picked parameters, bypassing generation.
inline Instance manual_instance(int d, int K, double lambda, std::vector<Vec> thetas,
                                double slack = 0.1, bool normalize = false) {
    Instance inst;
    inst.d = d;
    inst.K = K;
    inst.lambda = lambda;
    inst.slack = slack;
    inst.kappa = 10.0;
    inst.lambda0 = 1.0;
    inst.R = 0.25;
    inst.sigma0_sq = 1.0 / 3.0;
    inst.theta_star = std::move(thetas);
    double mx = 0;
    for (const auto& th : inst.theta_star) mx = std::max(mx, th.norm());
    inst.S = std::max(1.0, std::ceil(mx));
    inst.dummy_job = Vec::Zero(d);
    inst.context = ContextSource::synthetic(d, normalize);
    return inst;
}

inline Vec random_vec(const RandomnessStream& rs, std::uint64_t t, int d,
                      Channel ch = Channel::ArrivalContext) {
    Vec x(d);
    for (int j = 0; j < d; ++j) {
        x[j] = 2.0 * rs.uniform(t, ch, static_cast<std::uint64_t>(j)) - 1.0;
    }
    return x;
}

} // namespace cqb::test
