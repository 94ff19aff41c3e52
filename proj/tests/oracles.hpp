#pragma once

// Reference computations used as test oracles. They deliberately avoid the
// library's own algorithms: Bayes posteriors come from enumerating every
// motion path, ranks from pairwise counting, labels from re-simulating all
// actions, gradients from central differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "avpr/world.hpp"

namespace oracle {

/// Rank of entry k (1-based) when sorted descending, ties broken by index.
inline std::size_t rank_of(const std::vector<double>& p, std::size_t k) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < p.size(); ++j)
        if (p[j] > p[k] || (p[j] == p[k] && j < k)) ++r;
    return r;
}

inline std::vector<double> reciprocal_ranks(const std::vector<double>& p) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = 1.0 / static_cast<double>(rank_of(p, i));
    return out;
}

struct FilterStep {
    long action_m = 0;                // 0 for the initial observation
    std::vector<double> likelihood;   // per viewpoint
};

/// Joint Bayes over whole trajectories: sums prior(x0) * prod kernel(offset)
/// * prod likelihood(x_t) over every offset sequence, then normalizes once.
/// `kernel` holds weights for offsets -R..R; positions are clamped to the
/// route as in the filter.
inline std::vector<double> joint_posterior(std::size_t n, const std::vector<FilterStep>& steps,
                                           const std::vector<double>& kernel) {
    const auto radius = static_cast<long>(kernel.size() / 2);
    std::vector<double> final_mass(n, 0.0);
    std::function<void(std::size_t, long, double)> walk = [&](std::size_t t, long x, double weight) {
        if (weight == 0.0) return;
        if (t == steps.size()) {
            final_mass[static_cast<std::size_t>(x)] += weight;
            return;
        }
        for (long d = -radius; d <= radius; ++d) {
            const long to = std::clamp<long>(x + steps[t].action_m + d, 0, static_cast<long>(n) - 1);
            const double w = weight * kernel[static_cast<std::size_t>(d + radius)] *
                             steps[t].likelihood[static_cast<std::size_t>(to)];
            walk(t + 1, to, w);
        }
    };
    for (std::size_t x0 = 0; x0 < n; ++x0)
        walk(1, static_cast<long>(x0), steps.front().likelihood[x0] / static_cast<double>(n));
    double total = 0.0;
    for (double m : final_mass) total += m;
    for (double& m : final_mass) m /= total;
    return final_mass;
}

/// Viewpoint likelihood of a place PDV: p[place] / |place|.
inline std::vector<double> viewpoint_likelihood(const avpr::TrajectoryWorld& w, const std::vector<double>& place_pdv) {
    std::vector<double> out(w.n_viewpoints);
    for (std::size_t v = 0; v < w.n_viewpoints; ++v) {
        const std::size_t c = v / w.place_len_m;
        const std::size_t size = std::min(w.place_len_m, w.n_viewpoints - c * w.place_len_m);
        out[v] = place_pdv[c] / static_cast<double>(size);
    }
    return out;
}

inline std::vector<double> place_marginal(const avpr::TrajectoryWorld& w, const std::vector<double>& belief) {
    std::vector<double> out(w.place_count(), 0.0);
    for (std::size_t v = 0; v < belief.size(); ++v) out[v / w.place_len_m] += belief[v];
    return out;
}

/// Noise-free observation at v: (1-f) * confusion row + f * uniform.
inline std::vector<double> noiseless_observation(const avpr::TrajectoryWorld& w, std::size_t v) {
    const auto& row = w.confusion[v / w.place_len_m];
    const double f = w.featureless[v];
    std::vector<double> out(row.size());
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += (out[j] = (1.0 - f) * row[j] + f / static_cast<double>(row.size()));
    for (double& x : out) x /= s;
    return out;
}

/// Reciprocal rank of the true place after observing at v, moving a meters
/// (deterministic odometry) and observing again, computed by enumeration.
inline double single_step_rr(const avpr::TrajectoryWorld& w, std::size_t v, std::size_t a) {
    const std::vector<FilterStep> steps{{0, viewpoint_likelihood(w, noiseless_observation(w, v))},
                                        {static_cast<long>(a), viewpoint_likelihood(w, noiseless_observation(w, v + a))}};
    const auto post = joint_posterior(w.n_viewpoints, steps, {1.0});
    const auto place = place_marginal(w, post);
    return 1.0 / static_cast<double>(rank_of(place, (v + a) / w.place_len_m));
}

/// Central-difference gradient of f at x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Fourth-order central difference (five-point stencil). The step sits near
/// the optimum eps^(1/5), keeping rounding error small on tiny or zero entries.
inline std::vector<double> numeric_gradient5(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h = 1e-3) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        auto at = [&](double d) {
            x[i] = keep + d;
            return f(x);
        };
        g[i] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h);
        x[i] = keep;
    }
    return g;
}

/// max_i |a_i - b_i| / max(1e-8, |a_i| + |b_i|)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max(1e-8, std::abs(a[i]) + std::abs(b[i]));
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

/// Finite-horizon value iteration on a deterministic MDP with terminal
/// rewards. next(s, a) gives the successor, reward(s, a) the reward of the
/// last step. Returns, per initial state, the set of optimal actions.
inline std::vector<std::vector<std::size_t>> optimal_actions(std::size_t states, std::size_t actions,
                                                             std::size_t horizon,
                                                             const std::function<std::size_t(std::size_t, std::size_t)>& next,
                                                             const std::function<double(std::size_t, std::size_t)>& reward) {
    std::vector<double> value(states, 0.0);  // value with 0 steps to go
    std::vector<std::vector<double>> q(states, std::vector<double>(actions));
    for (std::size_t togo = 1; togo <= horizon; ++togo) {
        std::vector<double> nv(states);
        for (std::size_t s = 0; s < states; ++s) {
            double best = -1e300;
            for (std::size_t a = 0; a < actions; ++a) {
                q[s][a] = togo == 1 ? reward(s, a) : value[next(s, a)];
                best = std::max(best, q[s][a]);
            }
            nv[s] = best;
        }
        value = nv;
    }
    std::vector<std::vector<std::size_t>> out(states);
    for (std::size_t s = 0; s < states; ++s)
        for (std::size_t a = 0; a < actions; ++a)
            if (q[s][a] == value[s]) out[s].push_back(a);
    return out;
}

}  // namespace oracle
