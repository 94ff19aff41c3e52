#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "avpr/error.hpp"
#include "avpr/pdv.hpp"
#include "avpr/random.hpp"

namespace avpr {

/// A session under which the route is observed. The training domain has
/// shift_strength 0 by convention.
struct Domain {
    std::string id = "train";
    std::uint64_t seed = 0;
    double shift_strength = 0.0;
    /// Weight of a domain-specific random confusion matrix blended into the
    /// base confusion. 0 disables the blend.
    double confusion_blend = 0.0;

    friend bool operator==(const Domain&, const Domain&) = default;
};

/// Parameters of the synthetic scene descriptor (the stand-in for a
/// saliency image). Layout: [place one-hot * (1-f) | f | noise channel].
struct DescriptorConfig {
    std::size_t noise_dims = 4;
    double base_noise = 0.05;
    double shift_noise_gain = 0.1;

    friend bool operator==(const DescriptorConfig&, const DescriptorConfig&) = default;
};

struct WorldConfig {
    std::size_t n_viewpoints = 400;
    std::size_t place_len_m = 25;
    std::size_t max_action_m = 30;

    double featureless_fraction = 0.3;
    std::size_t featureless_run_min_m = 40;
    std::size_t featureless_run_max_m = 80;

    // Each confusion row: confusion_diag on the true class, lookalike_mass
    // split across `lookalikes` random other classes, the remainder spread
    // evenly over all other classes.
    double confusion_diag = 0.55;
    std::size_t lookalikes = 2;
    double lookalike_mass = 0.35;

    DescriptorConfig descriptor{};
    std::vector<Domain> domains{};
};

/// Default domain list: the training session plus five shifted test sessions.
inline std::vector<Domain> default_domains(std::uint64_t seed = 0) {
    std::vector<Domain> d;
    d.push_back({"train", derive_seed(seed, {salt::world, 0}), 0.0, 0.0});
    const double shifts[] = {0.2, 0.3, 0.4, 0.5, 0.6};
    for (std::size_t i = 0; i < 5; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "shift%.1f", shifts[i]);
        d.push_back({name, derive_seed(seed, {salt::world, i + 1}), shifts[i], 0.0});
    }
    return d;
}

/// Discretized 1-D route at 1 m resolution, partitioned into contiguous
/// place blocks of `place_len_m` viewpoints (the last block may be shorter).
class TrajectoryWorld {
public:
    std::size_t n_viewpoints = 0;
    std::size_t place_len_m = 1;
    std::size_t max_action_m = 30;
    /// |C| x |C| row-stochastic: P(report j | true place i), noiseless domain.
    std::vector<std::vector<double>> confusion;
    /// Per-viewpoint featureless degree in [0,1].
    std::vector<double> featureless;
    DescriptorConfig descriptor{};
    std::vector<Domain> domains;

    std::size_t place_count() const {
        return (n_viewpoints + place_len_m - 1) / place_len_m;
    }
    std::size_t place_of(std::size_t v) const {
        if (v >= n_viewpoints) throw IndexError("viewpoint " + std::to_string(v) + " out of range");
        return v / place_len_m;
    }
    std::size_t place_begin(std::size_t c) const { return c * place_len_m; }
    std::size_t place_size(std::size_t c) const {
        const std::size_t begin = place_begin(c);
        return std::min(place_len_m, n_viewpoints - begin);
    }
    std::size_t action_count() const { return max_action_m; }
    std::size_t descriptor_dim() const { return place_count() + 1 + descriptor.noise_dims; }

    const Domain& domain(const std::string& id) const {
        for (const auto& d : domains)
            if (d.id == id) return d;
        throw ConfigError("unknown domain '" + id + "'");
    }

    /// Throws ValidationError on the first broken invariant.
    void validate() const {
        if (n_viewpoints == 0) throw ValidationError("world: n_viewpoints must be positive");
        if (place_len_m == 0) throw ValidationError("world: place_len_m must be positive");
        if (max_action_m == 0) throw ValidationError("world: max_action_m must be positive");
        const std::size_t c = place_count();
        if (confusion.size() != c)
            throw ValidationError("world: confusion has " + std::to_string(confusion.size()) + " rows, expected " +
                                  std::to_string(c));
        for (std::size_t i = 0; i < c; ++i) {
            if (confusion[i].size() != c)
                throw ValidationError("world: confusion row " + std::to_string(i) + " has wrong length");
            double s = 0.0;
            for (double x : confusion[i]) {
                if (!(x >= 0.0) || !std::isfinite(x))
                    throw ValidationError("world: confusion row " + std::to_string(i) + " has a negative entry");
                s += x;
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw ValidationError("world: confusion row " + std::to_string(i) + " sums to " + std::to_string(s));
        }
        if (featureless.size() != n_viewpoints) throw ValidationError("world: featureless length mismatch");
        for (std::size_t v = 0; v < n_viewpoints; ++v)
            if (!(featureless[v] >= 0.0 && featureless[v] <= 1.0))
                throw ValidationError("world: featureless degree of viewpoint " + std::to_string(v) +
                                      " outside [0,1]");
        for (const auto& d : domains) {
            if (!(d.shift_strength >= 0.0)) throw ValidationError("world: domain '" + d.id + "' has negative shift");
            if (!(d.confusion_blend >= 0.0 && d.confusion_blend <= 1.0))
                throw ValidationError("world: domain '" + d.id + "' blend outside [0,1]");
        }
    }

    friend bool operator==(const TrajectoryWorld&, const TrajectoryWorld&) = default;
};

namespace detail {

inline std::vector<double> confusion_row(std::size_t c, std::size_t i, double diag, std::size_t lookalikes,
                                         double lookalike_mass, Rng& rng) {
    std::vector<double> row(c, 0.0);
    if (c == 1) {
        row[0] = 1.0;
        return row;
    }
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < c; ++j)
        if (j != i) others.push_back(j);
    std::shuffle(others.begin(), others.end(), rng);
    const std::size_t k = std::min(lookalikes, others.size());
    const double rest = 1.0 - diag - (k > 0 ? lookalike_mass : 0.0);
    row[i] = diag;
    for (std::size_t n = 0; n < k; ++n) row[others[n]] += lookalike_mass / static_cast<double>(k);
    for (std::size_t j : others) row[j] += rest / static_cast<double>(others.size());
    return row;
}

inline std::vector<double> place_featureless_runs(const WorldConfig& cfg, Rng& rng) {
    const std::size_t n = cfg.n_viewpoints;
    std::vector<double> f(n, 0.0);
    auto target = static_cast<std::size_t>(std::llround(cfg.featureless_fraction * static_cast<double>(n)));
    std::size_t placed = 0;
    std::uniform_int_distribution<std::size_t> len_dist(cfg.featureless_run_min_m,
                                                        std::max(cfg.featureless_run_min_m, cfg.featureless_run_max_m));
    for (int attempt = 0; placed < target && attempt < 1000; ++attempt) {
        std::size_t len = std::min(len_dist(rng), target - placed);
        if (len == 0 || len > n) break;
        std::uniform_int_distribution<std::size_t> start_dist(0, n - len);
        const std::size_t s = start_dist(rng);
        // Runs may not overlap or touch an existing run.
        const std::size_t lo = s > 0 ? s - 1 : 0;
        const std::size_t hi = std::min(n - 1, s + len);
        bool clear = true;
        for (std::size_t v = lo; v <= hi && clear; ++v) clear = f[v] == 0.0;
        if (!clear) continue;
        for (std::size_t v = s; v < s + len; ++v) f[v] = 1.0;
        placed += len;
    }
    return f;
}

}  // namespace detail

/// Builds a world deterministically from (config, seed).
inline TrajectoryWorld generate_world(const WorldConfig& cfg, std::uint64_t seed) {
    if (cfg.n_viewpoints == 0) throw ConfigError("n_viewpoints must be positive");
    if (cfg.place_len_m == 0) throw ConfigError("place_len_m must be at least 1");
    if (cfg.max_action_m == 0) throw ConfigError("max_action_m must be at least 1");
    if (cfg.n_viewpoints < 2 * cfg.max_action_m)
        throw ConfigError("n_viewpoints must be at least twice max_action_m");
    if (!(cfg.featureless_fraction >= 0.0 && cfg.featureless_fraction <= 1.0))
        throw ConfigError("featureless_fraction must lie in [0,1]");
    if (cfg.featureless_run_min_m == 0 || cfg.featureless_run_max_m < cfg.featureless_run_min_m)
        throw ConfigError("invalid featureless run length range");
    if (!(cfg.confusion_diag >= 0.0 && cfg.lookalike_mass >= 0.0 && cfg.confusion_diag + cfg.lookalike_mass <= 1.0))
        throw ConfigError("confusion_diag + lookalike_mass must lie in [0,1]");

    TrajectoryWorld w;
    w.n_viewpoints = cfg.n_viewpoints;
    w.place_len_m = cfg.place_len_m;
    w.max_action_m = cfg.max_action_m;
    w.descriptor = cfg.descriptor;
    w.domains = cfg.domains.empty() ? default_domains(seed) : cfg.domains;

    Rng rng = make_rng(seed, {salt::world});
    const std::size_t c = w.place_count();
    w.confusion.reserve(c);
    for (std::size_t i = 0; i < c; ++i)
        w.confusion.push_back(
            detail::confusion_row(c, i, cfg.confusion_diag, cfg.lookalikes, cfg.lookalike_mass, rng));
    w.featureless = detail::place_featureless_runs(cfg, rng);
    w.validate();
    return w;
}

/// Confusion row of `place` under `domain`, including the optional
/// domain-specific blend.
inline std::vector<double> domain_confusion_row(const TrajectoryWorld& w, std::size_t place, const Domain& d) {
    std::vector<double> row = w.confusion.at(place);
    if (d.confusion_blend > 0.0) {
        Rng rng = make_rng(d.seed, {salt::world, place});
        std::gamma_distribution<double> g(1.0, 1.0);
        std::vector<double> alt(row.size());
        double s = 0.0;
        for (double& x : alt) s += (x = g(rng));
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = (1.0 - d.confusion_blend) * row[j] + d.confusion_blend * alt[j] / s;
    }
    return row;
}

/// Noise-free classifier output at `v` under `d`: the confusion row of the
/// true place flattened toward uniform by the featureless degree.
inline Pdv expected_observation(const TrajectoryWorld& w, std::size_t v, const Domain& d) {
    const std::size_t place = w.place_of(v);
    std::vector<double> row = domain_confusion_row(w, place, d);
    const double f = w.featureless[v];
    if (f > 0.0) {
        const double u = 1.0 / static_cast<double>(row.size());
        for (double& x : row) x = (1.0 - f) * x + f * u;
        return Pdv::normalized(std::move(row));
    }
    return Pdv(std::move(row));
}

/// Simulated place-classifier PDV at viewpoint `v`: the expected
/// observation perturbed by per-entry Gamma(1/s, s) multiplicative noise,
/// s = shift_strength. With s = 0 the result is exactly the expected PDV.
inline Pdv observe(const TrajectoryWorld& w, std::size_t v, const Domain& d, Rng& rng) {
    Pdv expected = expected_observation(w, v, d);
    const double s = d.shift_strength;
    if (s <= 0.0) return expected;
    std::gamma_distribution<double> noise(1.0 / s, s);
    std::vector<double> r(expected.vector());
    double total = 0.0;
    for (double& x : r) total += (x *= noise(rng));
    if (!(total > 0.0) || !std::isfinite(total)) return expected;
    return Pdv::normalized(std::move(r));
}

/// Synthetic scene descriptor at `v`; noise sigma grows with the domain shift.
inline std::vector<double> descriptor(const TrajectoryWorld& w, std::size_t v, const Domain& d, Rng& rng) {
    const std::size_t c = w.place_count();
    const std::size_t place = w.place_of(v);
    const double f = w.featureless[v];
    std::vector<double> out(w.descriptor_dim(), 0.0);
    out[place] = 1.0 - f;
    out[c] = f;
    const double sigma = w.descriptor.base_noise + w.descriptor.shift_noise_gain * d.shift_strength;
    if (sigma > 0.0) {
        std::normal_distribution<double> n(0.0, sigma);
        for (double& x : out) x += n(rng);
    }
    return out;
}

/// Descriptor of a fully featureless viewpoint with no noise.
inline std::vector<double> featureless_prototype(const TrajectoryWorld& w) {
    std::vector<double> out(w.descriptor_dim(), 0.0);
    out[w.place_count()] = 1.0;
    return out;
}

}  // namespace avpr
