#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "avpr/error.hpp"
#include "avpr/pdv.hpp"
#include "avpr/world.hpp"

namespace avpr {

/// Odometry model of the 1-D histogram filter. Mass that would leave the
/// route piles up on the boundary cell (clamp).
struct MotionModel {
    enum class Kind { deterministic, gaussian };
    Kind kind = Kind::deterministic;
    double sigma_m = 0.0;

    static MotionModel deterministic() { return {}; }
    static MotionModel gaussian(double sigma) { return {Kind::gaussian, sigma}; }

    /// Discretized Gaussian on offsets -R..R, R = ceil(3 sigma); {1} for the
    /// deterministic model or sigma 0.
    std::vector<double> kernel() const {
        if (sigma_m < 0.0) throw ConfigError("motion sigma must be nonnegative");
        if (kind == Kind::deterministic || sigma_m == 0.0) return {1.0};
        const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma_m));
        std::vector<double> k;
        double total = 0.0;
        for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
            const double x = static_cast<double>(d) / sigma_m;
            k.push_back(std::exp(-0.5 * x * x));
            total += k.back();
        }
        for (double& x : k) x /= total;
        return k;
    }

    friend bool operator==(const MotionModel&, const MotionModel&) = default;
};

/// Prediction step: shift the belief forward by `action_m` cells and blur
/// it with the motion kernel.
inline Pdv motion_update(const Pdv& belief, long action_m, const MotionModel& mm) {
    if (action_m <= 0) throw DomainError("motion_update: action must be at least 1 m");
    const auto n = static_cast<std::ptrdiff_t>(belief.size());
    const std::vector<double> kernel = mm.kernel();
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    std::vector<double> out(belief.size(), 0.0);
    for (std::ptrdiff_t v = 0; v < n; ++v) {
        const double mass = belief[static_cast<std::size_t>(v)];
        if (mass == 0.0) continue;
        for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
            const std::ptrdiff_t to = std::clamp<std::ptrdiff_t>(v + action_m + d, 0, n - 1);
            out[static_cast<std::size_t>(to)] += mass * kernel[static_cast<std::size_t>(d + radius)];
        }
    }
    return Pdv(std::move(out));
}

/// Correction step: pointwise product with the likelihood, renormalized.
/// Throws DegenerateBeliefError when the product has no mass.
inline Pdv perception_update(const Pdv& belief, std::span<const double> likelihood) {
    if (likelihood.size() != belief.size())
        throw DimensionError("perception_update: likelihood has " + std::to_string(likelihood.size()) +
                             " cells, belief has " + std::to_string(belief.size()));
    std::vector<double> post(belief.size());
    double total = 0.0;
    for (std::size_t i = 0; i < post.size(); ++i) {
        if (!(likelihood[i] >= 0.0) || !std::isfinite(likelihood[i]))
            throw DomainError("perception_update: likelihood entries must be finite and nonnegative");
        total += (post[i] = belief[i] * likelihood[i]);
    }
    if (!(total > 0.0)) throw DegenerateBeliefError("perception_update: posterior has zero mass");
    for (double& x : post) x /= total;
    return Pdv(std::move(post));
}

/// Marginalizes a viewpoint belief onto place classes.
inline Pdv viewpoint_to_place(const Pdv& belief, const TrajectoryWorld& w) {
    if (belief.size() != w.n_viewpoints)
        throw DimensionError("viewpoint_to_place: belief has " + std::to_string(belief.size()) + " cells, world has " +
                             std::to_string(w.n_viewpoints));
    std::vector<double> p(w.place_count(), 0.0);
    for (std::size_t v = 0; v < belief.size(); ++v) p[w.place_of(v)] += belief[v];
    return Pdv(std::move(p));
}

/// Spreads each place probability evenly over that place's viewpoints.
inline std::vector<double> place_to_viewpoint_weights(const Pdv& place_pdv, const TrajectoryWorld& w) {
    if (place_pdv.size() != w.place_count())
        throw DimensionError("place_to_viewpoint: PDV has " + std::to_string(place_pdv.size()) + " classes, world has " +
                             std::to_string(w.place_count()));
    std::vector<double> out(w.n_viewpoints);
    for (std::size_t v = 0; v < w.n_viewpoints; ++v) {
        const std::size_t c = w.place_of(v);
        out[v] = place_pdv[c] / static_cast<double>(w.place_size(c));
    }
    return out;
}

inline Pdv place_to_viewpoint(const Pdv& place_pdv, const TrajectoryWorld& w) {
    return Pdv(place_to_viewpoint_weights(place_pdv, w));
}

}  // namespace avpr
