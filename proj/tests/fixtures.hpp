#pragma once

// Randomized inputs shared by the unit tests and the acceptance suite.

#include <random>
#include <vector>

#include "avpr/pdv.hpp"
#include "avpr/random.hpp"
#include "avpr/world.hpp"

namespace fixture {

inline std::vector<double> random_simplex(avpr::Rng& rng, std::size_t n) {
    std::gamma_distribution<double> g(1.0, 1.0);
    std::vector<double> x(n);
    double s = 0.0;
    for (double& v : x) s += (v = g(rng));
    for (double& v : x) v /= s;
    return x;
}

inline avpr::Pdv random_pdv(avpr::Rng& rng, std::size_t n) { return avpr::Pdv::normalized(random_simplex(rng, n)); }

/// World with `n` viewpoints, random place length, random confusion rows and
/// random featureless degrees (some exactly 0 or 1).
inline avpr::TrajectoryWorld random_world(avpr::Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> len(1, std::max<std::size_t>(1, n / 2));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    avpr::TrajectoryWorld w;
    w.n_viewpoints = n;
    w.place_len_m = len(rng);
    w.max_action_m = std::max<std::size_t>(1, n / 4);
    for (std::size_t c = 0; c < w.place_count(); ++c) w.confusion.push_back(random_simplex(rng, w.place_count()));
    w.featureless.resize(n);
    for (double& f : w.featureless) {
        const double u = unit(rng);
        f = u < 0.2 ? 1.0 : u < 0.6 ? 0.0 : unit(rng);
    }
    w.domains = {{"train", 1, 0.0, 0.0}};
    w.validate();
    return w;
}

}  // namespace fixture
