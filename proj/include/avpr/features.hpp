#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "avpr/error.hpp"
#include "avpr/pdv.hpp"

namespace avpr {

/// Real feature vector handed to the planner networks.
class StateVector {
public:
    StateVector() = default;
    explicit StateVector(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& vector() const noexcept { return values_; }

    friend bool operator==(const StateVector&, const StateVector&) = default;

private:
    std::vector<double> values_;
};

using RrfVector = StateVector;

/// 1-based descending ranks; equal entries are ranked by index.
inline std::vector<std::size_t> descending_ranks(std::span<const double> p) {
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    std::vector<std::size_t> rank(p.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
    return rank;
}

/// Reciprocal rank feature: entry i holds 1 / (k + rank_i), stored at the
/// element's own index. k = 0 gives the plain reciprocal rank.
inline RrfVector rrf(std::span<const double> p, double k = 0.0) {
    if (p.empty()) throw DimensionError("rrf: empty vector");
    const auto rank = descending_ranks(p);
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = 1.0 / (k + static_cast<double>(rank[i]));
    return RrfVector(std::move(out));
}

inline RrfVector rrf(const Pdv& p, double k = 0.0) { return rrf(p.values(), k); }

/// DQN state: [rrf(ilc) | rrf(olc)], ILC block first.
inline StateVector fuse(const Pdv& ilc, const Pdv& olc, std::size_t action_count, std::size_t place_count,
                        double k = 0.0) {
    if (ilc.size() != action_count)
        throw DimensionError("fuse: ILC has " + std::to_string(ilc.size()) + " entries, expected " +
                             std::to_string(action_count));
    if (olc.size() != place_count)
        throw DimensionError("fuse: OLC has " + std::to_string(olc.size()) + " entries, expected " +
                             std::to_string(place_count));
    std::vector<double> out = rrf(ilc, k).vector();
    const auto o = rrf(olc, k);
    out.insert(out.end(), o.vector().begin(), o.vector().end());
    return StateVector(std::move(out));
}

}  // namespace avpr
