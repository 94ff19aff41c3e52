#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avpr/error.hpp"

namespace avpr {

/// Probabilistic distribution vector: nonnegative entries summing to one.
///
/// Used for viewpoint beliefs, place PDVs and action PDVs alike. The class
/// only ever holds valid distributions; every constructor checks or
/// establishes the invariant.
class Pdv {
public:
    static constexpr double kSumTolerance = 1e-9;

    Pdv() = default;

    /// Takes ownership of `values`, which must already be a distribution.
    explicit Pdv(std::vector<double> values) : values_(std::move(values)) { validate(); }

    /// Normalizes a nonnegative vector with positive mass.
    static Pdv normalized(std::vector<double> weights) {
        if (weights.empty()) throw DimensionError("Pdv: empty vector");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("Pdv: negative or non-finite weight");
            total += w;
        }
        if (!(total > 0.0)) throw DegenerateBeliefError("Pdv: weights have zero mass");
        for (double& w : weights) w /= total;
        Pdv p;
        p.values_ = std::move(weights);
        return p;
    }

    static Pdv uniform(std::size_t n) {
        if (n == 0) throw DimensionError("Pdv: empty vector");
        Pdv p;
        p.values_.assign(n, 1.0 / static_cast<double>(n));
        return p;
    }

    static Pdv delta(std::size_t n, std::size_t at) {
        if (at >= n) throw IndexError("Pdv::delta: index out of range");
        Pdv p;
        p.values_.assign(n, 0.0);
        p.values_[at] = 1.0;
        return p;
    }

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& vector() const noexcept { return values_; }

    /// Index of the largest entry; ties go to the smallest index.
    std::size_t argmax() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < values_.size(); ++i)
            if (values_[i] > values_[best]) best = i;
        return best;
    }

    /// 1-based descending rank of entry `i`; equal entries rank by index.
    std::size_t rank_of(std::size_t i) const {
        if (i >= values_.size()) throw IndexError("Pdv::rank_of: index out of range");
        std::size_t rank = 1;
        for (std::size_t j = 0; j < values_.size(); ++j) {
            if (values_[j] > values_[i] || (values_[j] == values_[i] && j < i)) ++rank;
        }
        return rank;
    }

    double sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

    friend bool operator==(const Pdv&, const Pdv&) = default;

private:
    void validate() const {
        if (values_.empty()) throw DimensionError("Pdv: empty vector");
        double total = 0.0;
        for (double v : values_) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("Pdv: entries must be finite and nonnegative");
            total += v;
        }
        if (std::abs(total - 1.0) > kSumTolerance)
            throw DomainError("Pdv: entries sum to " + std::to_string(total) + ", expected 1");
    }

    std::vector<double> values_;
};

}  // namespace avpr
