#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "avpr/bayes.hpp"
#include "avpr/error.hpp"
#include "avpr/features.hpp"
#include "avpr/log.hpp"
#include "avpr/pdv.hpp"
#include "avpr/proxy.hpp"
#include "avpr/random.hpp"
#include "avpr/rl.hpp"
#include "avpr/world.hpp"
#include "avpr/world_io.hpp"

namespace avpr {

enum class PlannerKind { single_view, random, olc_only, ilc_only, proposed };

inline const std::vector<std::string>& planner_names() {
    static const std::vector<std::string> names{"single_view", "random", "olc_only", "ilc_only", "proposed"};
    return names;
}

inline std::string to_string(PlannerKind k) { return planner_names()[static_cast<std::size_t>(k)]; }

inline PlannerKind planner_from_string(const std::string& s) {
    const auto& names = planner_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return static_cast<PlannerKind>(i);
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown planner '" + s + "' (valid: " + valid + ")");
}

/// Which cues the planner state is built from.
enum class StateLayout { olc, ilc, fused };

inline StateLayout layout_for(PlannerKind k) {
    switch (k) {
        case PlannerKind::ilc_only: return StateLayout::ilc;
        case PlannerKind::proposed: return StateLayout::fused;
        default: return StateLayout::olc;
    }
}

inline bool needs_ilc(PlannerKind k) { return k == PlannerKind::ilc_only || k == PlannerKind::proposed; }
inline bool needs_network(PlannerKind k) { return k != PlannerKind::single_view && k != PlannerKind::random; }

/// Produces a PDV for a viewpoint (place PDV for observations, action PDV
/// for the scene cue). May consume randomness from the episode stream.
using PdvSource = std::function<Pdv(std::size_t viewpoint, Rng& rng)>;

inline PdvSource simulated_observations(const TrajectoryWorld& w, Domain d) {
    return [&w, d](std::size_t v, Rng& rng) { return observe(w, v, d, rng); };
}

inline PdvSource classifier_ilc(const TrajectoryWorld& w, Domain d, std::shared_ptr<const ActionClassifier> clf) {
    if (!clf) throw ConfigError("classifier_ilc: no classifier");
    if (clf->input_dim() != w.descriptor_dim())
        throw DimensionError("classifier expects " + std::to_string(clf->input_dim()) +
                             "-dim descriptors, world produces " + std::to_string(w.descriptor_dim()));
    return [&w, d, clf](std::size_t v, Rng& rng) { return ilc(*clf, descriptor(w, v, d, rng)); };
}

/// Looks PDVs up in an ingested table for one domain.
inline PdvSource table_source(std::shared_ptr<const PdvTable> table, std::string domain) {
    return [table, domain](std::size_t v, Rng&) { return table->at(domain, v); };
}

struct EnvConfig {
    /// Actions per episode (T).
    std::size_t horizon = 3;
    MotionModel motion{};
    StateLayout layout = StateLayout::fused;
    double rrf_k = 0.0;
};

/// One sensing event of an episode.
struct StepTrace {
    std::size_t viewpoint = 0;
    std::size_t action_m = 0;  // 0 for the initial observation
    Pdv observation;           // classifier place PDV at the viewpoint
    Pdv place_pdv;             // filtered belief marginalized onto places (OLC)
    std::optional<Pdv> ilc;
    StateVector state;
    double reward = 0.0;
};

/// Active place recognition episode: Bayes filter over the route driven by
/// forward moves of 1..max_action_m meters, rewarded once at step T.
class EpisodeEnvironment {
public:
    EpisodeEnvironment(const TrajectoryWorld& world, Domain domain, EnvConfig cfg, PdvSource ilc_source = {},
                       PdvSource observation_source = {})
        : world_(&world), domain_(std::move(domain)), cfg_(cfg), ilc_(std::move(ilc_source)),
          obs_(observation_source ? std::move(observation_source) : simulated_observations(world, domain_)) {
        if (cfg_.layout != StateLayout::olc && !ilc_)
            throw ConfigError("environment: this state layout needs an ILC source");
        if (cfg_.horizon * world.max_action_m >= world.n_viewpoints)
            throw ConfigError("environment: route too short for " + std::to_string(cfg_.horizon) + " maximal actions");
    }

    const TrajectoryWorld& world() const noexcept { return *world_; }
    const Domain& domain() const noexcept { return domain_; }
    const EnvConfig& config() const noexcept { return cfg_; }
    std::size_t action_count() const { return world_->max_action_m; }
    std::size_t state_dim() const {
        switch (cfg_.layout) {
            case StateLayout::olc: return world_->place_count();
            case StateLayout::ilc: return world_->max_action_m;
            case StateLayout::fused: return world_->max_action_m + world_->place_count();
        }
        return 0;
    }
    /// Largest start whose worst-case trajectory stays on the route.
    std::size_t max_start() const { return world_->n_viewpoints - 1 - cfg_.horizon * world_->max_action_m; }

    /// Starts an episode at a uniformly sampled viewpoint. Starts that the
    /// longest action sequence would carry off the route are redrawn.
    StateVector reset(std::uint64_t seed) {
        rng_ = Rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, world_->n_viewpoints - 1);
        std::size_t v = pick(rng_);
        rejected_ = 0;
        while (v > max_start()) {
            ++rejected_;
            log::debug("start " + std::to_string(v) + " rejected; resampling");
            v = pick(rng_);
        }
        return begin(v);
    }

    /// Starts an episode at an explicit viewpoint.
    StateVector reset_at(std::uint64_t seed, std::size_t start) {
        if (start >= world_->n_viewpoints) throw IndexError("reset: start viewpoint out of range");
        rng_ = Rng(seed);
        rejected_ = 0;
        return begin(start);
    }

    StepResult step(std::size_t action_index) {
        if (!started_) throw StateError("step before reset");
        if (terminal()) throw StateError("step after terminal");
        if (action_index >= action_count()) throw IndexError("action index out of range");
        const std::size_t meters = action_index + 1;
        viewpoint_ = std::min(world_->n_viewpoints - 1, viewpoint_ + meters);
        belief_ = motion_update(belief_, static_cast<long>(meters), cfg_.motion);
        sense(meters);
        ++step_;
        double reward = 0.0;
        if (terminal()) reward = place_pdv_.argmax() == world_->place_of(viewpoint_) ? 1.0 : -1.0;
        trace_.back().reward = reward;
        return {trace_.back().state, reward, terminal()};
    }

    bool terminal() const noexcept { return step_ >= cfg_.horizon; }
    std::size_t step_index() const noexcept { return step_; }
    std::size_t viewpoint() const noexcept { return viewpoint_; }
    std::size_t start() const noexcept { return start_; }
    std::size_t rejected_starts() const noexcept { return rejected_; }
    const Pdv& belief() const noexcept { return belief_; }
    const Pdv& place_pdv() const noexcept { return place_pdv_; }
    const std::vector<StepTrace>& trace() const noexcept { return trace_; }
    std::size_t true_place() const { return world_->place_of(viewpoint_); }
    std::size_t true_rank() const { return place_pdv_.rank_of(true_place()); }
    double final_reciprocal_rank() const { return 1.0 / static_cast<double>(true_rank()); }

private:
    StateVector begin(std::size_t v) {
        started_ = true;
        start_ = viewpoint_ = v;
        step_ = 0;
        trace_.clear();
        belief_ = Pdv::uniform(world_->n_viewpoints);
        sense(0);
        return trace_.back().state;
    }

    void sense(std::size_t meters) {
        Pdv obs = obs_(viewpoint_, rng_);
        try {
            belief_ = perception_update(belief_, place_to_viewpoint_weights(obs, *world_));
        } catch (const DegenerateBeliefError&) {
            log::warn("degenerate posterior at viewpoint " + std::to_string(viewpoint_) + "; belief reset to uniform");
            belief_ = Pdv::uniform(world_->n_viewpoints);
        }
        place_pdv_ = viewpoint_to_place(belief_, *world_);
        std::optional<Pdv> cue;
        if (ilc_) cue = ilc_(viewpoint_, rng_);
        StateVector state;
        switch (cfg_.layout) {
            case StateLayout::olc: state = rrf(place_pdv_, cfg_.rrf_k); break;
            case StateLayout::ilc: state = rrf(*cue, cfg_.rrf_k); break;
            case StateLayout::fused:
                state = fuse(*cue, place_pdv_, world_->max_action_m, world_->place_count(), cfg_.rrf_k);
                break;
        }
        trace_.push_back({viewpoint_, meters, std::move(obs), place_pdv_, std::move(cue), std::move(state), 0.0});
    }

    const TrajectoryWorld* world_;
    Domain domain_;
    EnvConfig cfg_;
    PdvSource ilc_;
    PdvSource obs_;
    Rng rng_{0};
    bool started_ = false;
    std::size_t start_ = 0, viewpoint_ = 0, step_ = 0, rejected_ = 0;
    Pdv belief_;
    Pdv place_pdv_;
    std::vector<StepTrace> trace_;
};

/// Action selection policy of one of the compared methods.
class Planner {
public:
    static Planner single_view() { return Planner(PlannerKind::single_view, std::nullopt); }
    static Planner random() { return Planner(PlannerKind::random, std::nullopt); }
    static Planner dqn(PlannerKind kind, QNetwork net) {
        if (!needs_network(kind)) throw ConfigError("planner " + to_string(kind) + " takes no network");
        return Planner(kind, std::move(net));
    }

    PlannerKind kind() const noexcept { return kind_; }
    StateLayout layout() const { return layout_for(kind_); }
    const std::optional<QNetwork>& network() const noexcept { return net_; }

    /// Next action index, or nothing for the single-view method.
    std::optional<std::size_t> next_action(const StateVector& state, std::size_t action_count, Rng& rng) const {
        switch (kind_) {
            case PlannerKind::single_view: return std::nullopt;
            case PlannerKind::random: {
                std::uniform_int_distribution<std::size_t> pick(0, action_count - 1);
                return pick(rng);
            }
            default: return greedy_action(*net_, state);
        }
    }

private:
    Planner(PlannerKind kind, std::optional<QNetwork> net) : kind_(kind), net_(std::move(net)) {}

    PlannerKind kind_;
    std::optional<QNetwork> net_;
};

struct EpisodeResult {
    std::size_t start = 0;
    std::vector<std::size_t> actions_m;
    Pdv final_place_pdv;
    std::size_t true_place = 0;
    std::size_t rank = 1;
    std::size_t final_viewpoint = 0;
    std::vector<StepTrace> steps;

    double reciprocal_rank() const { return 1.0 / static_cast<double>(rank); }
};

/// Runs reset plus T planned steps (none for the single-view method).
inline EpisodeResult run_episode(EpisodeEnvironment& env, const Planner& planner, std::uint64_t seed,
                                 std::optional<std::size_t> start = std::nullopt) {
    if (needs_network(planner.kind())) {
        if (planner.layout() != env.config().layout) throw ConfigError("planner and environment state layouts differ");
        if (planner.network()->input_dim() != env.state_dim())
            throw DimensionError("planner network expects " + std::to_string(planner.network()->input_dim()) +
                                 "-dim states, environment produces " + std::to_string(env.state_dim()));
    }
    Rng planner_rng = make_rng(seed, {salt::planner});
    StateVector s = start ? env.reset_at(seed, *start) : env.reset(seed);
    EpisodeResult r;
    r.start = env.start();
    while (!env.terminal()) {
        const auto a = planner.next_action(s, env.action_count(), planner_rng);
        if (!a) break;
        r.actions_m.push_back(*a + 1);
        s = env.step(*a).state;
    }
    r.final_place_pdv = env.place_pdv();
    r.true_place = env.true_place();
    r.rank = env.true_rank();
    r.final_viewpoint = env.viewpoint();
    r.steps = env.trace();
    return r;
}

inline nlohmann::json episode_to_json(const EpisodeResult& r, const nlohmann::json& meta = {}) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : r.steps) {
        nlohmann::json j{{"viewpoint", s.viewpoint},
                         {"action_m", s.action_m},
                         {"observation", s.observation.vector()},
                         {"place_pdv", s.place_pdv.vector()},
                         {"state", s.state.vector()},
                         {"reward", s.reward}};
        if (s.ilc) j["ilc"] = s.ilc->vector();
        steps.push_back(std::move(j));
    }
    nlohmann::json j = meta.is_object() ? meta : nlohmann::json::object();
    j["start"] = r.start;
    j["actions_m"] = r.actions_m;
    j["true_place"] = r.true_place;
    j["rank"] = r.rank;
    j["final_viewpoint"] = r.final_viewpoint;
    j["final_place_pdv"] = r.final_place_pdv.vector();
    j["steps"] = std::move(steps);
    return j;
}

}  // namespace avpr
