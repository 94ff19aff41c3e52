#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "avpr/eval.hpp"
#include "avpr/planner.hpp"
#include "avpr/proxy.hpp"
#include "avpr/rl.hpp"
#include "avpr/world.hpp"

namespace avpr {

/// Desk-scale world: 400 m route, 25 m places (|C| = 16), 30 % featureless.
inline WorldConfig desk_world_config() { return WorldConfig{}; }

/// Route geometry of the original experiments: 6.3 km route, 100 m places.
inline WorldConfig paper_world_config() {
    WorldConfig c;
    c.n_viewpoints = 6300;
    c.place_len_m = 100;
    return c;
}

inline DqnConfig desk_dqn_config() { return DqnConfig{}; }

inline DqnConfig paper_dqn_config() {
    DqnConfig c;
    c.episodes = 300000;
    return c;
}

/// Environment in the training domain for one planner variant.
inline EpisodeEnvironment training_environment(const TrajectoryWorld& w, PlannerKind kind,
                                               std::shared_ptr<const ActionClassifier> clf, std::size_t horizon = 3,
                                               MotionModel motion = {}, const std::string& domain_id = "train") {
    if (!needs_network(kind)) throw ConfigError("planner " + to_string(kind) + " is not trained");
    const Domain& d = w.domain(domain_id);
    PdvSource cue;
    if (needs_ilc(kind)) cue = classifier_ilc(w, d, std::move(clf));
    return EpisodeEnvironment(w, d, EnvConfig{horizon, motion, layout_for(kind), 0.0}, cue);
}

/// Budgets of the full train-then-evaluate benchmark.
struct BenchmarkConfig {
    std::uint64_t world_seed = 7;
    WorldConfig world = desk_world_config();
    std::size_t proxy_samples = 20000;
    ClassifierConfig classifier{};
    DqnConfig dqn = desk_dqn_config();
    ExperimentConfig experiment{};
};

/// Train-on-shift-0, test-on-shifted-domains benchmark on the desk world:
/// 5 planners x 5 shifted domains, 2,000 test episodes per cell.
inline BenchmarkConfig paper_shape_benchmark() {
    BenchmarkConfig c;
    c.experiment.episodes = 2000;
    return c;
}

struct BenchmarkRun {
    TrajectoryWorld world;
    ActionClassifier classifier;
    ClassifierReport classifier_report;
    std::map<PlannerKind, DqnResult> training;
    ResultTable table;
};

/// Generates the world, trains the action classifier and every DQN
/// planner on the training domain, then evaluates on the test domains.
inline BenchmarkRun run_benchmark(const BenchmarkConfig& cfg) {
    BenchmarkRun run;
    run.world = generate_world(cfg.world, cfg.world_seed);
    const Domain& train = run.world.domain("train");
    const ProxyDataset ds = build_proxy_dataset(run.world, train, cfg.proxy_samples, cfg.classifier.seed,
                                                LabelConfig{cfg.experiment.motion, false});
    std::tie(run.classifier, run.classifier_report) = train_action_classifier(ds, cfg.classifier);
    auto clf = std::make_shared<const ActionClassifier>(run.classifier);

    ExperimentArtifacts art;
    art.classifier = clf;
    for (PlannerKind k : cfg.experiment.planners) {
        if (!needs_network(k)) continue;
        auto env = training_environment(run.world, k, clf, cfg.experiment.horizon, cfg.experiment.motion);
        DqnResult r = train_dqn(env, cfg.dqn);
        art.networks.emplace(k, r.net);
        run.training.emplace(k, std::move(r));
    }
    run.table = run_experiment(run.world, art, cfg.experiment);
    return run;
}

}  // namespace avpr
