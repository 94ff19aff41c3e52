#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avpr/error.hpp"
#include "avpr/mlp.hpp"
#include "avpr/proxy.hpp"
#include "avpr/rl.hpp"
#include "avpr/world.hpp"

// JSON views of the training and generation configs. Every merge_* function
// overwrites only the keys present in `j` and rejects unknown keys, so a
// config file can be layered over the defaults and flags over the file.

namespace avpr {

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& out, const std::string& ctx) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(ctx + ": key '" + key + "' has the wrong type");
    }
}

}  // namespace detail

inline nlohmann::json to_json(const WorldConfig& c) {
    return {{"viewpoints", c.n_viewpoints},
            {"place_len_m", c.place_len_m},
            {"max_action_m", c.max_action_m},
            {"featureless_fraction", c.featureless_fraction},
            {"featureless_run_min_m", c.featureless_run_min_m},
            {"featureless_run_max_m", c.featureless_run_max_m},
            {"confusion_diag", c.confusion_diag},
            {"lookalikes", c.lookalikes},
            {"lookalike_mass", c.lookalike_mass},
            {"noise_dims", c.descriptor.noise_dims},
            {"base_noise", c.descriptor.base_noise},
            {"shift_noise_gain", c.descriptor.shift_noise_gain}};
}

inline void merge_json(WorldConfig& c, const nlohmann::json& j) {
    const std::string ctx = "world config";
    detail::check_keys(j,
                       {"viewpoints", "place_len_m", "max_action_m", "featureless_fraction", "featureless_run_min_m",
                        "featureless_run_max_m", "confusion_diag", "lookalikes", "lookalike_mass", "noise_dims",
                        "base_noise", "shift_noise_gain"},
                       ctx);
    detail::take(j, "viewpoints", c.n_viewpoints, ctx);
    detail::take(j, "place_len_m", c.place_len_m, ctx);
    detail::take(j, "max_action_m", c.max_action_m, ctx);
    detail::take(j, "featureless_fraction", c.featureless_fraction, ctx);
    detail::take(j, "featureless_run_min_m", c.featureless_run_min_m, ctx);
    detail::take(j, "featureless_run_max_m", c.featureless_run_max_m, ctx);
    detail::take(j, "confusion_diag", c.confusion_diag, ctx);
    detail::take(j, "lookalikes", c.lookalikes, ctx);
    detail::take(j, "lookalike_mass", c.lookalike_mass, ctx);
    detail::take(j, "noise_dims", c.descriptor.noise_dims, ctx);
    detail::take(j, "base_noise", c.descriptor.base_noise, ctx);
    detail::take(j, "shift_noise_gain", c.descriptor.shift_noise_gain, ctx);
}

inline nlohmann::json to_json(const ClassifierConfig& c) {
    return {{"hidden", c.hidden},
            {"activation", to_string(c.activation)},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"holdout_fraction", c.holdout_fraction},
            {"target_accuracy", c.target_accuracy},
            {"temperature", c.temperature},
            {"seed", c.seed}};
}

inline void merge_json(ClassifierConfig& c, const nlohmann::json& j) {
    const std::string ctx = "classifier config";
    detail::check_keys(j,
                       {"hidden", "activation", "epochs", "batch_size", "lr", "holdout_fraction", "target_accuracy",
                        "temperature", "seed"},
                       ctx);
    detail::take(j, "hidden", c.hidden, ctx);
    if (j.contains("activation")) {
        std::string a;
        detail::take(j, "activation", a, ctx);
        c.activation = activation_from_string(a);
    }
    detail::take(j, "epochs", c.epochs, ctx);
    detail::take(j, "batch_size", c.batch_size, ctx);
    detail::take(j, "lr", c.lr, ctx);
    detail::take(j, "holdout_fraction", c.holdout_fraction, ctx);
    detail::take(j, "target_accuracy", c.target_accuracy, ctx);
    detail::take(j, "temperature", c.temperature, ctx);
    detail::take(j, "seed", c.seed, ctx);
}

inline void merge_json(DqnConfig& c, const nlohmann::json& j) {
    const std::string ctx = "dqn config";
    detail::check_keys(j,
                       {"gamma", "lr", "eps_start", "eps_end", "eps_decay_fraction", "batch_size", "target_sync_steps",
                        "replay_capacity", "episodes", "seed", "hidden", "activation", "optimizer", "mrr_window"},
                       ctx);
    detail::take(j, "gamma", c.gamma, ctx);
    detail::take(j, "lr", c.lr, ctx);
    detail::take(j, "eps_start", c.eps_start, ctx);
    detail::take(j, "eps_end", c.eps_end, ctx);
    detail::take(j, "eps_decay_fraction", c.eps_decay_fraction, ctx);
    detail::take(j, "batch_size", c.batch_size, ctx);
    detail::take(j, "target_sync_steps", c.target_sync_steps, ctx);
    detail::take(j, "replay_capacity", c.replay_capacity, ctx);
    detail::take(j, "episodes", c.episodes, ctx);
    detail::take(j, "seed", c.seed, ctx);
    detail::take(j, "hidden", c.hidden, ctx);
    if (j.contains("activation")) {
        std::string a;
        detail::take(j, "activation", a, ctx);
        c.activation = activation_from_string(a);
    }
    if (j.contains("optimizer")) {
        std::string o;
        detail::take(j, "optimizer", o, ctx);
        if (o == "adam")
            c.optimizer = OptimizerKind::adam;
        else if (o == "sgd")
            c.optimizer = OptimizerKind::sgd;
        else
            throw ConfigError(ctx + ": unknown optimizer '" + o + "' (expected adam or sgd)");
    }
    detail::take(j, "mrr_window", c.mrr_window, ctx);
}

}  // namespace avpr
