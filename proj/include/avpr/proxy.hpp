#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "avpr/bayes.hpp"
#include "avpr/error.hpp"
#include "avpr/io.hpp"
#include "avpr/log.hpp"
#include "avpr/mlp.hpp"
#include "avpr/pdv.hpp"
#include "avpr/random.hpp"
#include "avpr/world.hpp"

namespace avpr {

/// How single-step episodes are simulated when labeling proxy records.
struct LabelConfig {
    MotionModel motion{};
    /// Draw one noisy observation per step instead of the expected PDV.
    bool sample_observations = false;
};

namespace detail {

inline Pdv bayes_observe(const Pdv& belief, const Pdv& place_pdv, const TrajectoryWorld& w) {
    try {
        return perception_update(belief, place_to_viewpoint_weights(place_pdv, w));
    } catch (const DegenerateBeliefError&) {
        log::warn("degenerate posterior; belief reset to uniform");
        return Pdv::uniform(w.n_viewpoints);
    }
}

}  // namespace detail

/// Reciprocal rank of the true place after the single-step episode
/// (observe at v, move `action_m`, observe at v + action_m).
inline double single_step_score(const TrajectoryWorld& w, std::size_t v, std::size_t action_m, const Domain& d,
                                const LabelConfig& cfg, Rng* rng = nullptr) {
    const std::size_t dest = v + action_m;
    if (dest >= w.n_viewpoints) throw IndexError("single_step_score: action leaves the route");
    auto obs = [&](std::size_t at) {
        return cfg.sample_observations && rng ? observe(w, at, d, *rng) : expected_observation(w, at, d);
    };
    Pdv belief = detail::bayes_observe(Pdv::uniform(w.n_viewpoints), obs(v), w);
    belief = motion_update(belief, static_cast<long>(action_m), cfg.motion);
    belief = detail::bayes_observe(belief, obs(dest), w);
    const Pdv place = viewpoint_to_place(belief, w);
    return 1.0 / static_cast<double>(place.rank_of(w.place_of(dest)));
}

/// Index (0-based; meters = index + 1) of the action with the highest
/// single-step score. Ties go to the shortest action. Empty when the
/// longest action would leave the route.
inline std::optional<std::size_t> best_action_label(const TrajectoryWorld& w, std::size_t v, const Domain& d,
                                                    const LabelConfig& cfg = {}, Rng* rng = nullptr) {
    if (v >= w.n_viewpoints) throw IndexError("best_action_label: viewpoint out of range");
    if (v + w.max_action_m >= w.n_viewpoints) return std::nullopt;
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t a = 0; a < w.max_action_m; ++a) {
        const double s = single_step_score(w, v, a + 1, d, cfg, rng);
        if (s > best_score) {
            best_score = s;
            best = a;
        }
    }
    return best;
}

struct ProxyRecord {
    std::vector<double> descriptor;
    std::size_t best_action = 0;
    std::size_t viewpoint = 0;
    std::string domain;

    friend bool operator==(const ProxyRecord&, const ProxyRecord&) = default;
};

struct ProxyDataset {
    std::vector<ProxyRecord> records;
    std::size_t action_count = 0;
    std::size_t descriptor_dim = 0;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }
    friend bool operator==(const ProxyDataset&, const ProxyDataset&) = default;
};

/// Samples start viewpoints uniformly (redrawing those within one maximal
/// action of the route end) and labels each with best_action_label.
inline ProxyDataset build_proxy_dataset(const TrajectoryWorld& w, const Domain& d, std::size_t n_samples,
                                        std::uint64_t seed, const LabelConfig& cfg = {}) {
    if (w.n_viewpoints <= w.max_action_m) throw ConfigError("route too short for the action set");
    ProxyDataset ds;
    ds.action_count = w.max_action_m;
    ds.descriptor_dim = w.descriptor_dim();
    std::map<std::size_t, std::size_t> label_cache;
    const std::size_t last_start = w.n_viewpoints - 1 - w.max_action_m;
    for (std::size_t i = 0; i < n_samples; ++i) {
        Rng rng = make_rng(seed, {salt::dataset, i});
        std::uniform_int_distribution<std::size_t> pick(0, w.n_viewpoints - 1);
        std::size_t v = pick(rng);
        while (v > last_start) v = pick(rng);
        std::size_t label;
        if (cfg.sample_observations) {
            label = *best_action_label(w, v, d, cfg, &rng);
        } else {
            auto it = label_cache.find(v);
            if (it == label_cache.end()) it = label_cache.emplace(v, *best_action_label(w, v, d, cfg)).first;
            label = it->second;
        }
        ds.records.push_back({descriptor(w, v, d, rng), label, v, d.id});
    }
    return ds;
}

inline std::string proxy_dataset_to_csv(const ProxyDataset& ds) {
    std::string out = "viewpoint,domain,label";
    for (std::size_t k = 0; k < ds.descriptor_dim; ++k) out += ",d_" + std::to_string(k);
    out += '\n';
    for (const auto& r : ds.records) {
        out += std::to_string(r.viewpoint) + ',' + r.domain + ',' + std::to_string(r.best_action);
        for (double x : r.descriptor) out += ',' + io::format_double(x);
        out += '\n';
    }
    return out;
}

inline ProxyDataset proxy_dataset_from_csv(const std::string& text, std::size_t action_count) {
    const auto csv = io::parse_csv(text);
    ProxyDataset ds;
    ds.action_count = action_count;
    std::vector<std::size_t> cols;
    for (std::size_t k = 0; csv.has_column("d_" + std::to_string(k)); ++k) cols.push_back(csv.column("d_" + std::to_string(k)));
    ds.descriptor_dim = cols.size();
    const std::size_t vc = csv.column("viewpoint"), dc = csv.column("domain"), lc = csv.column("label");
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        ProxyRecord rec;
        rec.viewpoint = static_cast<std::size_t>(io::parse_int(row[vc], csv.lines[r], "viewpoint"));
        rec.domain = row[dc];
        const long long label = io::parse_int(row[lc], csv.lines[r], "label");
        if (label < 0 || static_cast<std::size_t>(label) >= action_count)
            throw ValidationError("csv line " + std::to_string(csv.lines[r]) + ": label outside the action set");
        rec.best_action = static_cast<std::size_t>(label);
        for (std::size_t k = 0; k < cols.size(); ++k)
            rec.descriptor.push_back(io::parse_double(row[cols[k]], csv.lines[r], "d_" + std::to_string(k)));
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

/// Descriptor -> action classifier (dimension reduction of the scene cue).
struct ActionClassifier {
    Mlp net;
    double temperature = 1.0;

    std::size_t input_dim() const { return net.input_dim(); }
    std::size_t action_count() const { return net.output_dim(); }

    nlohmann::json to_json() const {
        auto j = net.to_json();
        j["kind"] = "action_classifier";
        j["temperature"] = temperature;
        return j;
    }
    static ActionClassifier from_json(const nlohmann::json& j) {
        ActionClassifier c{Mlp::from_json(j), j.value("temperature", 1.0)};
        if (!(c.temperature > 0.0)) throw ParseError("classifier: temperature must be positive");
        return c;
    }
};

inline Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double m = logits.col(c).maxCoeff();
        p.col(c) = (logits.col(c).array() - m).exp().matrix();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

/// Action PDV for one descriptor: softmax(logits / temperature).
inline Pdv ilc(const ActionClassifier& clf, std::span<const double> desc) {
    if (desc.size() != clf.input_dim())
        throw DimensionError("ilc: descriptor has " + std::to_string(desc.size()) + " entries, classifier expects " +
                             std::to_string(clf.input_dim()));
    Eigen::Map<const Eigen::VectorXd> x(desc.data(), static_cast<Eigen::Index>(desc.size()));
    const Eigen::MatrixXd p = softmax_columns(clf.net.forward(Eigen::MatrixXd(x)) / clf.temperature);
    return Pdv::normalized(std::vector<double>(p.data(), p.data() + p.size()));
}

/// Mean cross-entropy of the classifier on a batch (columns of `x`) and its
/// parameter gradient.
inline std::pair<double, MlpGradients> classifier_loss_and_gradient(const ActionClassifier& clf,
                                                                    const Eigen::MatrixXd& x,
                                                                    std::span<const std::size_t> labels) {
    Mlp::Cache cache;
    const Eigen::MatrixXd logits = clf.net.forward(x, &cache);
    const Eigen::MatrixXd p = softmax_columns(logits / clf.temperature);
    const double inv_b = 1.0 / static_cast<double>(x.cols());
    double loss = 0.0;
    Eigen::MatrixXd grad = p;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(c)]);
        loss -= std::log(std::max(p(y, c), 1e-300));
        grad(y, c) -= 1.0;
    }
    grad *= inv_b / clf.temperature;
    return {loss * inv_b, clf.net.backward(cache, grad)};
}

struct ClassifierConfig {
    std::size_t hidden = 64;
    Activation activation = Activation::softplus;
    std::size_t epochs = 40;
    std::size_t batch_size = 64;
    double lr = 3e-3;
    double holdout_fraction = 0.2;
    double target_accuracy = 0.0;
    double temperature = 1.0;
    std::uint64_t seed = 1;
};

struct ClassifierReport {
    double train_accuracy = 0.0;
    double holdout_accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t holdout_size = 0;
    bool met_target = false;
    bool degenerate = false;
    std::vector<double> epoch_loss;
};

inline double classifier_accuracy(const ActionClassifier& clf, const ProxyDataset& ds,
                                  std::span<const std::size_t> idx) {
    if (idx.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i : idx) hits += ilc(clf, ds.records[i].descriptor).argmax() == ds.records[i].best_action;
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

/// Mini-batch Adam on mean cross-entropy with a seeded held-out split.
inline std::pair<ActionClassifier, ClassifierReport> train_action_classifier(const ProxyDataset& ds,
                                                                             const ClassifierConfig& cfg) {
    if (ds.empty()) throw ConfigError("train_action_classifier: empty dataset");
    if (cfg.batch_size == 0 || !(cfg.lr > 0.0)) throw ConfigError("train_action_classifier: invalid config");
    const std::size_t dim = ds.descriptor_dim;
    const std::size_t actions = ds.action_count;
    ClassifierReport report;

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng = make_rng(cfg.seed, {salt::split});
    std::shuffle(order.begin(), order.end(), split_rng);
    auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(ds.size())));
    if (n_hold >= ds.size()) n_hold = 0;
    std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
    report.train_size = train.size();
    report.holdout_size = hold.size();

    bool single_class = true;
    for (const auto& r : ds.records) single_class = single_class && r.best_action == ds.records.front().best_action;
    if (single_class) {
        log::warn("proxy dataset has a single class; returning a constant classifier");
        ActionClassifier clf{Mlp({dim, cfg.hidden, actions}, cfg.activation), cfg.temperature};
        clf.net.bias(1)(static_cast<Eigen::Index>(ds.records.front().best_action)) = 10.0;
        report.degenerate = true;
        report.train_accuracy = classifier_accuracy(clf, ds, train);
        report.holdout_accuracy = classifier_accuracy(clf, ds, hold);
        report.met_target = report.holdout_accuracy >= cfg.target_accuracy;
        return {clf, report};
    }

    ActionClassifier clf{Mlp::random({dim, cfg.hidden, actions}, cfg.activation, cfg.seed), cfg.temperature};
    Adam adam(clf.net);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = make_rng(cfg.seed, {salt::batch, epoch});
        std::shuffle(train.begin(), train.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(train.size(), start + cfg.batch_size);
            Eigen::MatrixXd x(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(end - start));
            std::vector<std::size_t> y;
            for (std::size_t k = start; k < end; ++k) {
                const auto& rec = ds.records[train[k]];
                if (rec.descriptor.size() != dim) throw DimensionError("proxy record has wrong descriptor size");
                for (std::size_t r = 0; r < dim; ++r)
                    x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k - start)) = rec.descriptor[r];
                y.push_back(rec.best_action);
            }
            auto [loss, grad] = classifier_loss_and_gradient(clf, x, y);
            if (!std::isfinite(loss)) throw DivergenceError("classifier training produced a non-finite loss");
            adam.step(clf.net, grad, cfg.lr);
            epoch_loss += loss * static_cast<double>(end - start);
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, train.size())));
    }
    report.train_accuracy = classifier_accuracy(clf, ds, train);
    report.holdout_accuracy = classifier_accuracy(clf, ds, hold);
    report.met_target = report.holdout_accuracy >= cfg.target_accuracy;
    if (!report.met_target)
        log::warn("classifier held-out accuracy " + std::to_string(report.holdout_accuracy) + " below target " +
                  std::to_string(cfg.target_accuracy));
    return {clf, report};
}

}  // namespace avpr
