#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "avpr/bayes.hpp"
#include "avpr/error.hpp"
#include "avpr/io.hpp"
#include "avpr/planner.hpp"
#include "avpr/proxy.hpp"
#include "avpr/random.hpp"
#include "avpr/rl.hpp"
#include "avpr/world.hpp"
#include "avpr/world_io.hpp"

namespace avpr {

/// Reciprocal rank with an optional shortlist: ranks beyond `shortlist_k`
/// (when nonzero) score 0.
inline double reciprocal_rank(std::size_t rank, std::size_t shortlist_k = 0) {
    if (rank == 0) throw DomainError("rank must be at least 1");
    if (shortlist_k > 0 && rank > shortlist_k) return 0.0;
    return 1.0 / static_cast<double>(rank);
}

inline double mrr(std::span<const std::size_t> ranks, std::size_t shortlist_k = 0) {
    if (ranks.empty()) throw DomainError("mrr: no results");
    double s = 0.0;
    for (std::size_t r : ranks) s += reciprocal_rank(r, shortlist_k);
    return s / static_cast<double>(ranks.size());
}

inline double mrr(std::span<const EpisodeResult> results, std::size_t shortlist_k = 0) {
    std::vector<std::size_t> ranks;
    ranks.reserve(results.size());
    for (const auto& r : results) ranks.push_back(r.rank);
    return mrr(ranks, shortlist_k);
}

/// Percentile bootstrap 95% interval of the mean.
inline std::pair<double, double> bootstrap_ci(std::span<const double> values, std::size_t n_resamples,
                                              std::uint64_t seed) {
    if (values.empty()) throw DomainError("bootstrap_ci: no values");
    if (n_resamples < 100) throw DomainError("bootstrap_ci: need at least 100 resamples");
    if (std::all_of(values.begin(), values.end(), [&](double x) { return x == values.front(); }))
        return {values.front(), values.front()};
    Rng rng = make_rng(seed, {salt::bootstrap});
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> means(n_resamples);
    for (double& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
        m = s / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(n_resamples - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(n_resamples - 1, lo + 1);
        const double frac = pos - static_cast<double>(lo);
        return means[lo] * (1.0 - frac) + means[hi] * frac;
    };
    return {quantile(0.025), quantile(0.975)};
}

struct ExperimentConfig {
    std::string world_path;
    /// Test domain ids; empty selects every domain with positive shift.
    std::vector<std::string> domains;
    std::vector<PlannerKind> planners{PlannerKind::single_view, PlannerKind::random, PlannerKind::olc_only,
                                      PlannerKind::ilc_only, PlannerKind::proposed};
    std::size_t episodes = 5000;
    std::uint64_t seed = 1;
    std::size_t horizon = 3;
    MotionModel motion{};
    /// Planner name -> Q-network weights file.
    std::map<std::string, std::string> weights;
    std::string classifier_path;
    /// Optional ingested PDVs replacing the simulated observations / cues.
    std::string observations_csv;
    std::string ilc_csv;
    std::string output_dir = "avpr-out";
    std::size_t shortlist_k = 0;
    std::size_t bootstrap_resamples = 1000;
    std::size_t threads = 0;
    bool full_traces = false;

    void validate() const {
        if (episodes == 0) throw ConfigError("experiment: episodes must be at least 1");
        if (planners.empty()) throw ConfigError("experiment: no planners");
        if (bootstrap_resamples < 100) throw ConfigError("experiment: bootstrap_resamples must be at least 100");
    }

    nlohmann::json to_json() const {
        std::vector<std::string> names;
        for (auto p : planners) names.push_back(to_string(p));
        return {{"world", world_path},
                {"domains", domains},
                {"planners", names},
                {"episodes", episodes},
                {"seed", seed},
                {"horizon", horizon},
                {"motion_sigma", motion.kind == MotionModel::Kind::gaussian ? motion.sigma_m : 0.0},
                {"weights", weights},
                {"classifier", classifier_path},
                {"observations_csv", observations_csv},
                {"ilc_csv", ilc_csv},
                {"output_dir", output_dir},
                {"shortlist_k", shortlist_k},
                {"bootstrap_resamples", bootstrap_resamples},
                {"full_traces", full_traces}};
    }

    /// Fields absent from `j` keep their current values.
    void merge_json(const nlohmann::json& j) {
        try {
            if (j.contains("world")) world_path = j["world"].get<std::string>();
            if (j.contains("domains")) domains = j["domains"].get<std::vector<std::string>>();
            if (j.contains("planners")) {
                planners.clear();
                for (const auto& p : j["planners"]) planners.push_back(planner_from_string(p.get<std::string>()));
            }
            if (j.contains("episodes")) episodes = j["episodes"].get<std::size_t>();
            if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
            if (j.contains("horizon")) horizon = j["horizon"].get<std::size_t>();
            if (j.contains("motion_sigma")) {
                const double s = j["motion_sigma"].get<double>();
                motion = s > 0.0 ? MotionModel::gaussian(s) : MotionModel::deterministic();
            }
            if (j.contains("weights")) weights = j["weights"].get<std::map<std::string, std::string>>();
            if (j.contains("classifier")) classifier_path = j["classifier"].get<std::string>();
            if (j.contains("observations_csv")) observations_csv = j["observations_csv"].get<std::string>();
            if (j.contains("ilc_csv")) ilc_csv = j["ilc_csv"].get<std::string>();
            if (j.contains("output_dir")) output_dir = j["output_dir"].get<std::string>();
            if (j.contains("shortlist_k")) shortlist_k = j["shortlist_k"].get<std::size_t>();
            if (j.contains("bootstrap_resamples")) bootstrap_resamples = j["bootstrap_resamples"].get<std::size_t>();
            if (j.contains("threads")) threads = j["threads"].get<std::size_t>();
            if (j.contains("full_traces")) full_traces = j["full_traces"].get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("experiment config: ") + e.what());
        }
    }
};

/// Trained models an experiment evaluates.
struct ExperimentArtifacts {
    std::map<PlannerKind, QNetwork> networks;
    std::shared_ptr<const ActionClassifier> classifier;
    std::shared_ptr<const PdvTable> observations;
    std::shared_ptr<const PdvTable> ilc_table;
};

struct ResultCell {
    double mrr = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t episodes = 0;
};

struct RawRecord {
    PlannerKind planner{};
    std::string domain;
    std::size_t episode = 0;
    std::uint64_t seed = 0;
    EpisodeResult result;
};

/// Planner x domain MRR table.
struct ResultTable {
    std::vector<PlannerKind> planners;
    std::vector<std::string> domains;
    std::vector<std::vector<ResultCell>> cells;  // [planner][domain]
    std::vector<RawRecord> raw;

    const ResultCell& at(PlannerKind p, const std::string& d) const {
        for (std::size_t i = 0; i < planners.size(); ++i)
            if (planners[i] == p)
                for (std::size_t k = 0; k < domains.size(); ++k)
                    if (domains[k] == d) return cells[i][k];
        throw IndexError("result table has no cell (" + to_string(p) + ", " + d + ")");
    }

    std::string to_csv() const {
        std::string out = "planner";
        for (const auto& d : domains) out += ',' + d;
        out += '\n';
        char buf[32];
        for (std::size_t i = 0; i < planners.size(); ++i) {
            out += to_string(planners[i]);
            for (const auto& c : cells[i]) {
                std::snprintf(buf, sizeof buf, ",%.6f", c.mrr);
                out += buf;
            }
            out += '\n';
        }
        return out;
    }

    std::string to_long_csv() const {
        std::string out = "planner,domain,mrr,ci_lo,ci_hi,episodes\n";
        char buf[128];
        for (std::size_t i = 0; i < planners.size(); ++i)
            for (std::size_t k = 0; k < domains.size(); ++k) {
                const auto& c = cells[i][k];
                std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%zu", c.mrr, c.ci_lo, c.ci_hi, c.episodes);
                out += to_string(planners[i]) + ',' + domains[k] + ',' + buf + '\n';
            }
        return out;
    }

    std::string raw_jsonl(bool full_traces) const {
        std::string out;
        for (const auto& r : raw) {
            nlohmann::json meta{{"planner", to_string(r.planner)},
                                {"domain", r.domain},
                                {"episode", r.episode},
                                {"seed", r.seed},
                                {"rr", r.result.reciprocal_rank()}};
            auto j = episode_to_json(r.result, meta);
            if (!full_traces) j.erase("steps");
            out += j.dump() + '\n';
        }
        return out;
    }
};

/// Seed of test episode `i` in domain `domain_id`; shared by all planners so
/// that they face the same starts.
inline std::uint64_t episode_seed(std::uint64_t seed, const std::string& domain_id, std::size_t i) {
    return derive_seed(seed, {salt::episode, io::fnv1a(domain_id), i});
}

inline std::vector<std::string> test_domains(const TrajectoryWorld& w, const ExperimentConfig& cfg) {
    if (!cfg.domains.empty()) {
        for (const auto& d : cfg.domains) (void)w.domain(d);
        return cfg.domains;
    }
    std::vector<std::string> out;
    for (const auto& d : w.domains)
        if (d.shift_strength > 0.0) out.push_back(d.id);
    if (out.empty()) throw ConfigError("world defines no shifted test domains");
    return out;
}

/// Evaluates every (planner, domain) cell. Episodes run on `cfg.threads`
/// workers; results do not depend on the worker count.
inline ResultTable run_experiment(const TrajectoryWorld& w, const ExperimentArtifacts& art,
                                  const ExperimentConfig& cfg) {
    cfg.validate();
    ResultTable table;
    table.planners = cfg.planners;
    table.domains = test_domains(w, cfg);
    for (auto p : cfg.planners) {
        if (needs_network(p) && !art.networks.count(p)) throw MissingArtifactError("weights for planner " + to_string(p));
        if (needs_ilc(p) && !art.classifier && !art.ilc_table)
            throw MissingArtifactError("action classifier (needed by " + to_string(p) + ")");
    }
    const std::size_t workers =
        std::max<std::size_t>(1, cfg.threads > 0 ? cfg.threads : std::thread::hardware_concurrency());

    for (std::size_t pi = 0; pi < cfg.planners.size(); ++pi) {
        const PlannerKind kind = cfg.planners[pi];
        const Planner planner = needs_network(kind) ? Planner::dqn(kind, art.networks.at(kind))
                                : kind == PlannerKind::random ? Planner::random()
                                                              : Planner::single_view();
        table.cells.emplace_back();
        for (const auto& domain_id : table.domains) {
            const Domain& domain = w.domain(domain_id);
            PdvSource ilc_src;
            if (needs_ilc(kind))
                ilc_src = art.ilc_table ? table_source(art.ilc_table, domain_id) : classifier_ilc(w, domain, art.classifier);
            PdvSource obs_src = art.observations ? table_source(art.observations, domain_id) : PdvSource{};
            EnvConfig env_cfg{cfg.horizon, cfg.motion, planner.layout(), 0.0};

            std::vector<EpisodeResult> results(cfg.episodes);
            auto work = [&](std::size_t worker) {
                EpisodeEnvironment env(w, domain, env_cfg, ilc_src, obs_src);
                for (std::size_t i = worker; i < cfg.episodes; i += workers) {
                    results[i] = run_episode(env, planner, episode_seed(cfg.seed, domain_id, i));
                    if (!cfg.full_traces) results[i].steps.clear();
                }
            };
            if (workers == 1) {
                work(0);
            } else {
                std::vector<std::thread> pool;
                for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t);
                for (auto& t : pool) t.join();
            }

            std::vector<double> rr;
            rr.reserve(results.size());
            for (const auto& r : results) rr.push_back(reciprocal_rank(r.rank, cfg.shortlist_k));
            ResultCell cell;
            cell.episodes = results.size();
            double s = 0.0;
            for (double x : rr) s += x;
            cell.mrr = s / static_cast<double>(rr.size());
            std::tie(cell.ci_lo, cell.ci_hi) =
                bootstrap_ci(rr, cfg.bootstrap_resamples, derive_seed(cfg.seed, {io::fnv1a(domain_id), pi}));
            table.cells.back().push_back(cell);
            for (std::size_t i = 0; i < results.size(); ++i)
                table.raw.push_back({kind, domain_id, i, episode_seed(cfg.seed, domain_id, i), std::move(results[i])});
        }
    }
    return table;
}

/// Loads every artifact named by the config; a missing file raises
/// MissingArtifactError naming it.
inline ExperimentArtifacts load_artifacts(const ExperimentConfig& cfg) {
    ExperimentArtifacts art;
    for (auto p : cfg.planners) {
        if (!needs_network(p)) continue;
        auto it = cfg.weights.find(to_string(p));
        if (it == cfg.weights.end()) throw MissingArtifactError("weights for planner " + to_string(p));
        art.networks.emplace(p, Mlp::from_json(nlohmann::json::parse(io::read_text(it->second))));
    }
    if (!cfg.ilc_csv.empty()) art.ilc_table = std::make_shared<PdvTable>(PdvTable::load(cfg.ilc_csv, "a_"));
    bool want_clf = false;
    for (auto p : cfg.planners) want_clf = want_clf || needs_ilc(p);
    if (want_clf && !art.ilc_table) {
        if (cfg.classifier_path.empty()) throw MissingArtifactError("action classifier (config key 'classifier')");
        art.classifier = std::make_shared<ActionClassifier>(
            ActionClassifier::from_json(nlohmann::json::parse(io::read_text(cfg.classifier_path))));
    }
    if (!cfg.observations_csv.empty())
        art.observations = std::make_shared<PdvTable>(PdvTable::load(cfg.observations_csv, "p_"));
    return art;
}

/// Writes table.csv, long.csv and raw.jsonl into `dir`.
inline void write_results(const ResultTable& table, const std::filesystem::path& dir, bool full_traces) {
    io::write_text(dir / "table.csv", table.to_csv());
    io::write_text(dir / "long.csv", table.to_long_csv());
    io::write_text(dir / "raw.jsonl", table.raw_jsonl(full_traces));
}

}  // namespace avpr
