#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "avpr/config.hpp"
#include "avpr/eval.hpp"
#include "avpr/io.hpp"
#include "avpr/log.hpp"
#include "avpr/pipeline.hpp"
#include "avpr/planner.hpp"
#include "avpr/proxy.hpp"
#include "avpr/rl.hpp"
#include "avpr/world.hpp"
#include "avpr/world_io.hpp"

namespace avpr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path default_out_dir() {
    const char* env = std::getenv("AVPR_OUT_DIR");
    return env && *env ? fs::path(env) : fs::path("avpr-out");
}

/// Flags that override keys of the effective config (addressed by JSON
/// pointer) only when given on the command line.
class Overrides {
public:
    template <class T>
    CLI::Option* add(CLI::App* app, const std::string& flags, std::vector<std::string> pointers,
                     const std::string& help) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app->add_option(flags, *value, help);
        entries_.push_back([opt, value, pointers](json& j) {
            if (opt->count() == 0) return;
            for (const auto& p : pointers) j[json::json_pointer(p)] = *value;
        });
        return opt;
    }

    CLI::Option* flag(CLI::App* app, const std::string& flags, const std::string& pointer, const std::string& help) {
        CLI::Option* opt = app->add_flag(flags, help);
        entries_.push_back([opt, pointer](json& j) {
            if (opt->count() > 0) j[json::json_pointer(pointer)] = true;
        });
        return opt;
    }

    void apply(json& j) const {
        for (const auto& e : entries_) e(j);
    }

private:
    std::vector<std::function<void(json&)>> entries_;
};

/// Keys of `file` must exist in `defaults`; empty default objects accept
/// any key (free-form maps such as planner -> weights path).
void check_known(const json& defaults, const json& file, const std::string& ctx) {
    if (!file.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (auto it = file.begin(); it != file.end(); ++it) {
        const std::string where = ctx.empty() ? it.key() : ctx + "." + it.key();
        if (!defaults.contains(it.key())) throw ConfigError("config: unknown key '" + where + "'");
        const json& d = defaults.at(it.key());
        if (d.is_object() && !d.empty()) check_known(d, it.value(), where);
    }
}

json read_json_file(const fs::path& path, const std::string& what) {
    const std::string text = io::read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(what + " " + path.string() + ": " + io::position_of(text, e.byte > 0 ? e.byte - 1 : 0) +
                         ": " + e.what());
    }
}

/// defaults <- config file <- flags.
json effective_config(json defaults, const std::string& config_path, const Overrides& ov) {
    if (!config_path.empty()) {
        const json file = read_json_file(config_path, "config file");
        check_known(defaults, file, "");
        defaults.merge_patch(file);
    }
    ov.apply(defaults);
    return defaults;
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: key '") + key + "' is missing or has the wrong type");
    }
}

MotionModel motion_from(double sigma) { return sigma > 0.0 ? MotionModel::gaussian(sigma) : MotionModel::deterministic(); }

fs::path sibling(const fs::path& file, const std::string& suffix) {
    fs::path p = file;
    p.replace_extension();
    return fs::path(p.string() + suffix);
}

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config;
    json seeds = json::object();
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::string started = utc_now();

    void write(const fs::path& path) const {
        auto hashes = [](const std::vector<fs::path>& files) {
            json out = json::object();
            for (const auto& f : files)
                if (fs::exists(f)) out[f.string()] = io::hex64(io::fnv1a(io::read_text(f)));
            return out;
        };
        json j{{"tool", "avpr"},
               {"version", kVersion},
               {"command", command},
               {"argv", argv},
               {"config", config},
               {"seeds", seeds},
               {"inputs", hashes(inputs)},
               {"outputs", hashes(outputs)},
               {"started_utc", started},
               {"finished_utc", utc_now()}};
        io::write_text(path, j.dump(2) + "\n");
    }
};

// ---------------------------------------------------------------- gen-world

json gen_world_defaults() { return {{"seed", 7}, {"world", to_json(WorldConfig{})}, {"output", ""}}; }

int cmd_gen_world(const json& cfg, Manifest& m, std::ostream& out) {
    WorldConfig wc;
    merge_json(wc, cfg.at("world"));
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const fs::path output = get<std::string>(cfg, "output");
    if (output.empty()) throw ConfigError("gen-world: an output path (-o) is required");
    const TrajectoryWorld w = generate_world(wc, seed);
    save_world(w, output);
    m.seeds = {{"world", seed}};
    m.outputs.push_back(output);
    m.write(sibling(output, ".manifest.json"));
    out << "wrote " << output.string() << " (" << w.n_viewpoints << " viewpoints, " << w.place_count()
        << " places)\n";
    return 0;
}

// -------------------------------------------------------------- train proxy

json proxy_defaults() {
    return {{"world", ""},
            {"domain", "train"},
            {"samples", 20000},
            {"seed", 1},
            {"motion_sigma", 0.0},
            {"sample_observations", false},
            {"classifier", to_json(ClassifierConfig{})},
            {"output", (default_out_dir() / "classifier.json").string()},
            {"dataset", ""}};
}

int cmd_train_proxy(const json& cfg, Manifest& m, std::ostream& out) {
    const fs::path world_path = get<std::string>(cfg, "world");
    if (world_path.empty()) throw ConfigError("train proxy: --world is required");
    const TrajectoryWorld w = load_world(world_path);
    const Domain& d = w.domain(get<std::string>(cfg, "domain"));
    ClassifierConfig cc;
    merge_json(cc, cfg.at("classifier"));
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const ProxyDataset ds = build_proxy_dataset(
        w, d, get<std::size_t>(cfg, "samples"), seed,
        LabelConfig{motion_from(get<double>(cfg, "motion_sigma")), get<bool>(cfg, "sample_observations")});
    auto [clf, report] = train_action_classifier(ds, cc);

    const fs::path output = get<std::string>(cfg, "output");
    json j = clf.to_json();
    j["domain"] = d.id;
    j["train_accuracy"] = report.train_accuracy;
    j["holdout_accuracy"] = report.holdout_accuracy;
    io::write_text(output, j.dump() + "\n");
    m.outputs.push_back(output);
    const fs::path dataset = get<std::string>(cfg, "dataset");
    if (!dataset.empty()) {
        io::write_text(dataset, proxy_dataset_to_csv(ds));
        m.outputs.push_back(dataset);
    }
    m.inputs.push_back(world_path);
    m.seeds = {{"dataset", seed}, {"classifier", cc.seed}};
    m.write(sibling(output, ".manifest.json"));
    char buf[128];
    std::snprintf(buf, sizeof buf, "train accuracy %.4f, held-out accuracy %.4f (%zu / %zu records)\n",
                  report.train_accuracy, report.holdout_accuracy, report.train_size, report.holdout_size);
    out << buf;
    if (report.degenerate) out << "warning: single-class dataset, classifier is constant\n";
    out << "wrote " << output.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- train dqn

json dqn_defaults() {
    return {{"world", ""},
            {"variant", "proposed"},
            {"classifier", ""},
            {"domain", "train"},
            {"horizon", 3},
            {"motion_sigma", 0.0},
            {"dqn", DqnConfig{}.to_json()},
            {"output", ""},
            {"log", ""},
            {"checkpoint", ""},
            {"checkpoint_every", 0},
            {"stop_after", 0}};
}

int cmd_train_dqn(const json& cfg, bool resume, Manifest& m, std::ostream& out) {
    const PlannerKind kind = planner_from_string(get<std::string>(cfg, "variant"));
    if (!needs_network(kind)) throw ConfigError("train dqn: variant " + to_string(kind) + " has no network to train");
    const fs::path world_path = get<std::string>(cfg, "world");
    if (world_path.empty()) throw ConfigError("train dqn: --world is required");
    const TrajectoryWorld w = load_world(world_path);
    m.inputs.push_back(world_path);

    std::shared_ptr<const ActionClassifier> clf;
    if (needs_ilc(kind)) {
        const fs::path clf_path = get<std::string>(cfg, "classifier");
        if (clf_path.empty()) throw MissingArtifactError("action classifier (--classifier, needed by " + to_string(kind) + ")");
        clf = std::make_shared<ActionClassifier>(ActionClassifier::from_json(read_json_file(clf_path, "classifier")));
        m.inputs.push_back(clf_path);
    }

    DqnConfig dc;
    merge_json(dc, cfg.at("dqn"));
    fs::path output = get<std::string>(cfg, "output");
    if (output.empty()) output = default_out_dir() / (to_string(kind) + ".json");
    fs::path log_path = get<std::string>(cfg, "log");
    if (log_path.empty()) log_path = sibling(output, "_log.csv");
    fs::path ckpt = get<std::string>(cfg, "checkpoint");
    dc.checkpoint_every = get<std::size_t>(cfg, "checkpoint_every");
    dc.stop_after = get<std::size_t>(cfg, "stop_after");
    if (ckpt.empty() && (resume || dc.checkpoint_every > 0 || dc.stop_after > 0)) ckpt = sibling(output, ".ckpt");
    dc.checkpoint_path = ckpt;

    std::optional<DqnCheckpoint> state;
    if (resume) {
        if (!fs::exists(ckpt)) throw MissingArtifactError("checkpoint " + ckpt.string());
        state = DqnCheckpoint::load(ckpt);
        m.inputs.push_back(ckpt);
        out << "resuming from episode " << state->next_episode << "\n";
    }

    const std::string domain = get<std::string>(cfg, "domain");
    auto env = training_environment(w, kind, clf, get<std::size_t>(cfg, "horizon"),
                                    motion_from(get<double>(cfg, "motion_sigma")), domain);
    DqnResult r;
    try {
        r = train_dqn(env, dc, std::move(state));
    } catch (const TrainingDivergedError& e) {
        const fs::path stable = sibling(output, "_last_stable.json");
        io::write_text(stable, q_network_to_json(e.last_stable(), dc).dump() + "\n");
        throw Error(std::string(e.what()) + "; last stable weights written to " + stable.string());
    }
    m.seeds = {{"dqn", dc.seed}};
    if (r.interrupted) {
        out << "stopped after " << r.log.size() << " episodes; checkpoint " << ckpt.string()
            << " (continue with --resume)\n";
        m.outputs.push_back(ckpt);
        m.write(sibling(output, ".manifest.json"));
        return 0;
    }
    io::write_text(output, q_network_to_json(r.net, dc, {{"variant", to_string(kind)}, {"domain", domain}}).dump() + "\n");
    io::write_text(log_path, training_log_csv(r.log));
    m.outputs.push_back(output);
    m.outputs.push_back(log_path);
    if (!ckpt.empty()) m.outputs.push_back(ckpt);
    m.write(sibling(output, ".manifest.json"));
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu episodes, %zu updates, final window MRR %.4f\n", r.log.size(), r.steps,
                  r.log.empty() ? 0.0 : r.log.back().mrr_window);
    out << buf << "wrote " << output.string() << " and " << log_path.string() << "\n";
    return 0;
}

// --------------------------------------------------------------------- eval

json eval_defaults() {
    ExperimentConfig c;
    c.output_dir = default_out_dir().string();
    json j = c.to_json();
    j["threads"] = 0;
    return j;
}

void print_table(const ResultTable& t, std::ostream& out) {
    char buf[64];
    out << "planner";
    for (const auto& d : t.domains) out << '\t' << d;
    out << '\n';
    for (std::size_t i = 0; i < t.planners.size(); ++i) {
        out << to_string(t.planners[i]);
        for (const auto& c : t.cells[i]) {
            std::snprintf(buf, sizeof buf, "\t%.3f [%.3f,%.3f]", c.mrr, c.ci_lo, c.ci_hi);
            out << buf;
        }
        out << '\n';
    }
}

/// Trains every artifact of the paper-shape benchmark into `dir`.
void build_paper_shape_artifacts(ExperimentConfig& ec, const fs::path& dir, Manifest& m, std::ostream& out) {
    BenchmarkConfig bc = paper_shape_benchmark();
    out << "training benchmark artifacts into " << dir.string() << "\n";
    const TrajectoryWorld w = generate_world(bc.world, bc.world_seed);
    const ProxyDataset ds = build_proxy_dataset(w, w.domain("train"), bc.proxy_samples, bc.classifier.seed,
                                                LabelConfig{ec.motion, false});
    auto [clf, report] = train_action_classifier(ds, bc.classifier);
    save_world(w, dir / "world.json");
    io::write_text(dir / "classifier.json", clf.to_json().dump() + "\n");
    ec.world_path = (dir / "world.json").string();
    ec.classifier_path = (dir / "classifier.json").string();
    auto shared = std::make_shared<const ActionClassifier>(clf);
    for (PlannerKind k : ec.planners) {
        if (!needs_network(k)) continue;
        auto env = training_environment(w, k, shared, ec.horizon, ec.motion);
        const DqnResult r = train_dqn(env, bc.dqn);
        const fs::path wp = dir / (to_string(k) + ".json");
        io::write_text(wp, q_network_to_json(r.net, bc.dqn, {{"variant", to_string(k)}}).dump() + "\n");
        io::write_text(dir / (to_string(k) + "_log.csv"), training_log_csv(r.log));
        ec.weights[to_string(k)] = wp.string();
        m.outputs.push_back(wp);
        out << "trained " << to_string(k) << "\n";
    }
    m.outputs.push_back(dir / "world.json");
    m.outputs.push_back(dir / "classifier.json");
    m.seeds["world"] = bc.world_seed;
    m.seeds["classifier"] = bc.classifier.seed;
    m.seeds["dqn"] = bc.dqn.seed;
}

int cmd_eval(json cfg, const std::string& preset, const std::string& artifacts, Manifest& m, std::ostream& out) {
    ExperimentConfig ec;
    ec.merge_json(cfg);
    ec.validate();
    const fs::path dir = ec.output_dir;
    const bool paper_shape = preset == "paper-shape";
    if (paper_shape && ec.world_path.empty()) build_paper_shape_artifacts(ec, dir, m, out);
    if (ec.world_path.empty()) throw ConfigError("eval: no world given (--world, config key 'world' or --artifacts)");
    (void)artifacts;

    const TrajectoryWorld w = load_world(ec.world_path);
    const ExperimentArtifacts art = load_artifacts(ec);
    m.inputs.push_back(ec.world_path);
    for (const auto& [name, path] : ec.weights) m.inputs.push_back(path);
    if (!ec.classifier_path.empty()) m.inputs.push_back(ec.classifier_path);
    if (!ec.observations_csv.empty()) m.inputs.push_back(ec.observations_csv);
    if (!ec.ilc_csv.empty()) m.inputs.push_back(ec.ilc_csv);

    const ResultTable table = run_experiment(w, art, ec);
    write_results(table, dir, ec.full_traces);
    for (const char* f : {"table.csv", "long.csv", "raw.jsonl"}) m.outputs.push_back(dir / f);
    m.config = ec.to_json();
    m.config["threads"] = ec.threads;
    m.seeds["experiment"] = ec.seed;
    m.write(dir / "manifest.json");
    print_table(table, out);
    out << "wrote " << (dir / "table.csv").string() << ", long.csv, raw.jsonl, manifest.json\n";
    return 0;
}

// ------------------------------------------------------------------ inspect

json read_episode(const std::string& spec) {
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos || colon + 1 == spec.size())
        throw ConfigError("inspect: --episode expects FILE:INDEX");
    const std::string file = spec.substr(0, colon);
    std::size_t index = 0;
    try {
        std::size_t used = 0;
        const long long v = std::stoll(spec.substr(colon + 1), &used);
        if (v < 0 || used != spec.size() - colon - 1) throw std::invalid_argument("index");
        index = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("inspect: invalid episode index '" + spec.substr(colon + 1) + "'");
    }
    std::istringstream in(io::read_text(file));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (n++ == index) {
            try {
                return json::parse(line);
            } catch (const json::parse_error& e) {
                throw ParseError(file + ": record " + std::to_string(index) + ": " + e.what());
            }
        }
    }
    throw IndexError("inspect: " + file + " holds " + std::to_string(n) + " episodes, index " +
                     std::to_string(index) + " is out of range");
}

std::size_t rank_in(const std::vector<double>& p, std::size_t k) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < p.size(); ++j)
        if (p[j] > p[k] || (p[j] == p[k] && j < k)) ++r;
    return r;
}

std::string top_entries(const std::vector<double>& p, std::size_t count) {
    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    std::string s;
    char buf[48];
    for (std::size_t i = 0; i < std::min(count, idx.size()); ++i) {
        std::snprintf(buf, sizeof buf, "%s%zu:%.3f", i ? " " : "", idx[i], p[idx[i]]);
        s += buf;
    }
    return s;
}

int cmd_inspect(const std::string& spec, const std::string& format, std::ostream& out) {
    const json ep = read_episode(spec);
    const auto true_place = ep.at("true_place").get<std::size_t>();
    const json& steps = ep.contains("steps") ? ep.at("steps") : json::array();
    if (format == "csv") {
        if (steps.empty()) throw ValidationError("inspect: episode has no step trace (rerun eval with --traces)");
        const std::size_t c = steps.front().at("place_pdv").size();
        out << "step,viewpoint,action_m,reward,true_place,rank_true,top_place";
        for (std::size_t j = 0; j < c; ++j) out << ",p_" << j;
        out << '\n';
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const auto& s = steps[k];
            const auto p = s.at("place_pdv").get<std::vector<double>>();
            std::size_t top = 0;
            for (std::size_t j = 1; j < p.size(); ++j)
                if (p[j] > p[top]) top = j;
            out << k << ',' << s.at("viewpoint").get<std::size_t>() << ',' << s.at("action_m").get<std::size_t>()
                << ',' << io::format_double(s.at("reward").get<double>()) << ',' << true_place << ','
                << rank_in(p, true_place) << ',' << top;
            for (double x : p) out << ',' << io::format_double(x);
            out << '\n';
        }
        return 0;
    }
    out << "planner " << ep.value("planner", "?") << "  domain " << ep.value("domain", "?") << "  episode "
        << ep.value("episode", std::size_t{0}) << "\n";
    out << "start " << ep.at("start").get<std::size_t>() << "  true place " << true_place << "  final viewpoint "
        << ep.at("final_viewpoint").get<std::size_t>() << "  rank " << ep.at("rank").get<std::size_t>() << "\n";
    std::string actions;
    for (const auto& a : ep.at("actions_m")) actions += (actions.empty() ? "" : " ") + std::to_string(a.get<std::size_t>());
    out << "actions (m): " << (actions.empty() ? "none" : actions) << "\n";
    if (steps.empty()) {
        out << "final place PDV top: " << top_entries(ep.at("final_place_pdv").get<std::vector<double>>(), 3) << "\n";
        out << "(no step trace; rerun eval with --traces for per-step beliefs)\n";
        return 0;
    }
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& s = steps[k];
        const auto p = s.at("place_pdv").get<std::vector<double>>();
        out << "step " << k << "  viewpoint " << s.at("viewpoint").get<std::size_t>() << "  moved "
            << s.at("action_m").get<std::size_t>() << " m  reward " << io::format_double(s.at("reward").get<double>())
            << "\n";
        out << "  observation top: " << top_entries(s.at("observation").get<std::vector<double>>(), 3) << "\n";
        out << "  place belief top: " << top_entries(p, 3) << "  (true place rank " << rank_in(p, true_place)
            << ")\n";
        if (s.contains("ilc")) out << "  ILC top actions: " << top_entries(s.at("ilc").get<std::vector<double>>(), 3) << "\n";
        std::string rrf;
        char buf[24];
        for (const auto& x : s.at("state")) {
            std::snprintf(buf, sizeof buf, "%s%.3g", rrf.empty() ? "" : " ", x.get<double>());
            rrf += buf;
        }
        out << "  state RRF: " << rrf << "\n";
    }
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const MissingArtifactError*>(&e) ||
        dynamic_cast<const IndexError*>(&e))
        return 2;
    return 1;
}

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Active visual place recognition: world generation, training and evaluation", "avpr"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log progress to stderr");
    Overrides ov;
    std::string config_path;
    std::vector<std::string> argv_copy(argv, argv + argc);

    auto* gen = app.add_subcommand("gen-world", "Generate a synthetic trajectory world");
    gen->add_option("--config", config_path, "JSON config file");
    ov.add<std::size_t>(gen, "--viewpoints", {"/world/viewpoints"}, "Number of 1 m viewpoints");
    ov.add<std::size_t>(gen, "--place-len", {"/world/place_len_m"}, "Place length in meters");
    ov.add<std::size_t>(gen, "--max-action", {"/world/max_action_m"}, "Longest forward action in meters");
    ov.add<double>(gen, "--featureless", {"/world/featureless_fraction"}, "Fraction of featureless viewpoints");
    ov.add<std::uint64_t>(gen, "--seed", {"/seed"}, "World seed");
    ov.add<std::string>(gen, "-o,--output", {"/output"}, "World file to write");

    auto* train = app.add_subcommand("train", "Train the action classifier or a DQN planner");
    train->require_subcommand(1);
    auto* proxy = train->add_subcommand("proxy", "Build the proxy dataset and train the action classifier");
    proxy->add_option("--config", config_path, "JSON config file");
    ov.add<std::string>(proxy, "--world", {"/world"}, "World file");
    ov.add<std::string>(proxy, "--domain", {"/domain"}, "Training domain id");
    ov.add<std::size_t>(proxy, "--samples", {"/samples"}, "Proxy dataset size");
    ov.add<std::uint64_t>(proxy, "--seed", {"/seed", "/classifier/seed"}, "Dataset and training seed");
    ov.add<std::size_t>(proxy, "--epochs", {"/classifier/epochs"}, "Training epochs");
    ov.add<std::size_t>(proxy, "--hidden", {"/classifier/hidden"}, "Hidden layer width");
    ov.add<double>(proxy, "--lr", {"/classifier/lr"}, "Learning rate");
    ov.add<double>(proxy, "--motion-sigma", {"/motion_sigma"}, "Gaussian odometry noise (0 = deterministic)");
    ov.flag(proxy, "--sample-observations", "/sample_observations", "Label with sampled instead of expected observations");
    ov.add<std::string>(proxy, "--dataset", {"/dataset"}, "Also write the proxy dataset as CSV");
    ov.add<std::string>(proxy, "-o,--output", {"/output"}, "Classifier weights file");

    auto* dqn = train->add_subcommand("dqn", "Train a DQN planner variant");
    dqn->add_option("--config", config_path, "JSON config file");
    ov.add<std::string>(dqn, "--variant", {"/variant"}, "olc_only, ilc_only or proposed");
    ov.add<std::string>(dqn, "--world", {"/world"}, "World file");
    ov.add<std::string>(dqn, "--classifier", {"/classifier"}, "Action classifier weights (ilc_only, proposed)");
    ov.add<std::string>(dqn, "--domain", {"/domain"}, "Training domain id");
    ov.add<std::size_t>(dqn, "--horizon", {"/horizon"}, "Actions per episode");
    ov.add<double>(dqn, "--motion-sigma", {"/motion_sigma"}, "Gaussian odometry noise (0 = deterministic)");
    ov.add<std::size_t>(dqn, "--episodes", {"/dqn/episodes"}, "Training episodes");
    ov.add<std::uint64_t>(dqn, "--seed", {"/dqn/seed"}, "Training seed");
    ov.add<std::vector<std::size_t>>(dqn, "--hidden", {"/dqn/hidden"}, "Hidden layer widths");
    ov.add<std::size_t>(dqn, "--batch", {"/dqn/batch_size"}, "Replay batch size");
    ov.add<double>(dqn, "--lr", {"/dqn/lr"}, "Learning rate");
    ov.add<double>(dqn, "--gamma", {"/dqn/gamma"}, "Discount factor");
    ov.add<std::string>(dqn, "-o,--output", {"/output"}, "Weights file");
    ov.add<std::string>(dqn, "--log", {"/log"}, "Training log CSV");
    ov.add<std::string>(dqn, "--checkpoint", {"/checkpoint"}, "Checkpoint file");
    ov.add<std::size_t>(dqn, "--checkpoint-every", {"/checkpoint_every"}, "Episodes between checkpoints");
    ov.add<std::size_t>(dqn, "--stop-after", {"/stop_after"}, "Checkpoint and stop after this many episodes");
    bool resume = false;
    dqn->add_flag("--resume", resume, "Continue from the checkpoint");

    auto* ev = app.add_subcommand("eval", "Evaluate planners on the test domains");
    ev->add_option("--config", config_path, "JSON experiment config");
    std::string preset, artifacts;
    ev->add_option("--preset", preset, "Named experiment preset")->check(CLI::IsMember({"paper-shape"}));
    ev->add_option("--artifacts", artifacts, "Directory with world.json, classifier.json and <planner>.json");
    ov.add<std::string>(ev, "--world", {"/world"}, "World file");
    ov.add<std::vector<std::string>>(ev, "--planners", {"/planners"}, "Planners to evaluate")->delimiter(',');
    ov.add<std::vector<std::string>>(ev, "--domains", {"/domains"}, "Test domains (default: all shifted)")
        ->delimiter(',');
    ov.add<std::string>(ev, "--classifier", {"/classifier"}, "Action classifier weights");
    ov.add<std::string>(ev, "--observations", {"/observations_csv"}, "Ingested place PDVs (CSV)");
    ov.add<std::string>(ev, "--ilc", {"/ilc_csv"}, "Ingested action PDVs (CSV)");
    ov.add<std::size_t>(ev, "--episodes", {"/episodes"}, "Episodes per cell");
    ov.add<std::uint64_t>(ev, "--seed", {"/seed"}, "Evaluation seed");
    ov.add<std::size_t>(ev, "--horizon", {"/horizon"}, "Actions per episode");
    ov.add<double>(ev, "--motion-sigma", {"/motion_sigma"}, "Gaussian odometry noise (0 = deterministic)");
    ov.add<std::size_t>(ev, "--shortlist", {"/shortlist_k"}, "Score 0 beyond this rank (0 = full ranking)");
    ov.add<std::size_t>(ev, "--bootstrap", {"/bootstrap_resamples"}, "Bootstrap resamples");
    ov.add<std::size_t>(ev, "--threads", {"/threads"}, "Worker threads (0 = all cores)");
    ov.flag(ev, "--traces", "/full_traces", "Keep per-step traces in raw.jsonl");
    ov.add<std::string>(ev, "-o,--output", {"/output_dir"}, "Output directory");
    std::vector<std::string> weight_pairs;
    ev->add_option("--weights", weight_pairs, "PLANNER=FILE weights (repeatable)");

    auto* ins = app.add_subcommand("inspect", "Print one evaluated episode");
    std::string episode_spec, format = "text";
    ins->add_option("--episode", episode_spec, "RAW_JSONL:INDEX (0-based)")->required();
    ins->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    if (verbose) log::set_level(log::Level::info);

    Manifest m;
    m.argv = argv_copy;
    if (gen->parsed()) {
        m.command = "gen-world";
        m.config = effective_config(gen_world_defaults(), config_path, ov);
        return cmd_gen_world(m.config, m, out);
    }
    if (proxy->parsed()) {
        m.command = "train proxy";
        m.config = effective_config(proxy_defaults(), config_path, ov);
        return cmd_train_proxy(m.config, m, out);
    }
    if (dqn->parsed()) {
        m.command = "train dqn";
        m.config = effective_config(dqn_defaults(), config_path, ov);
        return cmd_train_dqn(m.config, resume, m, out);
    }
    if (ev->parsed()) {
        m.command = "eval";
        json defaults = eval_defaults();
        if (preset == "paper-shape") {
            defaults["episodes"] = paper_shape_benchmark().experiment.episodes;
            defaults["domains"] = json::array();
            defaults["planners"] = planner_names();
        }
        if (!artifacts.empty()) {
            const fs::path a = artifacts;
            defaults["world"] = (a / "world.json").string();
            defaults["classifier"] = (a / "classifier.json").string();
            json wm = json::object();
            for (const auto& name : planner_names())
                if (needs_network(planner_from_string(name))) wm[name] = (a / (name + ".json")).string();
            defaults["weights"] = wm;
        }
        json cfg = effective_config(defaults, config_path, ov);
        for (const auto& pair : weight_pairs) {
            const auto eq = pair.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("eval: --weights expects PLANNER=FILE, got '" + pair + "'");
            const std::string name = pair.substr(0, eq);
            (void)planner_from_string(name);
            cfg["weights"][name] = pair.substr(eq + 1);
        }
        return cmd_eval(cfg, preset, artifacts, m, out);
    }
    return cmd_inspect(episode_spec, format, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.push_back("avpr");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
        return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    } catch (const std::exception& e) {
        err << "avpr: error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace avpr::cli
