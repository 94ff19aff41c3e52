#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "avpr/error.hpp"
#include "avpr/features.hpp"
#include "avpr/io.hpp"
#include "avpr/log.hpp"
#include "avpr/mlp.hpp"
#include "avpr/random.hpp"

namespace avpr {

/// Q-value approximator: state -> one value per action.
using QNetwork = Mlp;

inline QNetwork make_q_network(std::size_t state_dim, std::size_t actions, const std::vector<std::size_t>& hidden,
                               Activation activation, std::uint64_t seed) {
    std::vector<std::size_t> layers{state_dim};
    layers.insert(layers.end(), hidden.begin(), hidden.end());
    layers.push_back(actions);
    return Mlp::random(layers, activation, seed);
}

inline std::vector<double> q_forward(const QNetwork& net, const StateVector& s) {
    if (s.size() != net.input_dim())
        throw DimensionError("q_forward: state has " + std::to_string(s.size()) + " entries, network expects " +
                             std::to_string(net.input_dim()));
    return net.forward(s.values());
}

/// Index of the largest entry; ties go to the smallest index.
inline std::size_t argmax_index(std::span<const double> q) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.size(); ++i)
        if (q[i] > q[best]) best = i;
    return best;
}

inline std::size_t greedy_action(const QNetwork& net, const StateVector& s) { return argmax_index(q_forward(net, s)); }

/// With probability eps a uniformly random action, otherwise the argmax.
inline std::size_t epsilon_greedy(std::span<const double> q, double eps, Rng& rng) {
    if (q.empty()) throw DimensionError("epsilon_greedy: no actions");
    if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("epsilon_greedy: eps must lie in [0,1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (eps > 0.0 && coin(rng) < eps) {
        std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
        return pick(rng);
    }
    return argmax_index(q);
}

/// Replay element. Rewards are delayed: terminal <=> reward != 0.
struct Transition {
    StateVector state;
    std::size_t action = 0;
    double reward = 0.0;
    StateVector next_state;
    bool terminal = false;

    friend bool operator==(const Transition&, const Transition&) = default;
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 50000) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
        data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % capacity_;
    }

    /// i-th oldest stored transition.
    const Transition& oldest(std::size_t i) const {
        if (i >= data_.size()) throw IndexError("replay buffer index out of range");
        const std::size_t base = data_.size() < capacity_ ? 0 : next_;
        return data_[(base + i) % data_.size()];
    }

    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
        if (data_.empty()) throw StateError("cannot sample from an empty replay buffer");
        std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
        std::vector<const Transition*> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) out.push_back(&data_[pick(rng)]);
        return out;
    }

    void clear() {
        data_.clear();
        next_ = 0;
    }

    /// Storage-order access, used for exact checkpointing.
    const std::vector<Transition>& storage() const noexcept { return data_; }
    std::size_t write_index() const noexcept { return next_; }
    static ReplayBuffer restore(std::size_t capacity, std::vector<Transition> storage, std::size_t write_index) {
        ReplayBuffer b(capacity);
        if (storage.size() > capacity || write_index >= capacity) throw ParseError("replay buffer: inconsistent state");
        b.data_ = std::move(storage);
        b.next_ = write_index;
        return b;
    }

private:
    std::size_t capacity_;
    std::vector<Transition> data_;
    std::size_t next_ = 0;
};

/// Regression target: reward at terminal transitions, otherwise the
/// discounted greedy value of the next state under the target network.
inline double td_target(const Transition& tr, const QNetwork& target, double gamma) {
    if (tr.terminal) return tr.reward;
    const auto q = q_forward(target, tr.next_state);
    return tr.reward + gamma * *std::max_element(q.begin(), q.end());
}

/// Mean squared TD error over the taken actions and its gradient; targets
/// are held constant.
inline std::pair<double, MlpGradients> td_loss_and_gradient(const QNetwork& net, const QNetwork& target,
                                                            std::span<const Transition* const> batch, double gamma) {
    if (batch.empty()) throw DimensionError("train_step: empty batch");
    const auto dim = static_cast<Eigen::Index>(net.input_dim());
    const auto b = static_cast<Eigen::Index>(batch.size());
    Eigen::MatrixXd x(dim, b), xn(dim, b);
    bool any_next = false;
    for (Eigen::Index c = 0; c < b; ++c) {
        const Transition& tr = *batch[static_cast<std::size_t>(c)];
        if (tr.state.size() != net.input_dim()) throw DimensionError("train_step: state dimension mismatch");
        x.col(c) = Eigen::Map<const Eigen::VectorXd>(tr.state.values().data(), dim);
        if (!tr.terminal) {
            if (tr.next_state.size() != net.input_dim()) throw DimensionError("train_step: next-state dimension mismatch");
            xn.col(c) = Eigen::Map<const Eigen::VectorXd>(tr.next_state.values().data(), dim);
            any_next = true;
        } else {
            xn.col(c).setZero();
        }
    }
    Eigen::MatrixXd next_q;
    if (any_next) next_q = target.forward(xn);
    Mlp::Cache cache;
    const Eigen::MatrixXd q = net.forward(x, &cache);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    double loss = 0.0;
    for (Eigen::Index c = 0; c < b; ++c) {
        const Transition& tr = *batch[static_cast<std::size_t>(c)];
        const double y = tr.terminal ? tr.reward : tr.reward + gamma * next_q.col(c).maxCoeff();
        const auto a = static_cast<Eigen::Index>(tr.action);
        if (a >= q.rows()) throw IndexError("train_step: action index out of range");
        const double err = q(a, c) - y;
        loss += err * err;
        grad(a, c) = 2.0 * err / static_cast<double>(b);
    }
    return {loss / static_cast<double>(b), net.backward(cache, grad)};
}

enum class OptimizerKind { sgd, adam };

/// One gradient step on the mean squared TD error. Returns the pre-step
/// loss; throws DivergenceError on a non-finite loss.
inline double train_step(QNetwork& net, const QNetwork& target, std::span<const Transition* const> batch, double lr,
                         double gamma, Adam* adam = nullptr) {
    auto [loss, grad] = td_loss_and_gradient(net, target, batch, gamma);
    if (!std::isfinite(loss)) throw DivergenceError("train_step: non-finite loss");
    if (adam)
        adam->step(net, grad, lr);
    else
        sgd_step(net, grad, lr);
    return loss;
}

inline double train_step(QNetwork& net, const QNetwork& target, std::span<const Transition> batch, double lr,
                         double gamma, Adam* adam = nullptr) {
    std::vector<const Transition*> ptrs;
    for (const auto& t : batch) ptrs.push_back(&t);
    return train_step(net, target, std::span<const Transition* const>(ptrs), lr, gamma, adam);
}

struct DqnConfig {
    double gamma = 0.95;
    double lr = 1e-3;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.3;
    std::size_t batch_size = 64;
    std::size_t target_sync_steps = 1000;
    std::size_t replay_capacity = 50000;
    std::size_t episodes = 50000;
    std::uint64_t seed = 1;
    std::vector<std::size_t> hidden{128, 128};
    Activation activation = Activation::softplus;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::size_t mrr_window = 100;
    /// Episodes between checkpoints (0 = only at the end / on stop).
    std::size_t checkpoint_every = 0;
    /// Simulated interruption: write a checkpoint and return after this
    /// many episodes (0 = run to completion).
    std::size_t stop_after = 0;
    std::filesystem::path checkpoint_path{};

    double epsilon(std::size_t episode) const {
        const double decay = eps_decay_fraction * static_cast<double>(episodes);
        if (decay <= 0.0) return eps_end;
        const double t = std::min(1.0, static_cast<double>(episode) / decay);
        return eps_start + (eps_end - eps_start) * t;
    }

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("dqn: gamma must lie in [0,1]");
        if (!(lr > 0.0)) throw ConfigError("dqn: lr must be positive");
        if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0))
            throw ConfigError("dqn: epsilon must lie in [0,1]");
        if (batch_size == 0 || target_sync_steps == 0 || replay_capacity == 0)
            throw ConfigError("dqn: batch size, sync interval and capacity must be positive");
    }

    nlohmann::json to_json() const {
        return {{"gamma", gamma},
                {"lr", lr},
                {"eps_start", eps_start},
                {"eps_end", eps_end},
                {"eps_decay_fraction", eps_decay_fraction},
                {"batch_size", batch_size},
                {"target_sync_steps", target_sync_steps},
                {"replay_capacity", replay_capacity},
                {"episodes", episodes},
                {"seed", seed},
                {"hidden", hidden},
                {"activation", to_string(activation)},
                {"optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                {"mrr_window", mrr_window}};
    }
};

struct StepResult {
    StateVector state;
    double reward = 0.0;
    bool terminal = false;
};

/// Environment driven by train_dqn. Episode randomness is fully determined
/// by the seed passed to reset.
template <class E>
concept EpisodicEnvironment = requires(E& env, std::uint64_t seed, std::size_t action) {
    { env.reset(seed) } -> std::convertible_to<StateVector>;
    { env.step(action) } -> std::convertible_to<StepResult>;
    { env.action_count() } -> std::convertible_to<std::size_t>;
    { env.state_dim() } -> std::convertible_to<std::size_t>;
};

struct EpisodeLog {
    std::size_t episode = 0;
    double epsilon = 0.0;
    /// Per-step rewards of the episode, in order.
    std::vector<double> rewards;
    /// Mean pre-step loss of the updates made during the episode (NaN if none).
    double loss = std::numeric_limits<double>::quiet_NaN();
    double mrr_window = 0.0;
    double final_rr = 0.0;

    double total_reward() const {
        double s = 0.0;
        for (double r : rewards) s += r;
        return s;
    }
    friend bool operator==(const EpisodeLog& a, const EpisodeLog& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.episode == b.episode && a.epsilon == b.epsilon && a.rewards == b.rewards && same(a.loss, b.loss) &&
               a.mrr_window == b.mrr_window && a.final_rr == b.final_rr;
    }
};

inline std::string training_log_csv(const std::vector<EpisodeLog>& log) {
    std::string out = "episode,epsilon,reward,loss,mrr_window\n";
    for (const auto& e : log) {
        out += std::to_string(e.episode) + ',' + io::format_double(e.epsilon) + ',' + io::format_double(e.total_reward()) +
               ',' + (std::isnan(e.loss) ? std::string() : io::format_double(e.loss)) + ',' +
               io::format_double(e.mrr_window) + '\n';
    }
    return out;
}

struct DqnResult {
    QNetwork net;
    std::vector<EpisodeLog> log;
    std::size_t steps = 0;
    /// True when training returned early because of `stop_after`.
    bool interrupted = false;
};

/// Raised when training diverges; carries the last checkpointed network.
class TrainingDivergedError : public DivergenceError {
public:
    TrainingDivergedError(const std::string& msg, QNetwork last_stable, std::size_t episode)
        : DivergenceError(msg), last_stable_(std::move(last_stable)), episode_(episode) {}
    const QNetwork& last_stable() const noexcept { return last_stable_; }
    std::size_t episode() const noexcept { return episode_; }

private:
    QNetwork last_stable_;
    std::size_t episode_;
};

namespace detail {

class BinaryWriter {
public:
    template <class T>
    void put(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.append(p, sizeof(T));
    }
    void put_doubles(std::span<const double> v) {
        put<std::uint64_t>(v.size());
        bytes_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    }
    void put_string(const std::string& s) {
        put<std::uint64_t>(s.size());
        bytes_.append(s);
    }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::string bytes) : bytes_(std::move(bytes)) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::vector<double> get_doubles() {
        const auto n = get<std::uint64_t>();
        need(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint64_t>();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw ParseError("checkpoint: truncated file");
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

inline std::vector<double> flatten_moments(const Mlp& shape, const MlpGradients& g) { return shape.flatten(g); }

inline MlpGradients unflatten_moments(const Mlp& shape, std::span<const double> flat) {
    Mlp tmp = shape;
    tmp.set_parameters(flat);
    MlpGradients g;
    for (std::size_t l = 0; l < tmp.layer_count(); ++l) {
        g.weights.push_back(tmp.weight(l));
        g.biases.push_back(tmp.bias(l));
    }
    return g;
}

}  // namespace detail

/// Complete resumable trainer state.
struct DqnCheckpoint {
    static constexpr const char* kMagic = "AVPR-DQN-CKPT-1";
    std::string config_fingerprint;
    std::size_t next_episode = 0;
    std::size_t steps = 0;
    QNetwork net;
    QNetwork target;
    Adam adam;
    ReplayBuffer buffer{1};
    std::vector<EpisodeLog> log;

    void save(const std::filesystem::path& path) const {
        detail::BinaryWriter w;
        w.put_string(kMagic);
        w.put_string(config_fingerprint);
        w.put_string(net.to_json().dump());
        w.put<std::uint64_t>(next_episode);
        w.put<std::uint64_t>(steps);
        w.put_doubles(target.parameters());
        w.put<std::uint64_t>(adam.steps());
        w.put_doubles(detail::flatten_moments(net, adam.first_moment()));
        w.put_doubles(detail::flatten_moments(net, adam.second_moment()));
        w.put<std::uint64_t>(buffer.capacity());
        w.put<std::uint64_t>(buffer.write_index());
        w.put<std::uint64_t>(buffer.size());
        for (const Transition& t : buffer.storage()) {
            w.put_doubles(t.state.values());
            w.put<std::uint64_t>(t.action);
            w.put<double>(t.reward);
            w.put_doubles(t.next_state.values());
            w.put<std::uint8_t>(t.terminal ? 1 : 0);
        }
        w.put<std::uint64_t>(log.size());
        for (const auto& e : log) {
            w.put<std::uint64_t>(e.episode);
            w.put<double>(e.epsilon);
            w.put_doubles(e.rewards);
            w.put<double>(e.loss);
            w.put<double>(e.mrr_window);
            w.put<double>(e.final_rr);
        }
        io::write_text(path, w.bytes());
    }

    static DqnCheckpoint load(const std::filesystem::path& path) {
        detail::BinaryReader r(io::read_text(path));
        if (r.get_string() != kMagic) throw ParseError("checkpoint: bad magic in " + path.string());
        DqnCheckpoint c;
        c.config_fingerprint = r.get_string();
        c.net = Mlp::from_json(nlohmann::json::parse(r.get_string()));
        c.next_episode = r.get<std::uint64_t>();
        c.steps = r.get<std::uint64_t>();
        c.target = c.net;
        c.target.set_parameters(r.get_doubles());
        c.adam = Adam(c.net);
        c.adam.set_steps(r.get<std::uint64_t>());
        c.adam.first_moment() = detail::unflatten_moments(c.net, r.get_doubles());
        c.adam.second_moment() = detail::unflatten_moments(c.net, r.get_doubles());
        const auto capacity = r.get<std::uint64_t>();
        const auto write_index = r.get<std::uint64_t>();
        const auto n = r.get<std::uint64_t>();
        std::vector<Transition> storage;
        storage.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            Transition t;
            t.state = StateVector(r.get_doubles());
            t.action = r.get<std::uint64_t>();
            t.reward = r.get<double>();
            t.next_state = StateVector(r.get_doubles());
            t.terminal = r.get<std::uint8_t>() != 0;
            storage.push_back(std::move(t));
        }
        c.buffer = ReplayBuffer::restore(capacity, std::move(storage), write_index);
        const auto m = r.get<std::uint64_t>();
        for (std::uint64_t i = 0; i < m; ++i) {
            EpisodeLog e;
            e.episode = r.get<std::uint64_t>();
            e.epsilon = r.get<double>();
            e.rewards = r.get_doubles();
            e.loss = r.get<double>();
            e.mrr_window = r.get<double>();
            e.final_rr = r.get<double>();
            c.log.push_back(std::move(e));
        }
        return c;
    }
};

/// Deep Q-learning with experience replay and a periodically synced
/// target network.
///
/// Episode `e` draws its environment seed and its exploration/sampling
/// stream from (cfg.seed, e), so a run resumed from a checkpoint continues
/// exactly as the uninterrupted run would have. When `resume` is given the
/// trainer continues from that state instead of initializing a network.
template <EpisodicEnvironment Env>
DqnResult train_dqn(Env& env, const DqnConfig& cfg, std::optional<DqnCheckpoint> resume = std::nullopt) {
    cfg.validate();
    const std::string fingerprint = cfg.to_json().dump();
    DqnCheckpoint st;
    if (resume) {
        st = std::move(*resume);
        if (st.config_fingerprint != fingerprint)
            throw ConfigError("checkpoint was written with a different training configuration");
        if (st.net.input_dim() != env.state_dim() || st.net.output_dim() != env.action_count())
            throw DimensionError("checkpoint network does not match the environment");
    } else {
        st.config_fingerprint = fingerprint;
        st.net = make_q_network(env.state_dim(), env.action_count(), cfg.hidden, cfg.activation, cfg.seed);
        st.target = st.net;
        st.adam = Adam(st.net);
        st.buffer = ReplayBuffer(cfg.replay_capacity);
    }
    Adam* adam = cfg.optimizer == OptimizerKind::adam ? &st.adam : nullptr;
    QNetwork last_stable = st.net;
    std::deque<double> window;
    for (std::size_t i = st.log.size() > cfg.mrr_window ? st.log.size() - cfg.mrr_window : 0; i < st.log.size(); ++i)
        window.push_back(st.log[i].final_rr);

    auto checkpoint = [&] {
        if (!cfg.checkpoint_path.empty()) st.save(cfg.checkpoint_path);
        last_stable = st.net;
    };

    for (std::size_t ep = st.next_episode; ep < cfg.episodes; ++ep) {
        if (cfg.stop_after > 0 && ep >= cfg.stop_after) {
            checkpoint();
            return {st.net, st.log, st.steps, true};
        }
        EpisodeLog rec;
        rec.episode = ep;
        rec.epsilon = cfg.epsilon(ep);
        Rng rng = make_rng(cfg.seed, {salt::explore, ep});
        StateVector s = env.reset(derive_seed(cfg.seed, {salt::episode, ep}));
        double loss_sum = 0.0;
        std::size_t updates = 0;
        while (true) {
            const auto q = q_forward(st.net, s);
            const std::size_t a = epsilon_greedy(q, rec.epsilon, rng);
            StepResult r = env.step(a);
            rec.rewards.push_back(r.reward);
            st.buffer.push({s, a, r.reward, r.terminal ? StateVector() : r.state, r.terminal});
            if (st.buffer.size() >= cfg.batch_size) {
                const auto batch = st.buffer.sample(cfg.batch_size, rng);
                try {
                    loss_sum += train_step(st.net, st.target, batch, cfg.lr, cfg.gamma, adam);
                } catch (const DivergenceError& e) {
                    if (!cfg.checkpoint_path.empty()) {
                        DqnCheckpoint out = st;
                        out.net = last_stable;
                        out.save(cfg.checkpoint_path);
                    }
                    throw TrainingDivergedError(std::string(e.what()) + " at episode " + std::to_string(ep),
                                                last_stable, ep);
                }
                ++updates;
                ++st.steps;
                if (st.steps % cfg.target_sync_steps == 0) st.target = st.net;
            }
            if (r.terminal) break;
            s = std::move(r.state);
        }
        if (updates > 0) rec.loss = loss_sum / static_cast<double>(updates);
        if constexpr (requires { env.final_reciprocal_rank(); }) {
            rec.final_rr = env.final_reciprocal_rank();
        } else {
            rec.final_rr = rec.total_reward() > 0.0 ? 1.0 : 0.0;
        }
        window.push_back(rec.final_rr);
        if (window.size() > cfg.mrr_window) window.pop_front();
        double window_sum = 0.0;
        for (double x : window) window_sum += x;
        rec.mrr_window = window_sum / static_cast<double>(window.size());
        st.log.push_back(std::move(rec));
        st.next_episode = ep + 1;
        if (cfg.checkpoint_every > 0 && st.next_episode % cfg.checkpoint_every == 0) checkpoint();
    }
    if (!cfg.checkpoint_path.empty()) st.save(cfg.checkpoint_path);
    return {st.net, st.log, st.steps, false};
}

inline nlohmann::json q_network_to_json(const QNetwork& net, const DqnConfig& cfg, const nlohmann::json& extra = {}) {
    auto j = net.to_json();
    j["kind"] = "q_network";
    j["seed"] = cfg.seed;
    j["config"] = cfg.to_json();
    if (!extra.is_null())
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

}  // namespace avpr
