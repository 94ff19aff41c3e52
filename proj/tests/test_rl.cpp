#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "avpr/rl.hpp"
#include "oracles.hpp"

using namespace avpr;

namespace {

StateVector sv(std::vector<double> v) { return StateVector(std::move(v)); }

/// Contextual bandit: a random one-hot state, one action, reward +-1 from a
/// fixed table.
struct Bandit {
    std::vector<std::vector<double>> reward;  // [state][action]
    std::size_t state = 0;

    std::size_t action_count() const { return reward.front().size(); }
    std::size_t state_dim() const { return reward.size(); }
    StateVector observe() const {
        std::vector<double> s(state_dim(), 0.0);
        s[state] = 1.0;
        return sv(s);
    }
    StateVector reset(std::uint64_t seed) {
        Rng rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, state_dim() - 1);
        state = pick(rng);
        return observe();
    }
    StepResult step(std::size_t a) { return {StateVector(), reward[state][a], true}; }
};

/// Two-step chain: the first action picks a branch, the second is rewarded
/// depending on the branch.
struct TwoStep {
    std::size_t t = 0, branch = 0;
    std::size_t action_count() const { return 2; }
    std::size_t state_dim() const { return 3; }
    StateVector reset(std::uint64_t) {
        t = 0;
        return sv({1, 0, 0});
    }
    StepResult step(std::size_t a) {
        if (t++ == 0) {
            branch = a;
            return {a == 0 ? sv({0, 1, 0}) : sv({0, 0, 1}), 0.0, false};
        }
        const double r = branch == 1 && a == 0 ? 1.0 : -1.0;
        return {StateVector(), r, true};
    }
};

Bandit make_bandit() {
    return Bandit{{{1, -1, -1}, {-1, -1, 1}, {-1, 1, -1}, {1, -1, 1}}};
}

DqnConfig small_config(std::size_t episodes) {
    DqnConfig c;
    c.episodes = episodes;
    c.hidden = {16};
    c.batch_size = 16;
    c.target_sync_steps = 50;
    c.replay_capacity = 2000;
    c.lr = 5e-3;
    return c;
}

}  // namespace

TEST(QNet, ShapeAndGreedyTies) {
    const auto net = make_q_network(5, 3, {8, 8}, Activation::softplus, 1);
    EXPECT_EQ(net.layers(), (std::vector<std::size_t>{5, 8, 8, 3}));
    EXPECT_EQ(argmax_index(std::vector<double>{0.1, 0.5, 0.5}), 1u);
    EXPECT_THROW(q_forward(net, sv({1, 2})), DimensionError);
}

TEST(Epsilon, ZeroIsGreedyAndOneIsUniform) {
    Rng rng(3);
    const std::vector<double> q{0.0, 2.0, 1.0, -1.0};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(epsilon_greedy(q, 0.0, rng), 1u);
    std::vector<double> freq(4, 0.0);
    const int n = 40000;
    for (int i = 0; i < n; ++i) freq[epsilon_greedy(q, 1.0, rng)] += 1.0 / n;
    for (double f : freq) EXPECT_NEAR(f, 0.25, 0.015);
}

TEST(Epsilon, ExplorationRateMatchesEps) {
    Rng rng(4);
    const std::vector<double> q{0.0, 2.0, 1.0, -1.0};
    const int n = 40000;
    int greedy = 0;
    for (int i = 0; i < n; ++i) greedy += epsilon_greedy(q, 0.4, rng) == 1 ? 1 : 0;
    EXPECT_NEAR(static_cast<double>(greedy) / n, 0.6 + 0.4 / 4, 0.015);
    EXPECT_THROW(epsilon_greedy(q, 1.5, rng), DomainError);
}

TEST(Epsilon, LinearScheduleOverFirstThirtyPercent) {
    DqnConfig c;
    c.episodes = 1000;
    EXPECT_DOUBLE_EQ(c.epsilon(0), 1.0);
    EXPECT_NEAR(c.epsilon(150), 0.525, 1e-12);
    EXPECT_NEAR(c.epsilon(300), 0.05, 1e-12);
    EXPECT_NEAR(c.epsilon(999), 0.05, 1e-12);
}

TEST(Replay, EvictsOldestAtCapacity) {
    ReplayBuffer b(3);
    for (std::size_t i = 0; i < 5; ++i) b.push({sv({double(i)}), i, 0.0, sv({0}), false});
    EXPECT_EQ(b.size(), 3u);
    EXPECT_EQ(b.oldest(0).action, 2u);
    EXPECT_EQ(b.oldest(2).action, 4u);
    EXPECT_THROW(b.oldest(3), IndexError);
}

TEST(Replay, SamplingIsSeededAndCoversBuffer) {
    ReplayBuffer b(10);
    for (std::size_t i = 0; i < 10; ++i) b.push({sv({double(i)}), i, 0.0, sv({0}), false});
    Rng r1(5), r2(5);
    const auto s1 = b.sample(200, r1), s2 = b.sample(200, r2);
    std::vector<int> seen(10, 0);
    for (std::size_t i = 0; i < s1.size(); ++i) {
        EXPECT_EQ(s1[i], s2[i]);
        seen[s1[i]->action] = 1;
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    ReplayBuffer empty(4);
    EXPECT_THROW(empty.sample(1, r1), StateError);
    EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(Td, TargetUsesTargetNetworkMax) {
    QNetwork target({2, 3}, Activation::relu);
    target.weight(0) << 1, 0, 0, 1, 1, 1;
    target.bias(0) << 0, 0, -5;
    const Transition mid{sv({1, 0}), 0, 0.0, sv({2, 3}), false};
    EXPECT_DOUBLE_EQ(td_target(mid, target, 0.9), 0.9 * 3.0);
    const Transition last{sv({1, 0}), 0, -1.0, StateVector(), true};
    EXPECT_DOUBLE_EQ(td_target(last, target, 0.9), -1.0);
}

TEST(Td, LossGradientMatchesFiniteDifferences) {
    Rng rng(12);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const auto net = make_q_network(6, 4, {9, 7}, Activation::softplus, 10 + static_cast<std::uint64_t>(trial));
        const auto target = make_q_network(6, 4, {9, 7}, Activation::softplus, 90 + static_cast<std::uint64_t>(trial));
        std::vector<Transition> batch;
        for (int i = 0; i < 8; ++i) {
            std::vector<double> s(6), s2(6);
            for (auto& x : s) x = n(rng);
            for (auto& x : s2) x = n(rng);
            const bool terminal = i % 3 == 0;
            batch.push_back({sv(s), static_cast<std::size_t>(i % 4), terminal ? (i % 2 ? 1.0 : -1.0) : 0.0,
                             terminal ? StateVector() : sv(s2), terminal});
        }
        std::vector<const Transition*> ptrs;
        for (const auto& t : batch) ptrs.push_back(&t);
        const auto [loss, grad] = td_loss_and_gradient(net, target, ptrs, 0.95);
        // Independent loss: mean over the batch of (Q(s,a) - y)^2.
        auto loss_at = [&](const std::vector<double>& p) {
            QNetwork probe = net;
            probe.set_parameters(p);
            double s = 0.0;
            for (const auto& t : batch) {
                const double y = td_target(t, target, 0.95);
                const double e = q_forward(probe, t.state)[t.action] - y;
                s += e * e;
            }
            return s / static_cast<double>(batch.size());
        };
        EXPECT_NEAR(loss, loss_at(net.parameters()), 1e-12);
        EXPECT_LT(oracle::max_relative_error(net.flatten(grad), oracle::numeric_gradient(loss_at, net.parameters())),
                  1e-4);
    }
}

TEST(Td, TrainStepReducesLossOnFixedBatch) {
    auto net = make_q_network(3, 2, {8}, Activation::softplus, 1);
    const auto target = net;
    std::vector<Transition> batch{{sv({1, 0, 0}), 0, 1.0, StateVector(), true},
                                  {sv({0, 1, 0}), 1, -1.0, StateVector(), true}};
    Adam adam(net);
    const double first = train_step(net, target, batch, 1e-2, 0.95, &adam);
    double last = first;
    for (int i = 0; i < 200; ++i) last = train_step(net, target, batch, 1e-2, 0.95, &adam);
    EXPECT_LT(last, first * 0.01);
}

TEST(Dqn, BanditPolicyMatchesValueIteration) {
    Bandit env = make_bandit();
    const auto opt = oracle::optimal_actions(
        env.state_dim(), env.action_count(), 1, [](std::size_t s, std::size_t) { return s; },
        [&](std::size_t s, std::size_t a) { return env.reward[s][a]; });
    const auto r = train_dqn(env, small_config(1500));
    for (std::size_t s = 0; s < env.state_dim(); ++s) {
        env.state = s;
        const auto a = greedy_action(r.net, env.observe());
        EXPECT_NE(std::find(opt[s].begin(), opt[s].end(), a), opt[s].end()) << "state " << s;
    }
}

TEST(Dqn, LearnsDelayedRewardThroughBootstrap) {
    TwoStep env;
    auto cfg = small_config(1500);
    cfg.gamma = 0.9;
    const auto r = train_dqn(env, cfg);
    EXPECT_EQ(greedy_action(r.net, sv({1, 0, 0})), 1u);
    EXPECT_EQ(greedy_action(r.net, sv({0, 0, 1})), 0u);
    const auto q = q_forward(r.net, sv({1, 0, 0}));
    EXPECT_NEAR(q[1], 0.9, 0.15);
}

TEST(Dqn, LogRecordsOneTerminalRewardPerEpisode) {
    TwoStep env;
    const auto r = train_dqn(env, small_config(300));
    ASSERT_EQ(r.log.size(), 300u);
    for (const auto& e : r.log) {
        ASSERT_EQ(e.rewards.size(), 2u);
        EXPECT_EQ(e.rewards[0], 0.0);
        EXPECT_EQ(std::abs(e.rewards[1]), 1.0);
    }
    const auto csv = training_log_csv(r.log);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "episode,epsilon,reward,loss,mrr_window");
}

TEST(Dqn, TrainingIsDeterministic) {
    Bandit a = make_bandit(), b = make_bandit();
    EXPECT_EQ(train_dqn(a, small_config(200)).net, train_dqn(b, small_config(200)).net);
}

TEST(Dqn, ResumeFromCheckpointMatchesUninterruptedRun) {
    const auto dir = std::filesystem::temp_directory_path() / "avpr_resume_test";
    std::filesystem::remove_all(dir);
    Bandit env = make_bandit();
    const auto full = train_dqn(env, small_config(400));

    auto cfg = small_config(400);
    cfg.checkpoint_path = dir / "run.ckpt";
    cfg.stop_after = 170;
    Bandit env2 = make_bandit();
    const auto part = train_dqn(env2, cfg);
    EXPECT_TRUE(part.interrupted);
    EXPECT_EQ(part.log.size(), 170u);

    cfg.stop_after = 0;
    Bandit env3 = make_bandit();
    const auto resumed = train_dqn(env3, cfg, DqnCheckpoint::load(cfg.checkpoint_path));
    EXPECT_FALSE(resumed.interrupted);
    EXPECT_EQ(resumed.net, full.net);
    ASSERT_EQ(resumed.log.size(), full.log.size());
    for (std::size_t i = 0; i < full.log.size(); ++i) EXPECT_EQ(resumed.log[i], full.log[i]) << i;
    std::filesystem::remove_all(dir);
}

TEST(Dqn, ResumeWithDifferentConfigIsRejected) {
    const auto dir = std::filesystem::temp_directory_path() / "avpr_resume_cfg_test";
    auto cfg = small_config(100);
    cfg.checkpoint_path = dir / "run.ckpt";
    cfg.stop_after = 50;
    Bandit env = make_bandit();
    train_dqn(env, cfg);
    auto other = cfg;
    other.lr = 1e-2;
    other.stop_after = 0;
    EXPECT_THROW(train_dqn(env, other, DqnCheckpoint::load(cfg.checkpoint_path)), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(Dqn, CorruptCheckpointIsParseError) {
    const auto path = std::filesystem::temp_directory_path() / "avpr_bad.ckpt";
    io::write_text(path, "not a checkpoint");
    EXPECT_THROW(DqnCheckpoint::load(path), ParseError);
    std::filesystem::remove(path);
}

TEST(Dqn, DivergenceRaisesWithLastStableNetwork) {
    Bandit env = make_bandit();
    auto cfg = small_config(500);
    cfg.optimizer = OptimizerKind::sgd;
    cfg.lr = 1e6;
    try {
        train_dqn(env, cfg);
        FAIL() << "expected divergence";
    } catch (const TrainingDivergedError& e) {
        EXPECT_TRUE(e.last_stable().all_finite());
    }
}

TEST(DqnConfigTest, ValidationRejectsBadValues) {
    DqnConfig c;
    c.gamma = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = DqnConfig{};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = DqnConfig{};
    c.lr = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Dqn, ZeroEpisodesReturnsInitialNetwork) {
    Bandit env = make_bandit();
    const auto cfg = small_config(0);
    const auto r = train_dqn(env, cfg);
    EXPECT_TRUE(r.log.empty());
    EXPECT_EQ(r.steps, 0u);
    EXPECT_EQ(r.net, make_q_network(env.state_dim(), env.action_count(), cfg.hidden, cfg.activation, cfg.seed));
}
