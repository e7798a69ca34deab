#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "qimb/agent.hpp"

using namespace qimb;

namespace {

DuelingParams fixed_net(double b0, double b1) {
    // Single-stream head with zero weights: Q(s) = bias regardless of s.
    DuelingParams p;
    p.aggregator = Aggregator::single_stream;
    p.keep_probability = 1.0;
    p.value = DenseLayer{Matrix(0, 2), {}, Activation::identity};
    p.advantage = DenseLayer{Matrix(2, 2), {b0, b1}, Activation::identity};
    return p;
}

DuelingParams linear_net(const Matrix& w, Vector b) {
    DuelingParams p;
    p.aggregator = Aggregator::single_stream;
    p.keep_probability = 1.0;
    p.value = DenseLayer{Matrix(0, w.cols()), {}, Activation::identity};
    p.advantage = DenseLayer{w, std::move(b), Activation::identity};
    return p;
}

Dataset separable(std::size_t n, double minority_frac, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    Dataset d;
    d.class_names = {"0", "1"};
    d.feature_names = {"a", "b"};
    d.features = Matrix(n, 2);
    const auto n_min = static_cast<std::size_t>(std::llround(minority_frac * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = i < n_min ? 1 : 0;
        d.labels.push_back(y);
        d.features(i, 0) = (y ? 2.0 : -2.0) + noise(rng);
        d.features(i, 1) = noise(rng);
    }
    return d;
}

}  // namespace

TEST(Epsilon, Schedule) {
    const EpsilonSchedule s;
    EXPECT_EQ(epsilon_at(0, s), 1.0);
    EXPECT_NEAR(epsilon_at(120000, s), 0.01, 1e-15);
    EXPECT_NEAR(epsilon_at(60000, s), 0.505, 1e-15);
    EXPECT_NEAR(epsilon_at(500000, s), 0.01, 1e-15);
}

TEST(SelectAction, GreedyAndTies) {
    Rng rng(1);
    const double q[] = {0.1, 0.9};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(q, 0.0, rng), 1u);
    const double tie[] = {0.4, 0.4};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(tie, 0.0, rng), 0u);
    EXPECT_THROW(select_action(q, 1.5, rng), InvalidArgument);
}

TEST(SelectAction, FullExplorationIsUniform) {
    Rng rng(2);
    const double q[] = {5.0, 0.0, 0.0, 0.0};
    std::vector<int> counts(4, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[select_action(q, 1.0, rng)];
    const double p = 0.25, sd = std::sqrt(n * p * (1 - p));
    for (int c : counts) EXPECT_LE(std::abs(c - n * p), 3 * sd);
}

TEST(Replay, RingEvictsOldest) {
    ReplayMemory m(3);
    for (int i = 0; i < 4; ++i) m.store(Transition{{double(i)}, 0, 0.0, {}, false});
    EXPECT_EQ(m.size(), 3u);
    std::multiset<double> held;
    for (std::size_t i = 0; i < 3; ++i) held.insert(m[i].state[0]);
    EXPECT_EQ(held, (std::multiset<double>{1, 2, 3}));
}

TEST(Replay, FullSampleIsPermutation) {
    ReplayMemory m(10);
    for (int i = 0; i < 7; ++i) m.store(Transition{{double(i)}, 0, 0.0, {}, false});
    Rng rng(4);
    auto idx = m.sample_indices(7, rng);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(Replay, UnderfilledRejected) {
    ReplayMemory m(10);
    m.store(Transition{{0.0}, 0, 0.0, {}, false});
    Rng rng(1);
    EXPECT_THROW(m.sample_batch(2, rng), InvalidArgument);
}

TEST(Replay, SamplingIsUniform) {
    ReplayMemory m(10);
    for (int i = 0; i < 10; ++i) m.store(Transition{{double(i)}, 0, 0.0, {}, false});
    Rng rng(6);
    std::vector<int> counts(10, 0);
    const int draws = 100000;
    for (int i = 0; i < draws / 3; ++i)
        for (std::size_t k : m.sample_indices(3, rng)) ++counts[k];
    const int total = (draws / 3) * 3;
    const double p = 0.1, sd = std::sqrt(total * p * (1 - p));
    for (int c : counts) EXPECT_LE(std::abs(c - total * p), 3 * sd);
}

TEST(Replay, SampledBatchIsIsolatedFromLaterWrites) {
    ReplayMemory m(4);
    for (int i = 0; i < 4; ++i) m.store(Transition{{double(i)}, 0, double(i), {}, false});
    Rng rng(3);
    const auto batch = m.sample_batch(4, rng);
    for (std::size_t i = 0; i < 4; ++i) m[i].reward = 99.0;
    for (const auto& t : batch) EXPECT_NE(t.reward, 99.0);
}

TEST(DdqnTarget, TerminalIsRewardAndIgnoresNextState) {
    const auto online = fixed_net(1.0, 2.0), target = fixed_net(3.0, -4.0);
    Transition t{{0, 0}, 0, 0.7, {5, 5}, true};
    EXPECT_EQ(ddqn_target(t, online, target, 0.9), 0.7);
    t.next_state = {-100, 100};
    EXPECT_EQ(ddqn_target(t, online, target, 0.9), 0.7);
}

TEST(DdqnTarget, ZeroDiscountIsReward) {
    const auto online = fixed_net(1.0, 2.0), target = fixed_net(3.0, -4.0);
    const Transition t{{0, 0}, 1, -0.3, {1, 1}, false};
    EXPECT_EQ(ddqn_target(t, online, target, 0.0), -0.3);
}

TEST(DdqnTarget, UsesOnlineArgmaxUnderTargetValues) {
    // online Q(s') = [1, 2] -> argmax 1; target Q(s') = [3, -4] -> argmax 0
    const auto online = fixed_net(1.0, 2.0), target = fixed_net(3.0, -4.0);
    const Transition t{{0, 0}, 0, 0.5, {0.3, -0.2}, false};
    EXPECT_DOUBLE_EQ(ddqn_target(t, online, target, 0.5), 0.5 + 0.5 * -4.0);
    // Replacing the target by the online network gives the plain DQN target.
    EXPECT_DOUBLE_EQ(ddqn_target(t, online, online, 0.5), 0.5 + 0.5 * 2.0);
}

TEST(DdqnTarget, StateDependentHandTable) {
    // Q_online(s') = W_o s', Q_target(s') = W_t s' with s' = (1, 2)
    const auto online = linear_net(Matrix{{1, 0}, {0, 1}}, {0, 0});   // [1, 2] -> action 1
    const auto target = linear_net(Matrix{{2, 1}, {1, -1}}, {0, 0});  // [4, -1]
    const Transition t{{0, 0}, 0, 1.0, {1, 2}, false};
    EXPECT_DOUBLE_EQ(ddqn_target(t, online, target, 0.1), 1.0 + 0.1 * -1.0);
    const auto online2 = linear_net(Matrix{{0, 1}, {1, 0}}, {0, 0});  // [2, 1] -> action 0
    EXPECT_DOUBLE_EQ(ddqn_target(t, online2, target, 0.1), 1.0 + 0.1 * 4.0);
}

TEST(EarlyStop, Conjunction) {
    TrainingHistory h;
    HistoryPoint p;
    p.val_sensitivity = 0.86;
    p.val_specificity = 0.76;
    h.points.push_back(p);
    EXPECT_TRUE(early_stop_check(h, EarlyStopTargets{}));
    h.points.back().val_specificity = 0.74;
    EXPECT_FALSE(early_stop_check(h, EarlyStopTargets{}));
    h.points.back().val_specificity = 0.99;
    EXPECT_FALSE(early_stop_check(h, std::nullopt));
    h.points.back().val_sensitivity = 0.85;
    EXPECT_FALSE(early_stop_check(h, EarlyStopTargets{}));
}

TEST(Train, ZeroBudgetReturnsInitialParameters) {
    const Dataset d = separable(40, 0.2, 1);
    TrainingConfig c;
    c.total_steps = 0;
    c.hidden = {8};
    c.seed = 5;
    const auto r = train(c, d);
    EXPECT_TRUE(r.history.points.empty());
    EXPECT_EQ(r.updates, 0u);
    Rng rng(5);
    NetworkShape s;
    s.input = 2;
    s.hidden = {8};
    s.actions = 2;
    EXPECT_EQ(r.params, DuelingParams::create(s, rng));
}

TEST(Train, ConfigValidation) {
    const Dataset d = separable(40, 0.2, 1);
    TrainingConfig c;
    c.gamma = 1.0;
    EXPECT_THROW(train(c, d), UsageError);
    c = TrainingConfig{};
    c.batch_size = 100;
    c.memory_capacity = 50;
    EXPECT_THROW(train(c, d), UsageError);
    c = TrainingConfig{};
    c.early_stop = EarlyStopTargets{};
    EXPECT_THROW(train(c, d, nullptr), UsageError);
    Dataset empty_val = d.subset(std::vector<std::size_t>{});
    EXPECT_THROW(train(c, d, &empty_val), UsageError);
}

TEST(Train, OneClassRejected) {
    Dataset d = separable(20, 0.0, 1);
    TrainingConfig c;
    c.total_steps = 10;
    EXPECT_THROW(train(c, d), DataError);
}

TEST(Train, SeparableToySetReachesHighValidationGMean) {
    const Dataset tr = separable(200, 0.05, 11);
    const Dataset va = separable(200, 0.05, 12);
    TrainingConfig c;
    c.total_steps = 20000;
    c.hidden = {32};
    c.batch_size = 32;
    c.eval_every = 1000;
    c.seed = 3;
    const auto r = train(c, tr, &va);
    const auto s = summarize(score_dataset(r.params, va), va.labels);
    EXPECT_GT(s.g_mean, 0.9);
    ASSERT_FALSE(r.history.points.empty());
    for (std::size_t i = 1; i < r.history.points.size(); ++i)
        EXPECT_GT(r.history.points[i].step, r.history.points[i - 1].step);
}

TEST(Train, EarlyStopRetainsStoppingPoint) {
    const Dataset tr = separable(200, 0.1, 21);
    const Dataset va = separable(200, 0.1, 22);
    TrainingConfig c;
    c.total_steps = 20000;
    c.hidden = {16};
    c.batch_size = 16;
    c.eval_every = 200;
    c.early_stop = EarlyStopTargets{};
    c.seed = 1;
    const auto r = train(c, tr, &va);
    ASSERT_TRUE(r.stopped_early);
    EXPECT_LT(r.updates, 20000u);
    const auto& last = r.history.points.back();
    EXPECT_GT(last.val_sensitivity, 0.85);
    EXPECT_GT(last.val_specificity, 0.75);
    EXPECT_EQ(r.selected_step, last.step);
    const auto s = summarize(score_dataset(r.params, va), va.labels);
    EXPECT_EQ(s.sensitivity, last.val_sensitivity);
}

TEST(Train, IdenticalConfigIdenticalHistory) {
    const Dataset tr = separable(120, 0.1, 31);
    const Dataset va = separable(60, 0.1, 32);
    TrainingConfig c;
    c.total_steps = 1500;
    c.hidden = {12};
    c.batch_size = 16;
    c.eval_every = 250;
    c.seed = 9;
    const auto a = train(c, tr, &va), b = train(c, tr, &va);
    std::ostringstream ha, hb;
    write_history_tsv(ha, a.history);
    write_history_tsv(hb, b.history);
    EXPECT_EQ(ha.str(), hb.str());
    EXPECT_EQ(a.params, b.params);
}

TEST(Train, GreedyZeroDiscountFitsTwoPoints) {
    Dataset d;
    d.class_names = {"0", "1"};
    d.features = Matrix{{-1.0, 0.5}, {1.0, -0.5}};
    d.labels = {0, 1};
    TrainingConfig c;
    c.total_steps = 600;
    c.gamma = 0.0;
    c.epsilon_start = 0.0;
    c.epsilon_end = 0.0;
    c.batch_size = 1;
    c.hidden = {6};
    c.dropout = 0.0;
    c.learning_rate = 0.01;
    c.seed = 2;
    const auto r = train(c, d);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(argmax(q_eval(r.params, d.row(i)).q), d.labels[i]);
}

TEST(History, TsvColumns) {
    TrainingHistory h;
    HistoryPoint p;
    p.step = 1000;
    p.episode = 3;
    p.mean_reward = 0.25;
    p.val_sensitivity = 0.5;
    p.val_specificity = 1;
    p.val_auroc = 0.75;
    h.points.push_back(p);
    std::ostringstream os;
    write_history_tsv(os, h);
    EXPECT_EQ(os.str(), "step\tepisode\tmean_reward\tval_sensitivity\tval_specificity\tval_auroc\n1000\t3\t0.25\t0.5\t1\t0.75\n");
}
