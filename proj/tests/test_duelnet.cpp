#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qimb/duelnet.hpp"
#include "support.hpp"

using namespace qimb;

namespace {

DuelingParams random_net(std::uint64_t seed, std::size_t input, std::size_t hidden, std::size_t K, Aggregator agg) {
    Rng rng(seed);
    NetworkShape s;
    s.input = input;
    s.hidden = {hidden};
    s.actions = K;
    s.aggregator = agg;
    return DuelingParams::create(s, rng);
}

Vector random_state(std::size_t n, Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    Vector x(n);
    for (double& v : x) v = d(rng);
    return x;
}

}  // namespace

TEST(Aggregate, ConstantAdvantageTiesAllActions) {
    const double a[] = {0.4, 0.4, 0.4};
    const Vector q = advantage_aggregate(1.5, a, Aggregator::softmax_subtract);
    for (double x : q) EXPECT_NEAR(x, 1.5 + 0.4 - 1.0 / 3.0, 1e-15);
}

TEST(Aggregate, BinaryZeroAdvantage) {
    const double a[] = {0, 0};
    EXPECT_EQ(advantage_aggregate(0.0, a, Aggregator::softmax_subtract), (Vector{-0.5, -0.5}));
}

TEST(Aggregate, MeanSubtract) {
    const double a[] = {1, 3};
    EXPECT_EQ(advantage_aggregate(2.0, a, Aggregator::mean_subtract), (Vector{1, 3}));
    EXPECT_EQ(advantage_aggregate(0.0, a, Aggregator::mean_subtract), (Vector{-1, 1}));
}

TEST(Aggregate, SingleActionRejected) {
    const double a[] = {1};
    EXPECT_THROW(advantage_aggregate(0.0, a, Aggregator::softmax_subtract), InvalidArgument);
}

TEST(Aggregate, ValueShiftsEveryActionEqually) {
    const double a[] = {0.3, -1.2, 2.5, 0.0};
    for (Aggregator m : {Aggregator::softmax_subtract, Aggregator::mean_subtract}) {
        const Vector q0 = advantage_aggregate(0.0, a, m);
        const Vector q1 = advantage_aggregate(0.75, a, m);
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(q1[k] - q0[k], 0.75, 1e-15);
    }
}

TEST(QForward, ArgmaxOfQEqualsArgmaxOfAdvantage) {
    Rng srng(9);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Aggregator agg = seed % 2 ? Aggregator::mean_subtract : Aggregator::softmax_subtract;
        const auto p = random_net(seed, 4, 8, 2 + seed % 4, agg);
        const QOutput o = q_eval(p, random_state(4, srng));
        EXPECT_EQ(argmax(o.q), argmax(o.a)) << "seed " << seed;
    }
}

TEST(QForward, DimensionMismatchRejected) {
    const auto p = random_net(1, 3, 5, 2, Aggregator::softmax_subtract);
    const double s[] = {1, 2};
    EXPECT_THROW(q_eval(p, s), InvalidArgument);
}

TEST(QForward, TrainModeNeedsGenerator) {
    const auto p = random_net(1, 2, 5, 2, Aggregator::softmax_subtract);
    const double s[] = {1, 2};
    EXPECT_THROW(q_forward(p, s, Mode::train, nullptr), InvalidArgument);
}

TEST(QForward, TopologyMatchesOneHiddenLayerTwoStreams) {
    const auto p = random_net(5, 6, 100, 2, Aggregator::softmax_subtract);
    ASSERT_EQ(p.trunk.size(), 1u);
    EXPECT_EQ(p.trunk[0].activation, Activation::relu);
    EXPECT_EQ(p.value.out(), 1u);
    EXPECT_EQ(p.advantage.out(), 2u);
    EXPECT_EQ(p.value.in(), 100u);
    EXPECT_EQ(p.advantage.in(), 100u);
    EXPECT_DOUBLE_EQ(p.keep_probability, 0.7);
}

TEST(QBackward, ZeroTdErrorGivesZeroGradients) {
    const auto p = random_net(2, 3, 6, 3, Aggregator::softmax_subtract);
    const double s[] = {0.5, -0.1, 1.0};
    auto [out, caches] = q_forward(p, s, Mode::eval);
    for (double g : flatten(q_backward(p, caches, 1, 0.0).views())) EXPECT_EQ(g, 0.0);
}

TEST(QBackward, ValueBiasGradientIsUpstream) {
    const auto p = random_net(3, 3, 6, 3, Aggregator::softmax_subtract);
    const double s[] = {0.5, -0.1, 1.0};
    auto [out, caches] = q_forward(p, s, Mode::eval);
    const double y = 2.0;
    const double up = -2.0 * (y - out.q[2]);
    const auto g = q_backward(p, caches, 2, up);
    EXPECT_DOUBLE_EQ(g.value.bias[0], up);
}

TEST(QBackward, ActionOutOfRangeRejected) {
    const auto p = random_net(3, 3, 6, 3, Aggregator::softmax_subtract);
    const double s[] = {0.5, -0.1, 1.0};
    auto [out, caches] = q_forward(p, s, Mode::eval);
    EXPECT_THROW(q_backward(p, caches, 3, 1.0), InvalidArgument);
    EXPECT_THROW(q_backward(p, QCaches{}, 0, 1.0), InvalidArgument);
}

TEST(QBackward, MatchesFiniteDifferencesForEveryAggregator) {
    for (Aggregator agg : {Aggregator::softmax_subtract, Aggregator::mean_subtract, Aggregator::single_stream}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const std::size_t K = 2 + seed % 4;
            const auto p = random_net(seed, 5, 7, K, agg);
            Rng rng(seed + 100);
            const Vector s = random_state(5, rng);
            const std::size_t action = seed % K;
            const std::optional<std::uint64_t> masks =
                seed % 2 ? std::optional<std::uint64_t>(seed + 7) : std::nullopt;
            const Vector analytic = qimb::testing::q_loss_grad(p, s, action, 0.8, masks);
            const Vector numeric = finite_diff_grad(
                [&](std::span<const double> f) { return qimb::testing::q_loss(p, f, s, action, 0.8, masks); },
                flatten(p.views()), 1e-5);
            EXPECT_LE(qimb::testing::max_relative_error(analytic, numeric), 1e-4)
                << to_string(agg) << " seed " << seed;
        }
    }
}

TEST(SyncTarget, CopyIsIsolatedAndIdempotent) {
    auto online = random_net(4, 3, 5, 2, Aggregator::softmax_subtract);
    const double s[] = {0.2, 0.4, -0.6};
    DuelingParams target = sync_target(online);
    EXPECT_EQ(q_eval(online, s).q, q_eval(target, s).q);
    EXPECT_EQ(sync_target(target), target);

    const QOutput before = q_eval(target, s);
    auto [out, caches] = q_forward(online, s, Mode::eval);
    const auto g = q_backward(online, caches, 0, 1.0);
    AdamState adam(total_size(online.views()), 0.01);
    adam_step(online.views(), g.views(), adam);
    EXPECT_NE(q_eval(online, s).q, before.q);
    EXPECT_EQ(q_eval(target, s).q, before.q);
}

TEST(PredictScores, Examples) {
    DuelingParams p;
    p.aggregator = Aggregator::single_stream;
    p.value = DenseLayer{Matrix(0, 1), {}, Activation::identity};
    p.advantage = DenseLayer{Matrix{{0.0}, {0.0}}, {0.0, std::log(3.0)}, Activation::identity};
    const double s[] = {1.0};
    const Vector sc = predict_scores(p, s);
    EXPECT_NEAR(sc[0], 0.25, 1e-15);
    EXPECT_NEAR(sc[1], 0.75, 1e-15);

    p.advantage.bias = {0.3, 0.3};
    EXPECT_EQ(predict_scores(p, s), (Vector{0.5, 0.5}));

    const auto net = random_net(8, 3, 6, 4, Aggregator::softmax_subtract);
    const double s2[] = {0.1, 0.9, -0.4};
    EXPECT_EQ(argmax(predict_scores(net, s2)), argmax(q_eval(net, s2).q));
    EXPECT_EQ(predict_scores(net, s2), predict_scores(net, s2));
}

TEST(Argmax, LowestIndexWinsTies) {
    const double q[] = {0.5, 0.9, 0.9};
    EXPECT_EQ(argmax(q), 1u);
}

TEST(Aggregator, ParseAndPrint) {
    for (Aggregator a : {Aggregator::softmax_subtract, Aggregator::mean_subtract, Aggregator::single_stream})
        EXPECT_EQ(parse_aggregator(to_string(a)), a);
    EXPECT_THROW(parse_aggregator("max"), InvalidArgument);
}
