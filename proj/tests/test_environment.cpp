#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "qimb/environment.hpp"

using namespace qimb;

namespace {

double norm(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Dataset toy(std::vector<std::size_t> labels, std::size_t classes = 2) {
    Dataset d;
    d.features = Matrix(labels.size(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) d.features(i, 0) = static_cast<double>(i);
    d.labels = std::move(labels);
    for (std::size_t k = 0; k < classes; ++k) d.class_names.push_back(std::to_string(k));
    return d;
}

}  // namespace

TEST(Lambda, BalancedBinary) {
    const std::size_t c[] = {40, 40};
    const auto w = compute_lambda(c);
    EXPECT_NEAR(w.lambda[0], 0.70711, 1e-5);
    EXPECT_NEAR(w.lambda[1], 0.70711, 1e-5);
}

TEST(Lambda, TwentyToOne) {
    const std::size_t c[] = {20, 1};
    const auto w = compute_lambda(c);
    const double oracle = std::sqrt(1.0 / 400.0 + 1.0);
    EXPECT_NEAR(w.lambda[0], (1.0 / 20.0) / oracle, 1e-15);
    EXPECT_NEAR(w.lambda[1], 1.0 / oracle, 1e-15);
    EXPECT_NEAR(w.lambda[0], 0.04994, 1e-5);
    EXPECT_NEAR(w.lambda[1], 0.99875, 1e-5);
    EXPECT_EQ(w.majority, 0u);
    EXPECT_TRUE(w.is_minority(1));
}

TEST(Lambda, EicuPrevalencesGiveLargestWeightToRarestClass) {
    const double prev[] = {0.288, 0.336, 0.087, 0.174, 0.113};
    std::vector<std::size_t> c;
    for (double p : prev) c.push_back(static_cast<std::size_t>(std::llround(p * 24102)));
    const auto w = compute_lambda(c);
    EXPECT_EQ(std::max_element(w.lambda.begin(), w.lambda.end()) - w.lambda.begin(), 2);
    EXPECT_EQ(w.majority, 1u);
}

TEST(Lambda, ZeroCountRejected) {
    const std::size_t c[] = {10, 0};
    EXPECT_THROW(compute_lambda(c), DataError);
}

TEST(Lambda, UnitNormAndMonotoneOnRandomCounts) {
    Rng rng(5);
    std::uniform_int_distribution<std::size_t> count(1, 100000), k(2, 8);
    for (int t = 0; t < 500; ++t) {
        std::vector<std::size_t> c(k(rng));
        for (auto& x : c) x = count(rng);
        const auto w = compute_lambda(c);
        EXPECT_NEAR(norm(w.lambda), 1.0, 1e-12);
        for (std::size_t a = 0; a < c.size(); ++a)
            for (std::size_t b = 0; b < c.size(); ++b)
                if (c[a] < c[b]) EXPECT_GT(w.lambda[a], w.lambda[b]);
    }
}

TEST(Lambda, MajorityTieGoesToLowestIndex) {
    const std::size_t c[] = {5, 9, 9};
    EXPECT_EQ(compute_lambda(c).majority, 1u);
}

TEST(Reward, Examples) {
    const std::size_t c[] = {20, 1};
    const auto w = compute_lambda(c);
    const Reward ok = reward(1, 1, w);
    EXPECT_NEAR(ok.r, 0.99875, 1e-5);
    EXPECT_FALSE(ok.term);
    const Reward miss_min = reward(0, 1, w);
    EXPECT_NEAR(miss_min.r, -0.99875, 1e-5);
    EXPECT_TRUE(miss_min.term);
    const Reward miss_maj = reward(1, 0, w);
    EXPECT_NEAR(miss_maj.r, -0.04994, 1e-5);
    EXPECT_FALSE(miss_maj.term);
}

TEST(Reward, Antisymmetric) {
    const std::size_t c[] = {50, 7, 13};
    const auto w = compute_lambda(c);
    for (std::size_t label = 0; label < 3; ++label)
        for (std::size_t wrong = 0; wrong < 3; ++wrong)
            if (wrong != label) EXPECT_EQ(reward(label, label, w).r, -reward(wrong, label, w).r);
}

TEST(Env, ResetIsSeededBijection) {
    const Dataset d = toy(std::vector<std::size_t>(20, 0));
    const std::size_t c[] = {20, 1};
    ClassificationEnv e1(d, compute_lambda(c)), e2(d, compute_lambda(c));
    Rng r1(42), r2(42);
    e1.reset(r1);
    e2.reset(r2);
    EXPECT_EQ(e1.state().order, e2.state().order);
    auto sorted = e1.state().order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(20);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    EXPECT_EQ(sorted, iota);
    EXPECT_EQ(e1.state().cursor, 0u);
    EXPECT_FALSE(e1.state().terminated);
}

TEST(Env, DistinctSeedsGiveDistinctPermutations) {
    const Dataset d = toy(std::vector<std::size_t>(16, 0));
    const std::size_t c[] = {20, 1};
    ClassificationEnv e(d, compute_lambda(c));
    std::set<std::vector<std::size_t>> seen;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(s);
        e.reset(rng);
        seen.insert(e.state().order);
    }
    EXPECT_EQ(seen.size(), 100u);
}

TEST(Env, EmptyDatasetRejected) {
    const Dataset d = toy({});
    const std::size_t c[] = {1, 1};
    ClassificationEnv e(d, compute_lambda(c));
    Rng rng(1);
    EXPECT_THROW(e.reset(rng), DataError);
}

TEST(Env, MinorityMissEndsEpisodeMajorityMissDoesNot) {
    const Dataset d = toy({0, 0, 1, 0, 0});
    const auto counts = d.class_counts();
    ClassificationEnv e(d, compute_lambda(counts));
    Rng rng(3);
    e.reset(rng);
    std::size_t steps = 0;
    for (;;) {
        const std::size_t label = e.current_label();
        const StepResult r = e.step(label == 1 ? 0 : 1);  // every answer wrong
        ++steps;
        if (label == 0) {
            EXPECT_FALSE(r.term && r.end == EpisodeEnd::misclassified_minority);
        } else {
            EXPECT_TRUE(r.term);
            EXPECT_EQ(r.end, EpisodeEnd::misclassified_minority);
        }
        if (r.term) break;
    }
    EXPECT_TRUE(e.state().terminated);
    EXPECT_THROW(e.step(0), InvalidArgument);
}

TEST(Env, LastCorrectSampleEndsByExhaustion) {
    const Dataset d = toy({0, 1, 0});
    ClassificationEnv e(d, compute_lambda(d.class_counts()));
    Rng rng(8);
    e.reset(rng);
    StepResult r;
    for (int i = 0; i < 3; ++i) r = e.step(e.current_label());
    EXPECT_TRUE(r.term);
    EXPECT_EQ(r.end, EpisodeEnd::exhausted);
    EXPECT_GT(r.reward, 0.0);
    EXPECT_TRUE(r.next_state.empty());
}

TEST(Env, StepCapBoundsEpisodeLength) {
    const Dataset d = toy(std::vector<std::size_t>{0, 0, 0, 0, 0, 0, 0, 1});
    ClassificationEnv e(d, compute_lambda(d.class_counts()), 3);
    Rng rng(2);
    e.reset(rng);
    std::size_t steps = 0;
    StepResult r;
    do {
        r = e.step(e.current_label());
        ++steps;
    } while (!r.term);
    EXPECT_EQ(steps, 3u);
    EXPECT_EQ(r.end, EpisodeEnd::exhausted);
}

TEST(Env, OracleAgentCollectsSumOfLambdas) {
    const Dataset d = toy({0, 0, 0, 1, 0, 0, 1, 0, 0, 0}, 2);
    const auto w = compute_lambda(d.class_counts());
    ClassificationEnv e(d, w);
    Rng rng(17);
    e.reset(rng);
    double total = 0.0, expected = 0.0;
    StepResult r;
    do {
        expected += w.lambda[e.current_label()];
        r = e.step(e.current_label());
        total += r.reward;
    } while (!r.term);
    EXPECT_NEAR(total, expected, 1e-15);
    EXPECT_EQ(e.state().steps_taken, 10u);
}
