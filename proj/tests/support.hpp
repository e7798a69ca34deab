#pragma once

// Shared oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>

#include "qimb/duelnet.hpp"
#include "qimb/metrics.hpp"

namespace qimb::testing {

/// (y - Q(s, action))^2 as a function of the flattened network parameters.
/// With `mask_seed` set, trunk dropout masks come from a fresh generator with
/// that seed, so every evaluation sees the same masks.
inline double q_loss(DuelingParams p, std::span<const double> flat, std::span<const double> state,
                     std::size_t action, double y, std::optional<std::uint64_t> mask_seed) {
    unflatten(flat, p.views());
    Rng rng(mask_seed.value_or(0));
    const auto out = q_forward(p, state, mask_seed ? Mode::train : Mode::eval, &rng).first;
    const double r = y - out.q[action];
    return r * r;
}

/// Analytic gradient of q_loss through q_backward.
inline Vector q_loss_grad(const DuelingParams& p, std::span<const double> state, std::size_t action, double y,
                          std::optional<std::uint64_t> mask_seed) {
    Rng rng(mask_seed.value_or(0));
    auto [out, caches] = q_forward(p, state, mask_seed ? Mode::train : Mode::eval, &rng);
    const double r = y - out.q[action];
    return flatten(q_backward(p, caches, action, -2.0 * r).views());
}

inline double max_relative_error(const Vector& analytic, const Vector& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i])));
    return worst;
}

/// O(n^2) Mann-Whitney oracle: P(s+ > s-) + 0.5 P(s+ = s-).
inline double pairwise_auroc(std::span<const double> scores, std::span<const std::size_t> labels) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] == 1) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// Exhaustive two-sided signed-rank p-value over all 2^n sign assignments,
/// with midranks computed independently (O(n^2) counting).
inline double enumerated_wilcoxon_p(std::span<const double> a, std::span<const double> b) {
    Vector d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    const std::size_t n = d.size();
    Vector rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double less = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(d[j]) < std::abs(d[i])) less += 1.0;
            else if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
        }
        rank[i] = less + (equal + 1.0) / 2.0;
    }
    double total = 0.0, observed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += rank[i];
        if (d[i] > 0) observed += rank[i];
    }
    const double center = total / 2.0;
    const double dev = std::abs(observed - center);
    std::uint64_t extreme = 0;
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (m >> i & 1) w += rank[i];
        if (std::abs(w - center) >= dev - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(std::uint64_t{1} << n);
}

}  // namespace qimb::testing
