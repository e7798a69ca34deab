#pragma once

// Imbalance-aware evaluation: confusion counts, sensitivity/specificity,
// F-measure and G-mean (both geometric means), AUROC by midrank summation,
// one-vs-all multiclass aggregation, sensitivity-targeted thresholds, the
// Wilcoxon signed-rank test and percentile bootstrap intervals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qimb/numkernel.hpp"

namespace qimb {

/// A metric value, or nullopt when its denominator is empty.
using Score = std::optional<double>;

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

inline ConfusionCounts confusion(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                                 std::size_t positive) {
    if (predicted.size() != truth.size())
        throw InvalidArgument("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                              std::to_string(truth.size()) + " labels");
    if (truth.empty()) throw InvalidArgument("confusion: empty evaluation set");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] == positive;
        const bool t = truth[i] == positive;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace detail {
inline Score ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}
inline Score geometric(Score a, Score b) {
    if (!a || !b) return std::nullopt;
    return std::sqrt(*a * *b);
}
}  // namespace detail

inline Score sensitivity(const ConfusionCounts& c) { return detail::ratio(c.tp, c.tp + c.fn); }
inline Score specificity(const ConfusionCounts& c) { return detail::ratio(c.tn, c.tn + c.fp); }
inline Score precision(const ConfusionCounts& c) { return detail::ratio(c.tp, c.tp + c.fp); }

/// sqrt(sensitivity * precision)
inline Score f_measure(const ConfusionCounts& c) { return detail::geometric(sensitivity(c), precision(c)); }
/// sqrt(sensitivity * specificity)
inline Score g_mean(const ConfusionCounts& c) { return detail::geometric(sensitivity(c), specificity(c)); }
inline double g_mean(double sens, double spec) { return std::sqrt(sens * spec); }

/// Positive class is label == positive. Equals P(s+ > s-) + P(s+ == s-)/2,
/// computed from midranks in O(n log n).
inline double auroc(std::span<const double> scores, std::span<const std::size_t> labels, std::size_t positive = 1) {
    if (scores.size() != labels.size()) throw InvalidArgument("auroc: scores/labels length mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;  // over positives, 1-based midranks
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == positive) {
                rank_sum += midrank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw InvalidArgument("auroc: both classes must be present");
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// One-vs-all

struct ClassScores {
    std::size_t cls = 0;
    std::size_t support = 0;
    ConfusionCounts counts;
    Score sensitivity;
    Score specificity;
    Score precision;
    Score f_measure;
    Score g_mean;
    Score auroc;
};

struct OneVsAll {
    std::vector<ClassScores> per_class;
    std::vector<std::size_t> excluded;  // classes absent from the truth labels
    double mean_sensitivity = 0.0;
    double sd_sensitivity = 0.0;
    double mean_g = 0.0;
    double sd_g = 0.0;
    double mean_specificity = 0.0;
    double mean_auroc = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {
inline std::pair<double, double> mean_and_population_sd(const std::vector<double>& xs) {
    if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}
}  // namespace detail

/// `scores`, when given, is N x K class scores used for per-class AUROC.
inline OneVsAll one_vs_all(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                           std::size_t K, const Matrix* scores = nullptr) {
    if (predicted.size() != truth.size()) throw InvalidArgument("one_vs_all: length mismatch");
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i] >= K || predicted[i] >= K) throw InvalidArgument("one_vs_all: label outside [0, K)");
    if (scores && (scores->rows() != truth.size() || scores->cols() != K))
        throw InvalidArgument("one_vs_all: score matrix shape mismatch");
    OneVsAll out;
    std::vector<double> sens, gs, specs, aucs;
    for (std::size_t k = 0; k < K; ++k) {
        ClassScores cs;
        cs.cls = k;
        cs.counts = confusion(predicted, truth, k);
        cs.support = cs.counts.tp + cs.counts.fn;
        if (cs.support == 0) {
            out.excluded.push_back(k);
            continue;
        }
        cs.sensitivity = sensitivity(cs.counts);
        cs.specificity = specificity(cs.counts);
        cs.precision = precision(cs.counts);
        cs.f_measure = f_measure(cs.counts);
        cs.g_mean = g_mean(cs.counts);
        if (scores && cs.support < truth.size()) {
            Vector col(truth.size());
            for (std::size_t i = 0; i < truth.size(); ++i) col[i] = (*scores)(i, k);
            cs.auroc = auroc(col, truth, k);
            aucs.push_back(*cs.auroc);
        }
        sens.push_back(*cs.sensitivity);
        if (cs.g_mean) gs.push_back(*cs.g_mean);
        if (cs.specificity) specs.push_back(*cs.specificity);
        out.per_class.push_back(cs);
    }
    std::tie(out.mean_sensitivity, out.sd_sensitivity) = detail::mean_and_population_sd(sens);
    std::tie(out.mean_g, out.sd_g) = detail::mean_and_population_sd(gs);
    out.mean_specificity = detail::mean_and_population_sd(specs).first;
    if (!aucs.empty()) out.mean_auroc = detail::mean_and_population_sd(aucs).first;
    return out;
}

// ---------------------------------------------------------------------------
// Threshold adjustment

/// Largest threshold t such that predicting positive when score >= t reaches
/// at least `target` sensitivity. Returns +infinity ("predict none") for a
/// target of 0.
inline double threshold_tune(std::span<const double> scores, std::span<const std::size_t> labels, double target,
                             std::size_t positive = 1) {
    if (scores.size() != labels.size()) throw InvalidArgument("threshold_tune: length mismatch");
    if (!(target >= 0.0 && target <= 1.0))
        throw InvalidArgument("threshold_tune: target sensitivity must lie in [0, 1]");
    Vector pos;
    std::size_t neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == positive) pos.push_back(scores[i]);
        else ++neg;
    }
    if (pos.empty() || neg == 0) throw InvalidArgument("threshold_tune: both classes must be present");
    std::sort(pos.begin(), pos.end(), std::greater<>());
    const double P = static_cast<double>(pos.size());
    for (std::size_t m = 0; m <= pos.size(); ++m) {
        if (static_cast<double>(m) / P >= target)
            return m == 0 ? std::numeric_limits<double>::infinity() : pos[m - 1];
    }
    return pos.back();
}

inline std::vector<std::size_t> apply_threshold(std::span<const double> scores, double threshold) {
    std::vector<std::size_t> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

struct WilcoxonResult {
    double statistic = 0.0;  // sum of ranks of positive differences
    double p_value = 1.0;    // two-sided
    std::size_t n = 0;       // nonzero differences
    bool exact = false;
};

namespace detail {
/// Doubled midranks (integers) of |d| for nonzero d, in input order.
inline std::vector<std::uint64_t> doubled_abs_ranks(const Vector& d) {
    const std::size_t n = d.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
    std::vector<std::uint64_t> r2(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
        for (std::size_t k = i; k < j; ++k) r2[order[k]] = (i + 1) + j;  // 2 * midrank
        i = j;
    }
    return r2;
}
}  // namespace detail

/// Two-sided test on paired differences a - b. Zero differences are dropped,
/// ties in |d| share midranks. Exact null distribution (over all sign
/// assignments of the observed ranks) for n <= 25; otherwise the normal
/// approximation with tie and continuity corrections.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidArgument("wilcoxon: paired samples differ in length");
    Vector d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
    if (d.empty()) throw InvalidArgument("wilcoxon: all paired differences are zero");
    if (d.size() < 6)
        throw InvalidArgument("wilcoxon: need at least 6 nonzero differences, got " + std::to_string(d.size()));
    const std::size_t n = d.size();
    const auto r2 = detail::doubled_abs_ranks(d);
    std::uint64_t w2 = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (d[i] > 0) w2 += r2[i];
    const std::uint64_t total2 = static_cast<std::uint64_t>(n) * (n + 1);  // sum of doubled ranks
    WilcoxonResult res;
    res.n = n;
    res.statistic = static_cast<double>(w2) / 2.0;

    if (n <= 25) {
        // counts[s] = number of sign assignments whose doubled positive-rank sum is s
        std::vector<double> counts(total2 + 1, 0.0);
        counts[0] = 1.0;
        std::uint64_t reach = 0;
        for (std::uint64_t r : r2) {
            for (std::uint64_t s = reach + 1; s-- > 0;)
                if (counts[s] != 0.0) counts[s + r] += counts[s];
            reach += r;
        }
        const auto center2 = static_cast<std::int64_t>(total2);  // 2 * (2 * mean)
        const std::int64_t obs_dev = std::llabs(2 * static_cast<std::int64_t>(w2) - center2);
        double extreme = 0.0;
        for (std::uint64_t s = 0; s <= total2; ++s)
            if (std::llabs(2 * static_cast<std::int64_t>(s) - center2) >= obs_dev) extreme += counts[s];
        res.p_value = std::min(1.0, extreme / std::ldexp(1.0, static_cast<int>(n)));
        res.exact = true;
        return res;
    }

    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    auto sorted = r2;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        var -= (t * t * t - t) / 48.0;
        i = j;
    }
    const double num = std::max(0.0, std::abs(res.statistic - mean) - 0.5);
    const double z = var > 0.0 ? num / std::sqrt(var) : 0.0;
    res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return res;
}

// ---------------------------------------------------------------------------
// Bootstrap

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(const Vector& sorted, double q) {
    if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap (2.5 / 97.5) over `n` evaluation rows. `metric`
/// maps a resampled index set to a Score; undefined resamples are redrawn up
/// to 100 times each.
template <class MetricFn>
Interval bootstrap_ci_indexed(MetricFn&& metric, std::size_t n, std::size_t draws, std::uint64_t seed) {
    if (draws < 100) throw InvalidArgument("bootstrap_ci: at least 100 draws required");
    if (n == 0) throw InvalidArgument("bootstrap_ci: empty evaluation set");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    Vector values;
    values.reserve(draws);
    for (std::size_t d = 0; d < draws; ++d) {
        Score s;
        for (int attempt = 0; attempt < 100 && !s; ++attempt) {
            for (auto& i : idx) i = pick(rng);
            s = metric(std::span<const std::size_t>(idx));
        }
        if (!s) throw NumericalError("bootstrap_ci: resamples keep producing an undefined metric");
        values.push_back(*s);
    }
    std::sort(values.begin(), values.end());
    return {quantile_sorted(values, 0.025), quantile_sorted(values, 0.975)};
}

/// Convenience form over (predictions, labels): `metric(pred, truth) -> Score`.
template <class MetricFn>
Interval bootstrap_ci(MetricFn&& metric, std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                      std::size_t draws, std::uint64_t seed) {
    if (predicted.size() != truth.size()) throw InvalidArgument("bootstrap_ci: length mismatch");
    std::vector<std::size_t> p(predicted.size()), t(truth.size());
    return bootstrap_ci_indexed(
        [&](std::span<const std::size_t> idx) -> Score {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                p[i] = predicted[idx[i]];
                t[i] = truth[idx[i]];
            }
            return metric(std::span<const std::size_t>(p), std::span<const std::size_t>(t));
        },
        truth.size(), draws, seed);
}

}  // namespace qimb
