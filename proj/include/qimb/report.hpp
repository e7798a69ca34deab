#pragma once

// MetricsReport and its two serializations.
//
// Machine-readable form (tab-separated, the contract for tooling):
//
//   # qimb-metrics v1
//   # <key>=<value>                 provenance lines (version, config, seed,
//   #                               test_hash, task, threshold, n)
//   scope  metric  value  ci_low  ci_high
//   ...
//
// `scope` is "positive" for binary tasks; "class:<name>", "mean" or "sd" for
// multiclass tasks. Undefined scores and absent intervals are written "nan".
// Binary metrics: f_measure, g_mean, auroc, sensitivity, specificity.
// Multiclass per-class metrics: sensitivity, specificity, g_mean, auroc;
// mean/sd rows carry sensitivity and g_mean.

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qimb/duelnet.hpp"
#include "qimb/metrics.hpp"
#include "qimb/text.hpp"

namespace qimb {

inline constexpr const char* kMetricsFormat = "qimb-metrics v1";

struct MetricRow {
    std::string scope;
    std::string metric;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::optional<Interval> ci;
};

struct MetricsReport {
    std::map<std::string, std::string> header;  // written as "# key=value", sorted
    std::vector<MetricRow> rows;

    std::optional<double> find(const std::string& scope, const std::string& metric) const {
        for (const auto& r : rows)
            if (r.scope == scope && r.metric == metric) return r.value;
        return std::nullopt;
    }
};

namespace detail {
inline double value_or_nan(const Score& s) { return s.value_or(std::numeric_limits<double>::quiet_NaN()); }
}  // namespace detail

/// Binary report with percentile bootstrap intervals. Positive class is 1;
/// predictions are score >= threshold when a threshold is given, argmax otherwise.
inline MetricsReport binary_report(const Matrix& scores, std::span<const std::size_t> truth,
                                   std::optional<double> threshold, std::size_t draws, std::uint64_t seed) {
    if (scores.cols() != 2) throw InvalidArgument("binary_report needs two score columns");
    Vector pos(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) pos[i] = scores(i, 1);
    std::vector<std::size_t> pred(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i)
        pred[i] = threshold ? (pos[i] >= *threshold ? 1 : 0) : (scores(i, 1) > scores(i, 0) ? 1 : 0);

    using Fn = Score (*)(const ConfusionCounts&);
    const std::pair<const char*, Fn> count_metrics[] = {
        {"f_measure", &f_measure}, {"g_mean", &g_mean}, {"sensitivity", &sensitivity}, {"specificity", &specificity}};

    MetricsReport rep;
    rep.header["task"] = "binary";
    rep.header["n"] = std::to_string(truth.size());
    rep.header["threshold"] = threshold ? format_double(*threshold) : "argmax";

    std::vector<std::size_t> p_buf(truth.size()), t_buf(truth.size());
    Vector s_buf(truth.size());
    auto gather = [&](std::span<const std::size_t> idx) {
        for (std::size_t i = 0; i < idx.size(); ++i) {
            p_buf[i] = pred[idx[i]];
            t_buf[i] = truth[idx[i]];
            s_buf[i] = pos[idx[i]];
        }
    };
    const ConfusionCounts c = confusion(pred, truth, 1);
    std::uint64_t stream = seed;
    auto add_count_metric = [&](const char* name, Fn fn) {
        MetricRow row{"positive", name, detail::value_or_nan(fn(c)), std::nullopt};
        if (draws > 0 && fn(c))
            row.ci = bootstrap_ci_indexed(
                [&](std::span<const std::size_t> idx) -> Score {
                    gather(idx);
                    return fn(confusion(p_buf, t_buf, 1));
                },
                truth.size(), draws, stream);
        ++stream;
        rep.rows.push_back(row);
    };
    add_count_metric(count_metrics[0].first, count_metrics[0].second);
    add_count_metric(count_metrics[1].first, count_metrics[1].second);

    MetricRow auc_row{"positive", "auroc", std::numeric_limits<double>::quiet_NaN(), std::nullopt};
    const bool both = c.tp + c.fn > 0 && c.tn + c.fp > 0;
    if (both) {
        auc_row.value = auroc(pos, truth, 1);
        if (draws > 0)
            auc_row.ci = bootstrap_ci_indexed(
                [&](std::span<const std::size_t> idx) -> Score {
                    gather(idx);
                    std::size_t npos = 0;
                    for (std::size_t t : t_buf) npos += t == 1;
                    if (npos == 0 || npos == t_buf.size()) return std::nullopt;
                    return auroc(s_buf, t_buf, 1);
                },
                truth.size(), draws, stream);
    }
    ++stream;
    rep.rows.push_back(auc_row);
    add_count_metric(count_metrics[2].first, count_metrics[2].second);
    add_count_metric(count_metrics[3].first, count_metrics[3].second);
    return rep;
}

inline MetricsReport multiclass_report(const Matrix& scores, std::span<const std::size_t> truth,
                                       const std::vector<std::string>& class_names) {
    const std::size_t K = scores.cols();
    if (class_names.size() != K) throw InvalidArgument("multiclass_report: class name count mismatch");
    std::vector<std::size_t> pred(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) pred[i] = argmax(scores.row(i));
    const OneVsAll ova = one_vs_all(pred, truth, K, &scores);
    MetricsReport rep;
    rep.header["task"] = "multiclass";
    rep.header["n"] = std::to_string(truth.size());
    rep.header["threshold"] = "argmax";
    if (!ova.excluded.empty()) {
        std::string ex;
        for (std::size_t k : ova.excluded) ex += (ex.empty() ? "" : ",") + class_names[k];
        rep.header["excluded_classes"] = ex;
    }
    for (const auto& cs : ova.per_class) {
        const std::string scope = "class:" + class_names[cs.cls];
        rep.rows.push_back({scope, "sensitivity", detail::value_or_nan(cs.sensitivity), std::nullopt});
        rep.rows.push_back({scope, "specificity", detail::value_or_nan(cs.specificity), std::nullopt});
        rep.rows.push_back({scope, "g_mean", detail::value_or_nan(cs.g_mean), std::nullopt});
        rep.rows.push_back({scope, "auroc", detail::value_or_nan(cs.auroc), std::nullopt});
    }
    rep.rows.push_back({"mean", "sensitivity", ova.mean_sensitivity, std::nullopt});
    rep.rows.push_back({"mean", "g_mean", ova.mean_g, std::nullopt});
    rep.rows.push_back({"sd", "sensitivity", ova.sd_sensitivity, std::nullopt});
    rep.rows.push_back({"sd", "g_mean", ova.sd_g, std::nullopt});
    return rep;
}

inline void write_report_tsv(std::ostream& os, const MetricsReport& rep) {
    os << "# " << kMetricsFormat << '\n';
    for (const auto& [k, v] : rep.header) os << "# " << k << '=' << v << '\n';
    os << "scope\tmetric\tvalue\tci_low\tci_high\n";
    for (const auto& r : rep.rows)
        os << r.scope << '\t' << r.metric << '\t' << format_double(r.value) << '\t'
           << (r.ci ? format_double(r.ci->low) : "nan") << '\t' << (r.ci ? format_double(r.ci->high) : "nan") << '\n';
}

inline MetricsReport read_report_tsv(std::istream& in, const std::string& source = "<report>") {
    MetricsReport rep;
    std::string line;
    if (!std::getline(in, line) || line != std::string("# ") + kMetricsFormat)
        throw DataError(source + ": not a " + std::string(kMetricsFormat) + " file");
    bool saw_columns = false;
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) == 0) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) rep.header[line.substr(2, eq - 2)] = line.substr(eq + 1);
            continue;
        }
        if (!saw_columns) {
            saw_columns = true;
            continue;
        }
        const auto f = split(line, '\t');
        if (f.size() != 5) throw DataError(source + ": malformed metrics row '" + line + "'");
        MetricRow r{f[0], f[1], parse_double(f[2]).value_or(std::nan("")), std::nullopt};
        const auto lo = parse_double(f[3]), hi = parse_double(f[4]);
        if (lo && hi && !std::isnan(*lo)) r.ci = Interval{*lo, *hi};
        rep.rows.push_back(r);
    }
    return rep;
}

/// Aligned table for people; mirrors the TSV content.
inline void write_report_text(std::ostream& os, const MetricsReport& rep) {
    os << "Metrics report (" << kMetricsFormat << ")\n";
    for (const auto& [k, v] : rep.header) os << "  " << k << ": " << v << '\n';
    os << '\n';
    std::size_t w = 5;
    for (const auto& r : rep.rows) w = std::max(w, r.scope.size());
    auto pad = [](std::string s, std::size_t n) {
        s.resize(std::max(n, s.size()), ' ');
        return s;
    };
    os << pad("scope", w + 2) << pad("metric", 14) << pad("value", 8) << "95% CI\n";
    for (const auto& r : rep.rows) {
        os << pad(r.scope, w + 2) << pad(r.metric, 14) << pad(format_fixed(r.value), 8);
        if (r.ci) os << format_fixed(r.ci->low) << '-' << format_fixed(r.ci->high);
        os << '\n';
    }
}

}  // namespace qimb
