#pragma once

// Tabular data handling: delimited-text ingestion with one-hot categorical
// columns, train-fitted median imputation and standardization, prevalence
// simulation by majority subsampling, SMOTE, (stratified) splits, and seeded
// Gaussian class-conditional generators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qimb/dataset.hpp"
#include "qimb/text.hpp"

namespace qimb {

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
    std::string label_column = "label";
    std::vector<std::string> feature_columns;  // empty: every non-label column
    std::vector<std::string> categorical_columns;
    std::string missing_token;  // cells equal to this (after trimming) are missing
    char delimiter = ',';
    /// Class names in index order. Empty when loading fresh: inferred from the
    /// file (numeric order if every label parses as a number, else lexical).
    std::vector<std::string> class_names;
    /// Category levels per categorical column. Inferred (sorted) when absent.
    std::map<std::string, std::vector<std::string>> categories;
};

struct CsvLoad {
    Dataset data;
    CsvSchema schema;  // with class names and category levels resolved
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline bool is_comment_or_blank(const std::string& line) {
    const auto t = trim(line);
    return t.empty() || t.front() == '#';
}

inline std::vector<std::string> sorted_levels(std::set<std::string> levels) {
    std::vector<std::string> v(levels.begin(), levels.end());
    const bool numeric = std::all_of(v.begin(), v.end(), [](const std::string& s) { return parse_double(s).has_value(); });
    if (numeric)
        std::stable_sort(v.begin(), v.end(),
                         [](const std::string& a, const std::string& b) { return *parse_double(a) < *parse_double(b); });
    return v;
}

}  // namespace detail

/// Parses delimited text. Lines starting with '#' are provenance comments.
inline CsvLoad load_csv(std::istream& in, const CsvSchema& schema_in, const std::string& source = "<stream>") {
    CsvLoad result;
    CsvSchema& schema = result.schema;
    schema = schema_in;

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line)) continue;
        header = detail::split_csv_line(line, schema.delimiter);
        for (auto& h : header) h = std::string(trim(h));
        break;
    }
    if (header.empty()) throw DataError(source + ": missing header row");

    auto column_of = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(source + ": column '" + name + "' not found in header");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t label_col = column_of(schema.label_column);
    if (schema.feature_columns.empty())
        for (const auto& h : header)
            if (h != schema.label_column) schema.feature_columns.push_back(h);
    std::vector<std::size_t> feat_cols;
    for (const auto& f : schema.feature_columns) feat_cols.push_back(column_of(f));
    for (const auto& c : schema.categorical_columns)
        if (std::find(schema.feature_columns.begin(), schema.feature_columns.end(), c) == schema.feature_columns.end())
            throw DataError(source + ": categorical column '" + c + "' is not a feature column");
    auto is_categorical = [&](const std::string& name) {
        return std::find(schema.categorical_columns.begin(), schema.categorical_columns.end(), name) !=
               schema.categorical_columns.end();
    };

    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> row_lines;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line)) continue;
        auto cells = detail::split_csv_line(line, schema.delimiter);
        if (cells.size() != header.size())
            throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(cells.size()));
        for (auto& c : cells) c = std::string(trim(c));
        rows.push_back(std::move(cells));
        row_lines.push_back(line_no);
    }

    const bool infer_classes = schema.class_names.empty();
    if (infer_classes) {
        std::set<std::string> levels;
        for (const auto& r : rows) levels.insert(r[label_col]);
        schema.class_names = detail::sorted_levels(std::move(levels));
    }
    for (const auto& f : schema.feature_columns) {
        if (!is_categorical(f) || schema.categories.count(f)) continue;
        const std::size_t col = column_of(f);
        std::set<std::string> levels;
        for (const auto& r : rows)
            if (r[col] != schema.missing_token) levels.insert(r[col]);
        schema.categories[f] = detail::sorted_levels(std::move(levels));
    }

    Dataset& d = result.data;
    d.class_names = schema.class_names;
    for (const auto& f : schema.feature_columns) {
        if (is_categorical(f))
            for (const auto& level : schema.categories.at(f)) d.feature_names.push_back(f + "=" + level);
        else
            d.feature_names.push_back(f);
    }
    d.features = Matrix(rows.size(), d.feature_names.size());
    d.labels.reserve(rows.size());
    const double missing = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        const std::string where = source + ":" + std::to_string(row_lines[r]);
        const auto lab = std::find(d.class_names.begin(), d.class_names.end(), cells[label_col]);
        if (lab == d.class_names.end()) throw DataError(where + ": unknown label '" + cells[label_col] + "'");
        d.labels.push_back(static_cast<std::size_t>(lab - d.class_names.begin()));
        auto out = d.features.row(r);
        std::size_t j = 0;
        for (std::size_t fi = 0; fi < feat_cols.size(); ++fi) {
            const std::string& name = schema.feature_columns[fi];
            const std::string& cell = cells[feat_cols[fi]];
            if (is_categorical(name)) {
                const auto& levels = schema.categories.at(name);
                if (cell == schema.missing_token) {
                    for (std::size_t l = 0; l < levels.size(); ++l) out[j + l] = missing;
                } else {
                    const auto it = std::find(levels.begin(), levels.end(), cell);
                    if (it == levels.end())
                        throw DataError(where + ": column '" + name + "' has unknown category '" + cell + "'");
                    for (std::size_t l = 0; l < levels.size(); ++l) out[j + l] = 0.0;
                    out[j + static_cast<std::size_t>(it - levels.begin())] = 1.0;
                }
                j += levels.size();
            } else {
                if (cell == schema.missing_token) {
                    out[j++] = missing;
                    continue;
                }
                const auto v = parse_double(cell);
                if (!v || !std::isfinite(*v))
                    throw DataError(where + ": column '" + name + "' has unparseable value '" + cell + "'");
                out[j++] = *v;
            }
        }
    }
    return result;
}

inline CsvLoad load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return load_csv(in, schema, path);
}

/// Writes `label` last after the feature columns; numbers in shortest
/// round-trip form, missing values as the empty cell.
inline void write_csv(std::ostream& os, const Dataset& d, const std::vector<std::string>& comments = {},
                      char delim = ',') {
    for (const auto& c : comments) os << "# " << c << '\n';
    for (std::size_t j = 0; j < d.dims(); ++j)
        os << (d.feature_names.empty() ? "x" + std::to_string(j) : d.feature_names[j]) << delim;
    os << "label\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (double x : d.row(i)) {
            if (!std::isnan(x)) os << format_double(x);
            os << delim;
        }
        os << d.class_names[d.labels[i]] << '\n';
    }
}

// ---------------------------------------------------------------------------
// Imputation and scaling (fit on train, apply everywhere)

struct ImputeStats {
    Vector medians;
};

inline double median_of(Vector v) {
    if (v.empty()) throw DataError("median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ImputeStats fit_median(const Dataset& train) {
    ImputeStats s;
    for (std::size_t j = 0; j < train.dims(); ++j) {
        Vector col;
        for (std::size_t i = 0; i < train.size(); ++i)
            if (!std::isnan(train.features(i, j))) col.push_back(train.features(i, j));
        if (col.empty())
            throw DataError("feature '" + (train.feature_names.empty() ? std::to_string(j) : train.feature_names[j]) +
                            "' has no observed values in the training data");
        s.medians.push_back(median_of(std::move(col)));
    }
    return s;
}

inline void apply_impute(const ImputeStats& s, Dataset& d) {
    if (s.medians.size() != d.dims()) throw DataError("imputation statistics do not match dataset width");
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.dims(); ++j)
            if (std::isnan(d.features(i, j))) d.features(i, j) = s.medians[j];
}

/// Fits medians on `train` only and fills every missing value in all sets.
inline ImputeStats impute_median(Dataset& train, std::span<Dataset* const> others = {}) {
    const ImputeStats s = fit_median(train);
    apply_impute(s, train);
    for (Dataset* d : others) apply_impute(s, *d);
    return s;
}

struct ScalerStats {
    std::vector<std::size_t> kept;  // source feature indices retained, in order
    Vector mean;                    // per kept feature
    Vector sd;                      // population SD per kept feature
    std::vector<std::string> dropped;
    std::size_t source_dims = 0;
};

inline ScalerStats fit_scaler(const Dataset& train) {
    if (train.empty()) throw DataError("cannot fit a scaler on an empty dataset");
    ScalerStats s;
    s.source_dims = train.dims();
    const double n = static_cast<double>(train.size());
    for (std::size_t j = 0; j < train.dims(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < train.size(); ++i) mean += train.features(i, j);
        mean /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < train.size(); ++i) {
            const double dx = train.features(i, j) - mean;
            var += dx * dx;
        }
        const double sd = std::sqrt(var / n);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            s.dropped.push_back(train.feature_names.empty() ? std::to_string(j) : train.feature_names[j]);
            continue;
        }
        s.kept.push_back(j);
        s.mean.push_back(mean);
        s.sd.push_back(sd);
    }
    return s;
}

inline void apply_scaler(const ScalerStats& s, Dataset& d) {
    if (d.dims() != s.source_dims) throw DataError("scaler statistics do not match dataset width");
    Matrix out(d.size(), s.kept.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t k = 0; k < s.kept.size(); ++k) out(i, k) = (d.features(i, s.kept[k]) - s.mean[k]) / s.sd[k];
    std::vector<std::string> names;
    if (!d.feature_names.empty())
        for (std::size_t k : s.kept) names.push_back(d.feature_names[k]);
    d.features = std::move(out);
    d.feature_names = std::move(names);
}

/// Standardizes `train` to zero mean / unit population SD per feature and
/// applies the same transform to `others`. Constant features are dropped.
inline ScalerStats standardize(Dataset& train, std::span<Dataset* const> others = {}) {
    if (train.has_missing()) throw DataError("standardize: impute missing values first");
    const ScalerStats s = fit_scaler(train);
    apply_scaler(s, train);
    for (Dataset* d : others) apply_scaler(s, *d);
    return s;
}

// ---------------------------------------------------------------------------
// Resampling

/// Keeps every minority row and `controls_per_case` x minority-count rows of
/// the remaining classes, drawn uniformly without replacement. Row order of
/// the source is preserved.
inline Dataset simulate_prevalence(const Dataset& d, std::size_t minority, std::size_t controls_per_case, Rng& rng) {
    if (minority >= d.class_count()) throw InvalidArgument("simulate_prevalence: minority class out of range");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < d.size(); ++i) (d.labels[i] == minority ? pos : neg).push_back(i);
    if (pos.empty()) throw DataError("simulate_prevalence: no minority samples");
    const std::size_t want = pos.size() * controls_per_case;
    if (want > neg.size())
        throw DataError("simulate_prevalence: need " + std::to_string(want) + " controls but only " +
                        std::to_string(neg.size()) + " exist (achievable ratio 1:" +
                        std::to_string(neg.size() / pos.size()) + ")");
    std::shuffle(neg.begin(), neg.end(), rng);
    neg.resize(want);
    std::vector<std::size_t> keep = pos;
    keep.insert(keep.end(), neg.begin(), neg.end());
    std::sort(keep.begin(), keep.end());
    return d.subset(keep);
}

/// Synthetic minority oversampling. Each requested class (default: every
/// class except the most frequent) is grown to ceil(strategy x majority count)
/// rows via x + u (x_nn - x), u ~ U[0, 1], x_nn one of the k nearest same-class
/// neighbours. Synthetic rows are appended after the originals.
inline Dataset smote(const Dataset& d, double strategy, std::size_t k_neighbors, Rng& rng,
                     std::vector<std::size_t> classes = {}) {
    if (!(strategy > 0.0 && strategy <= 1.0)) throw InvalidArgument("smote: strategy must lie in (0, 1]");
    if (k_neighbors == 0) throw InvalidArgument("smote: k must be positive");
    if (d.has_missing()) throw DataError("smote: impute missing values first");
    const auto counts = d.class_counts();
    const std::size_t majority =
        static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (classes.empty())
        for (std::size_t c = 0; c < counts.size(); ++c)
            if (c != majority && counts[c] > 0) classes.push_back(c);

    Dataset out = d;
    std::vector<Vector> new_rows;
    std::vector<std::size_t> new_labels;
    const auto target = static_cast<std::size_t>(std::ceil(strategy * static_cast<double>(counts[majority]) - 1e-9));
    for (std::size_t c : classes) {
        if (c >= counts.size()) throw InvalidArgument("smote: class index out of range");
        if (counts[c] > target)
            throw InvalidArgument("smote: strategy " + format_double(strategy) + " would shrink class " +
                                  std::to_string(c) + " (" + std::to_string(counts[c]) + " rows, target " +
                                  std::to_string(target) + ")");
        if (counts[c] <= k_neighbors)
            throw DataError("smote: class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                            " rows, need more than k=" + std::to_string(k_neighbors));
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.labels[i] == c) members.push_back(i);
        // k nearest same-class neighbours of every member (brute force)
        std::vector<std::vector<std::size_t>> nn(members.size());
        for (std::size_t a = 0; a < members.size(); ++a) {
            std::vector<std::pair<double, std::size_t>> dist;
            for (std::size_t b = 0; b < members.size(); ++b) {
                if (a == b) continue;
                double s = 0.0;
                const auto ra = d.row(members[a]);
                const auto rb = d.row(members[b]);
                for (std::size_t j = 0; j < ra.size(); ++j) s += (ra[j] - rb[j]) * (ra[j] - rb[j]);
                dist.emplace_back(s, members[b]);
            }
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_neighbors), dist.end());
            for (std::size_t t = 0; t < k_neighbors; ++t) nn[a].push_back(dist[t].second);
        }
        std::uniform_int_distribution<std::size_t> pick_base(0, members.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_nn(0, k_neighbors - 1);
        std::uniform_real_distribution<double> gap(0.0, 1.0);
        for (std::size_t s = counts[c]; s < target; ++s) {
            const std::size_t a = pick_base(rng);
            const auto x = d.row(members[a]);
            const auto y = d.row(nn[a][pick_nn(rng)]);
            const double u = gap(rng);
            Vector row(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) row[j] = x[j] + u * (y[j] - x[j]);
            new_rows.push_back(std::move(row));
            new_labels.push_back(c);
        }
    }
    Matrix feats(d.size() + new_rows.size(), d.dims());
    std::copy(d.features.data().begin(), d.features.data().end(), feats.data().begin());
    for (std::size_t r = 0; r < new_rows.size(); ++r)
        std::copy(new_rows[r].begin(), new_rows[r].end(), feats.row(d.size() + r).begin());
    out.features = std::move(feats);
    out.labels.insert(out.labels.end(), new_labels.begin(), new_labels.end());
    return out;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
    double train = 0.6;
    double validation = 0.2;
    double test = 0.2;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct Splits {
    Dataset train;
    Dataset validation;
    Dataset test;
};

/// Disjoint, exhaustive three-way split. Parts with ratio 0 are empty; every
/// part with a positive ratio must receive at least one row.
inline Splits split(const Dataset& d, const SplitSpec& spec) {
    const double ratios[3] = {spec.train, spec.validation, spec.test};
    for (double r : ratios)
        if (!(r >= 0.0)) throw InvalidArgument("split: ratios must be non-negative");
    if (std::abs(spec.train + spec.validation + spec.test - 1.0) > 1e-9)
        throw InvalidArgument("split: ratios must sum to 1");
    if (!(spec.train > 0.0)) throw InvalidArgument("split: training ratio must be positive");
    const std::size_t active = static_cast<std::size_t>(std::count_if(std::begin(ratios), std::end(ratios),
                                                                      [](double r) { return r > 0.0; }));
    Rng rng(spec.seed);
    std::vector<std::size_t> parts[3];

    auto allocate = [&](std::vector<std::size_t> idx) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n = idx.size();
        const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
        const auto n_val = std::min(n - std::min(n, n_train),
                                    static_cast<std::size_t>(std::llround(spec.validation * static_cast<double>(n))));
        std::size_t counts[3] = {std::min(n, n_train), n_val, 0};
        counts[2] = n - counts[0] - counts[1];
        if (spec.test == 0.0) {
            counts[spec.validation > 0.0 ? 1 : 0] += counts[2];
            counts[2] = 0;
        }
        std::size_t pos = 0;
        for (int p = 0; p < 3; ++p) {
            parts[p].insert(parts[p].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                            idx.begin() + static_cast<std::ptrdiff_t>(pos + counts[p]));
            pos += counts[p];
        }
    };

    if (spec.stratified) {
        for (std::size_t c = 0; c < d.class_count(); ++c) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < d.size(); ++i)
                if (d.labels[i] == c) idx.push_back(i);
            if (idx.empty()) continue;
            if (idx.size() < active)
                throw DataError("split: class '" + d.class_names[c] + "' has " + std::to_string(idx.size()) +
                                " rows, fewer than the " + std::to_string(active) + " requested parts");
            allocate(std::move(idx));
        }
    } else {
        std::vector<std::size_t> idx(d.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        allocate(std::move(idx));
    }
    for (int p = 0; p < 3; ++p) {
        if (ratios[p] > 0.0 && parts[p].empty()) throw DataError("split: dataset too small, a part came out empty");
        std::sort(parts[p].begin(), parts[p].end());
    }
    return {d.subset(parts[0]), d.subset(parts[1]), d.subset(parts[2])};
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
    Vector prevalences;
    std::vector<Vector> means;        // K x D
    std::vector<Matrix> covariances;  // K of D x D
    std::size_t n = 0;
    std::size_t d = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> class_names;  // defaults to "0".."K-1"
};

/// Class 0 at the origin, class k >= 1 at `separation` along axis (k-1) mod D;
/// identity covariances.
inline SyntheticSpec axis_layout(Vector prevalences, std::size_t n, std::size_t d, double separation,
                                 std::uint64_t seed) {
    SyntheticSpec s;
    s.prevalences = std::move(prevalences);
    s.n = n;
    s.d = d;
    s.seed = seed;
    for (std::size_t k = 0; k < s.prevalences.size(); ++k) {
        Vector m(d, 0.0);
        if (k > 0 && d > 0) m[(k - 1) % d] = separation;
        s.means.push_back(std::move(m));
        s.covariances.push_back(Matrix::identity(d));
    }
    return s;
}

/// Class k at (separation / sqrt 2) along axis k, so every pair of class
/// means is exactly `separation` apart; identity covariances. Needs D >= K.
inline SyntheticSpec simplex_layout(Vector prevalences, std::size_t n, std::size_t d, double separation,
                                    std::uint64_t seed) {
    if (d < prevalences.size()) throw InvalidArgument("simplex layout needs at least one dimension per class");
    SyntheticSpec s;
    s.prevalences = std::move(prevalences);
    s.n = n;
    s.d = d;
    s.seed = seed;
    for (std::size_t k = 0; k < s.prevalences.size(); ++k) {
        Vector m(d, 0.0);
        m[k] = separation / std::sqrt(2.0);
        s.means.push_back(std::move(m));
        s.covariances.push_back(Matrix::identity(d));
    }
    return s;
}

/// Lower Cholesky factor; rejects matrices that are not symmetric positive definite.
inline Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols()) throw InvalidArgument("cholesky: matrix must be square");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            if (std::abs(a(i, j) - a(j, i)) > 1e-12 * std::max(1.0, std::abs(a(i, j))))
                throw InvalidArgument("covariance is not symmetric");
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(s > 0.0)) throw InvalidArgument("covariance is not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    const std::size_t K = spec.prevalences.size();
    if (K < 2) throw InvalidArgument("synthetic spec needs at least 2 classes");
    if (spec.n == 0) throw InvalidArgument("synthetic spec needs N > 0");
    if (spec.d == 0) throw InvalidArgument("synthetic spec needs D > 0");
    double total = 0.0;
    for (double p : spec.prevalences) {
        if (!(p > 0.0)) throw InvalidArgument("class prevalences must be positive");
        total += p;
    }
    // Published prevalence tables are rounded; they are renormalized here.
    if (std::abs(total - 1.0) > 1e-2) throw InvalidArgument("class prevalences must sum to 1");
    if (spec.means.size() != K || spec.covariances.size() != K)
        throw InvalidArgument("synthetic spec needs one mean and covariance per class");
    std::vector<Matrix> factors;
    for (std::size_t k = 0; k < K; ++k) {
        if (spec.means[k].size() != spec.d) throw InvalidArgument("class mean has wrong dimensionality");
        if (spec.covariances[k].rows() != spec.d) throw InvalidArgument("class covariance has wrong dimensionality");
        factors.push_back(cholesky(spec.covariances[k]));
    }

    Dataset out;
    out.class_names = spec.class_names;
    if (out.class_names.empty())
        for (std::size_t k = 0; k < K; ++k) out.class_names.push_back(std::to_string(k));
    if (out.class_names.size() != K) throw InvalidArgument("class name count differs from class count");
    for (std::size_t j = 0; j < spec.d; ++j) out.feature_names.push_back("x" + std::to_string(j));
    out.features = Matrix(spec.n, spec.d);
    out.labels.resize(spec.n);

    Rng rng(spec.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector cum(K);
    std::partial_sum(spec.prevalences.begin(), spec.prevalences.end(), cum.begin());
    Vector z(spec.d);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double u = unif(rng) * cum.back();
        std::size_t k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        k = std::min(k, K - 1);
        out.labels[i] = k;
        for (double& x : z) x = normal(rng);
        auto row = out.features.row(i);
        for (std::size_t a = 0; a < spec.d; ++a) {
            double s = spec.means[k][a];
            for (std::size_t b = 0; b <= a; ++b) s += factors[k](a, b) * z[b];
            row[a] = s;
        }
    }
    return out;
}

}  // namespace qimb
