#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qimb/numkernel.hpp"

namespace qimb {

/// N x D feature matrix with integer class labels in [0, class_count()).
/// Missing values are quiet NaNs until imputation.
struct Dataset {
    Matrix features;
    std::vector<std::size_t> labels;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dims() const noexcept { return features.cols(); }
    std::size_t class_count() const noexcept { return class_names.size(); }
    bool empty() const noexcept { return labels.empty(); }

    std::span<const double> row(std::size_t i) const { return features.row(i); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(class_count(), 0);
        for (std::size_t y : labels) ++counts.at(y);
        return counts;
    }

    bool has_missing() const {
        for (double x : features.data())
            if (std::isnan(x)) return true;
        return false;
    }

    Dataset subset(std::span<const std::size_t> idx) const {
        Dataset out;
        out.feature_names = feature_names;
        out.class_names = class_names;
        out.features = Matrix(idx.size(), dims());
        out.labels.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const auto src = row(idx[r]);
            std::copy(src.begin(), src.end(), out.features.row(r).begin());
            out.labels.push_back(labels[idx[r]]);
        }
        return out;
    }

    void validate() const {
        if (features.rows() != labels.size())
            throw DataError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                            std::to_string(labels.size()) + " labels");
        if (!feature_names.empty() && feature_names.size() != dims())
            throw DataError("dataset feature names do not match its dimensionality");
        for (std::size_t y : labels)
            if (y >= class_count()) throw DataError("label " + std::to_string(y) + " outside the class list");
    }

    bool operator==(const Dataset&) const = default;
};

}  // namespace qimb
