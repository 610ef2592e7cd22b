#pragma once

#include "jmcppi/splitter.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace jmcppi {

struct ConfusionCounts {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;

    /// 2TP / (2TP + FP + FN); 1 when there is nothing to find and nothing predicted.
    [[nodiscard]] double f1() const {
        const long long denom = 2 * tp + fp + fn;
        return denom == 0 ? 1.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
    }
    [[nodiscard]] double accuracy() const {
        const long long total = tp + fp + fn + tn;
        return total == 0 ? 1.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
    }
};

namespace detail {

template <typename A, typename B>
void check_binary_pair(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth, const char* who) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
    }
    for (Index i = 0; i < pred.rows(); ++i) {
        for (Index c = 0; c < pred.cols(); ++c) {
            const double p = pred(i, c);
            const double y = truth(i, c);
            if ((p != 0.0 && p != 1.0) || (y != 0.0 && y != 1.0)) {
                throw std::invalid_argument(std::string(who) + ": entries must be 0 or 1");
            }
        }
    }
}

}  // namespace detail

/// Counts over the cells of the given columns; every column when `column` is empty.
template <typename A, typename B>
ConfusionCounts confusion(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth,
                          std::optional<Index> column = std::nullopt) {
    detail::check_binary_pair(pred, truth, "confusion");
    ConfusionCounts counts;
    const Index first = column.value_or(0);
    const Index last = column ? *column + 1 : pred.cols();
    for (Index i = 0; i < pred.rows(); ++i) {
        for (Index c = first; c < last; ++c) {
            const bool p = pred(i, c) == 1.0;
            const bool y = truth(i, c) == 1.0;
            if (p && y) ++counts.tp;
            else if (p) ++counts.fp;
            else if (y) ++counts.fn;
            else ++counts.tn;
        }
    }
    return counts;
}

/// Micro-averaged F1 pooled over all pair-type cells.
template <typename A, typename B>
double micro_f1(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth) {
    return confusion(pred, truth).f1();
}

struct TypeMetrics {
    double accuracy = 0.0;
    double f1 = 0.0;
    /// True when the column had no positives and no positive predictions, so f1 = 1 by convention.
    bool f1_by_convention = false;
    ConfusionCounts counts;
};

template <typename A, typename B>
std::vector<TypeMetrics> per_type_metrics(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth) {
    detail::check_binary_pair(pred, truth, "per_type_metrics");
    std::vector<TypeMetrics> out;
    out.reserve(static_cast<std::size_t>(pred.cols()));
    for (Index c = 0; c < pred.cols(); ++c) {
        TypeMetrics m;
        m.counts = confusion(pred, truth, c);
        m.accuracy = m.counts.accuracy();
        m.f1 = m.counts.f1();
        m.f1_by_convention = m.counts.tp + m.counts.fp + m.counts.fn == 0;
        out.push_back(m);
    }
    return out;
}

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

/// Micro-averaged precision/recall with every distinct probability used once as a
/// threshold (predict positive when prob >= threshold), thresholds descending.
/// Recall is reported as 1 when the labels hold no positives.
template <typename A, typename B>
std::vector<PrPoint> pr_curve(const Eigen::MatrixBase<A>& prob, const Eigen::MatrixBase<B>& truth) {
    if (prob.rows() != truth.rows() || prob.cols() != truth.cols()) {
        throw std::invalid_argument("pr_curve: shape mismatch");
    }
    std::vector<std::pair<double, bool>> cells;
    cells.reserve(static_cast<std::size_t>(prob.size()));
    long long positives = 0;
    for (Index i = 0; i < prob.rows(); ++i) {
        for (Index c = 0; c < prob.cols(); ++c) {
            const double p = prob(i, c);
            if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("pr_curve: probabilities must lie in [0, 1]");
            const bool y = truth(i, c) == 1.0;
            positives += y ? 1 : 0;
            cells.emplace_back(p, y);
        }
    }
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<PrPoint> curve;
    long long tp = 0;
    long long predicted = 0;
    for (std::size_t k = 0; k < cells.size();) {
        const double t = cells[k].first;
        while (k < cells.size() && cells[k].first == t) {
            tp += cells[k].second ? 1 : 0;
            ++predicted;
            ++k;
        }
        curve.push_back({t, static_cast<double>(tp) / static_cast<double>(predicted),
                         positives == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(positives)});
    }
    return curve;
}

struct SubsetScore {
    SubsetTag tag = SubsetTag::BS;
    Index count = 0;
    double fraction = 0.0;
    /// Empty when no test pair carries this tag.
    std::optional<double> micro_f1;
};

struct SubsetReport {
    std::array<SubsetScore, 3> per_tag;
    /// Per-tag micro-F1 averaged with weights proportional to subset size.
    double weighted_f1 = 0.0;
};

template <typename A, typename B>
SubsetReport subset_report(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth,
                           std::span<const SubsetTag> tags) {
    detail::check_binary_pair(pred, truth, "subset_report");
    if (static_cast<Index>(tags.size()) != pred.rows()) {
        throw std::invalid_argument("subset_report: one tag per pair required");
    }
    SubsetReport report;
    const auto total = static_cast<double>(tags.size());
    for (int t = 0; t < 3; ++t) {
        const auto tag = static_cast<SubsetTag>(t);
        std::vector<Index> rows;
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (tags[i] == tag) rows.push_back(static_cast<Index>(i));
        }
        SubsetScore& s = report.per_tag[static_cast<std::size_t>(t)];
        s.tag = tag;
        s.count = static_cast<Index>(rows.size());
        s.fraction = total == 0.0 ? 0.0 : static_cast<double>(rows.size()) / total;
        if (!rows.empty()) {
            s.micro_f1 = micro_f1(pred(rows, Eigen::all), truth(rows, Eigen::all));
            report.weighted_f1 += s.fraction * *s.micro_f1;
        }
    }
    return report;
}

struct MetricsReport {
    double micro_f1 = 0.0;
    std::vector<TypeMetrics> per_type;
    std::vector<PrPoint> pr_curve;
    std::optional<SubsetReport> subsets;
};

}  // namespace jmcppi
