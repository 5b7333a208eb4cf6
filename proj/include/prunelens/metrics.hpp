// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prunelens/errors.hpp"

namespace prunelens {

/// SMD is undefined when neither group shows any spread.
class UndefinedMetricError : public InputError {
public:
    using InputError::InputError;
};

/// First currency or decimal quantity in `text`: optional "$", digits with
/// optional thousands separators, optional fraction, optional k/K (x1000).
inline std::optional<double> extract_numeric(const std::string& text) {
    static const std::regex pattern(R"(\$?\s*(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?\s?([kK](?![A-Za-z]))?)");
    std::smatch m;
    if (!std::regex_search(text, m, pattern)) return std::nullopt;
    std::string digits = m[1].str();
    digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
    double value = std::stod(digits + m[2].str());
    if (m[3].matched) value *= 1000.0;
    return value;
}

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Unbiased (n - 1) sample variance.
inline double sample_variance(std::span<const double> xs) {
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

struct SmdResult {
    double smd = 0.0;
    double pooled_sd = 0.0;
};

/// Standardized mean difference (mean_black - mean_white) / s_p.
inline SmdResult smd(std::span<const double> black, std::span<const double> white) {
    if (black.size() < 2 || white.size() < 2) throw InputError("smd needs at least two values per group");
    const double nb = static_cast<double>(black.size()), nw = static_cast<double>(white.size());
    const double pooled_var = ((nb - 1.0) * sample_variance(black) + (nw - 1.0) * sample_variance(white)) / (nb + nw - 2.0);
    if (!(pooled_var > 0.0)) throw UndefinedMetricError("smd undefined: pooled variance is zero");
    const double sp = std::sqrt(pooled_var);
    return {(mean(black) - mean(white)) / sp, sp};
}

/// Percentile `pct` (0..100) of sorted data by linear interpolation between
/// order statistics at fractional rank pct/100 * (n - 1).
inline double percentile_sorted(std::span<const double> sorted, double pct) {
    if (sorted.empty()) throw InputError("percentile of empty data");
    const double rank = pct / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline std::pair<double, double> percentile_bounds(std::span<const double> values, double lo_pct, double hi_pct) {
    if (values.empty()) throw InputError("winsorize: empty list");
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
        throw InputError("winsorize: need 0 <= lo_pct < hi_pct <= 100");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return {percentile_sorted(sorted, lo_pct), percentile_sorted(sorted, hi_pct)};
}

/// Clamps values to their own [lo_pct, hi_pct] percentiles, keeping order.
inline std::vector<double> winsorize(std::span<const double> values, double lo_pct, double hi_pct) {
    const auto [lo, hi] = percentile_bounds(values, lo_pct, hi_pct);
    std::vector<double> out(values.begin(), values.end());
    for (double& v : out) v = std::clamp(v, lo, hi);
    return out;
}

/// Fraction of answers that are numeric and inside [lo, hi]; a missing value is an outlier.
inline double inlier_ratio(std::span<const std::optional<double>> values, std::pair<double, double> range) {
    if (values.empty()) throw InputError("inlier_ratio: no records");
    if (range.first > range.second) throw InputError("inlier_ratio: reference range has lo > hi");
    std::size_t inside = 0;
    for (const auto& v : values)
        if (v && *v >= range.first && *v <= range.second) ++inside;
    return static_cast<double>(inside) / static_cast<double>(values.size());
}

/// 1-D earth mover's distance: the area between the two empirical CDFs.
inline double emd(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw InputError("emd: both samples must be nonempty");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size()), nb = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double area = 0.0;
    double prev = std::min(x.front(), y.front());
    while (i < x.size() || j < y.size()) {
        const double next = j == y.size() || (i < x.size() && x[i] <= y[j]) ? x[i] : y[j];
        area += std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
        while (i < x.size() && x[i] == next) ++i;
        while (j < y.size() && y[j] == next) ++j;
        prev = next;
    }
    return area;
}

} // namespace prunelens
