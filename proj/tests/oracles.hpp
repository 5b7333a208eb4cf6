// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deliberately naive reference implementations, written without reusing any
// library code, for checking the metric functions.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace prunelens::oracle {

inline std::vector<double> random_sample(std::mt19937& gen, std::size_t n) {
    std::normal_distribution<double> nd(gen() % 500, 1.0 + gen() % 90);
    std::vector<double> v(n);
    for (auto& x : v) x = std::round(nd(gen) * 4.0) / 4.0; // quarter grid makes ties common
    return v;
}

inline std::pair<double, double> smd_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    auto stats = [](const std::vector<double>& v) {
        long double s = 0;
        for (double x : v) s += x;
        const long double m = s / v.size();
        long double ss = 0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair<long double, long double>{m, ss};
    };
    const auto [ma, ssa] = stats(a);
    const auto [mb, ssb] = stats(b);
    const long double sp = std::sqrt((ssa + ssb) / (a.size() + b.size() - 2.0L));
    return {static_cast<double>((ma - mb) / sp), static_cast<double>(sp)};
}

inline double percentile_oracle(std::vector<double> v, double pct) {
    std::sort(v.begin(), v.end());
    const double h = (v.size() - 1) * pct / 100.0;
    const std::size_t i = static_cast<std::size_t>(h);
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (h - i) * (v[i + 1] - v[i]);
}

inline std::vector<double> winsorize_oracle(const std::vector<double>& v, double lo, double hi) {
    const double a = percentile_oracle(v, lo), b = percentile_oracle(v, hi);
    std::vector<double> out;
    for (double x : v) out.push_back(x < a ? a : (x > b ? b : x));
    return out;
}

inline double inlier_oracle(const std::vector<std::optional<double>>& v, std::pair<double, double> r) {
    int inside = 0;
    for (const auto& x : v)
        if (x.has_value() && r.first <= *x && *x <= r.second) ++inside;
    return static_cast<double>(inside) / v.size();
}

// Integrates |F_a - F_b| piecewise between consecutive distinct sample points,
// evaluating each CDF by counting.
inline double emd_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pts(a);
    pts.insert(pts.end(), b.begin(), b.end());
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    auto cdf = [](const std::vector<double>& v, double t) {
        return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double x) { return x <= t; })) / v.size();
    };
    double area = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        area += std::abs(cdf(a, pts[i]) - cdf(b, pts[i])) * (pts[i + 1] - pts[i]);
    return area;
}

inline double emd_equal_size_oracle(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / a.size();
}

} // namespace prunelens::oracle
