// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace prunelens::svg {

struct Series {
    std::string label;
    std::vector<double> values;
};

namespace detail {
inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}
inline const char* color(std::size_t i) {
    static const char* palette[] = {"#4c9a5b", "#e08a2c", "#3b6fb6", "#8c5a3c", "#9b59b6", "#7f8c8d"};
    return palette[i % 6];
}
} // namespace detail

/// Grouped bar chart, one group per category and one bar per series.
inline std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                             const std::vector<Series>& series) {
    const double w = 80.0 + 60.0 * static_cast<double>(std::max<std::size_t>(categories.size(), 1)), h = 320.0;
    double lo = 0.0, hi = 0.0;
    for (const auto& s : series)
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double top = 40.0, bottom = h - 60.0;
    auto y = [&](double v) { return top + (hi - v) / (hi - lo) * (bottom - top); };
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    os << "<text x=\"10\" y=\"20\" font-size=\"14\">" << detail::escape(title) << "</text>\n";
    os << "<line x1=\"60\" x2=\"" << w - 10 << "\" y1=\"" << y(0) << "\" y2=\"" << y(0) << "\" stroke=\"#000\"/>\n";
    const double group = 60.0, bar = (group - 10.0) / static_cast<double>(std::max<std::size_t>(series.size(), 1));
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const double x0 = 70.0 + group * static_cast<double>(c);
        for (std::size_t s = 0; s < series.size(); ++s) {
            if (c >= series[s].values.size()) continue;
            const double v = series[s].values[c];
            os << "<rect x=\"" << x0 + bar * static_cast<double>(s) << "\" y=\"" << std::min(y(v), y(0))
               << "\" width=\"" << bar - 1 << "\" height=\"" << std::fabs(y(v) - y(0)) << "\" fill=\""
               << detail::color(s) << "\"/>\n";
        }
        os << "<text x=\"" << x0 << "\" y=\"" << h - 40 << "\" font-size=\"9\">" << detail::escape(categories[c])
           << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s)
        os << "<text x=\"" << 70 + 120 * s << "\" y=\"" << h - 12 << "\" font-size=\"11\" fill=\"" << detail::color(s)
           << "\">" << detail::escape(series[s].label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

/// Heatmap of values in [0, 1]; rows top to bottom.
inline std::string heatmap(const std::string& title, const std::vector<std::string>& rows,
                           const std::vector<std::string>& cols, const std::vector<std::vector<double>>& values) {
    const double cell = 28.0, left = 150.0, top = 40.0;
    const double w = left + cell * static_cast<double>(cols.size()) + 20, h = top + cell * static_cast<double>(rows.size()) + 90;
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    os << "<text x=\"10\" y=\"20\" font-size=\"14\">" << detail::escape(title) << "</text>\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        os << "<text x=\"5\" y=\"" << top + cell * (static_cast<double>(r) + 0.65) << "\" font-size=\"10\">"
           << detail::escape(rows[r]) << "</text>\n";
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const double v = std::isfinite(values[r][c]) ? std::clamp(values[r][c], 0.0, 1.0) : 0.0;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - v)));
            os << "<rect x=\"" << left + cell * static_cast<double>(c) << "\" y=\"" << top + cell * static_cast<double>(r)
               << "\" width=\"" << cell - 1 << "\" height=\"" << cell - 1 << "\" fill=\"rgb(255," << shade << ','
               << shade << ")\"/>\n";
        }
    }
    for (std::size_t c = 0; c < cols.size(); ++c)
        os << "<text x=\"" << left + cell * static_cast<double>(c) + 4 << "\" y=\""
           << top + cell * static_cast<double>(rows.size()) + 14 << "\" font-size=\"9\">" << detail::escape(cols[c])
           << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace prunelens::svg
