#pragma once

// Minimal SVG 1.1 plots: line charts and scatter plots with axes, ticks,
// a title and a legend.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace e1::cli {

inline std::string xml_escape(const std::string& s) {
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

struct Series {
    std::string label;
    std::vector<double> x, y;
};

class Plot {
public:
    enum class Kind { lines, points };

    Plot(std::string title, std::string x_label, std::string y_label, Kind kind = Kind::lines)
        : m_title(std::move(title)), m_x_label(std::move(x_label)), m_y_label(std::move(y_label)), m_kind(kind) {}

    Plot& add(Series s) {
        m_series.push_back(std::move(s));
        return *this;
    }

    /// Log scale on y; non-positive values are dropped.
    Plot& log_y(bool on = true) {
        m_log_y = on;
        return *this;
    }

    Plot& equal_aspect(bool on = true) {
        m_equal = on;
        return *this;
    }

    void write(std::ostream& out) const {
        const double W = 640, H = 480, left = 70, right = 150, top = 40, bottom = 55;
        const double pw = W - left - right, ph = H - top - bottom;
        double x0 = inf(), x1 = -inf(), y0 = inf(), y1 = -inf();
        for (const auto& s : m_series)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                const double y = ty(s.y[i]);
                if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
                x0 = std::min(x0, s.x[i]);
                x1 = std::max(x1, s.x[i]);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
        if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
        if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
        if (m_equal) {
            const double span = std::max(x1 - x0, y1 - y0), cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
            x0 = cx - span / 2, x1 = cx + span / 2, y0 = cy - span / 2, y1 = cy + span / 2;
        }
        const double pad_x = 0.04 * (x1 - x0), pad_y = 0.04 * (y1 - y0);
        x0 -= pad_x, x1 += pad_x, y0 -= pad_y, y1 += pad_y;
        auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
        auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
            << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n"
            << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
            << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
            << xml_escape(m_title) << "</text>\n"
            << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
            << "\" fill=\"none\" stroke=\"black\"/>\n";

        for (int i = 0; i <= 5; ++i) {
            const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
            out << "<line x1=\"" << px(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << px(xv) << "\" y2=\"" << top + ph + 5
                << "\" stroke=\"black\"/>\n"
                << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << tick(xv) << "</text>\n"
                << "<line x1=\"" << left - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << left << "\" y2=\"" << py(yv)
                << "\" stroke=\"black\"/>\n"
                << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
                << tick(m_log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
        }
        out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xml_escape(m_x_label)
            << "</text>\n"
            << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            << "font-size=\"13\" transform=\"rotate(-90 18 " << top + ph / 2 << ")\">" << xml_escape(m_y_label)
            << "</text>\n";

        static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
        for (std::size_t k = 0; k < m_series.size(); ++k) {
            const auto& s = m_series[k];
            const char* color = colors[k % 6];
            if (m_kind == Kind::lines) {
                out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
                for (std::size_t i = 0; i < s.x.size(); ++i) {
                    const double y = ty(s.y[i]);
                    if (std::isfinite(s.x[i]) && std::isfinite(y)) out << px(s.x[i]) << ',' << py(y) << ' ';
                }
                out << "\"/>\n";
            } else {
                out << "<g fill=\"" << color << "\" fill-opacity=\"0.5\">\n";
                for (std::size_t i = 0; i < s.x.size(); ++i) {
                    if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                    out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"1.5\"/>\n";
                }
                out << "</g>\n";
            }
            const double ly = top + 14 + 18.0 * static_cast<double>(k);
            out << "<rect x=\"" << left + pw + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"10\" fill=\""
                << color << "\"/>\n"
                << "<text x=\"" << left + pw + 30 << "\" y=\"" << ly
                << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(s.label) << "</text>\n";
        }
        out << "</svg>\n";
    }

    std::string str() const {
        std::ostringstream out;
        write(out);
        return out.str();
    }

private:
    static double inf() { return std::numeric_limits<double>::infinity(); }

    double ty(double y) const {
        if (!m_log_y) return y;
        return y > 0.0 ? std::log10(y) : std::numeric_limits<double>::quiet_NaN();
    }

    static std::string tick(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
        return buf;
    }

    std::string m_title, m_x_label, m_y_label;
    Kind m_kind;
    std::vector<Series> m_series;
    bool m_log_y = false;
    bool m_equal = false;
};

} // namespace e1::cli
