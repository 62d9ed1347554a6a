#include "unfold/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace unfold {

namespace {

constexpr double kWidth = 760, kHeight = 460;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// Round tick spacing to a 1/2/5 decade ladder.
double tick_step(double span) {
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double frac = raw / mag;
    if (frac < 1.5) return mag;
    if (frac < 3.5) return 2.0 * mag;
    if (frac < 7.5) return 5.0 * mag;
    return 10.0 * mag;
}

}  // namespace

SvgFigure::SvgFigure(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgFigure::add_band(const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper, const std::string& color,
                         const std::string& label) {
    bands_.push_back({x, lower, upper, color, label});
}

void SvgFigure::add_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const std::string& color, const std::string& label, bool dashed) {
    lines_.push_back({x, y, color, label, dashed});
}

void SvgFigure::add_points(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const std::string& color, const std::string& label) {
    points_.push_back({x, y, color, label});
}

void SvgFigure::add_hline(double y, const std::string& color, const std::string& label) {
    Eigen::VectorXd x(2), yy(2);
    x << -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity();
    yy << y, y;
    lines_.push_back({x, yy, color, label, true});
}

void SvgFigure::save(const std::string& path) const {
    double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
    double y_min = std::numeric_limits<double>::infinity(), y_max = -y_min;
    auto scan = [&](const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) {
        for (int i = 0; i < xs.size(); ++i) {
            if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
            x_min = std::min(x_min, xs[i]);
            x_max = std::max(x_max, xs[i]);
            y_min = std::min(y_min, ys[i]);
            y_max = std::max(y_max, ys[i]);
        }
    };
    for (const auto& b : bands_) {
        scan(b.x, b.lower);
        scan(b.x, b.upper);
    }
    for (const auto& l : lines_) scan(l.x, l.y);
    for (const auto& p : points_) scan(p.x, p.y);
    if (!std::isfinite(x_min) || !std::isfinite(y_min))
        throw std::runtime_error("SvgFigure: nothing to plot");
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max == y_min) y_max = y_min + 1.0;
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    auto px = [&](double x) {
        return kLeft + (x - x_min) / (x_max - x_min) * (kWidth - kLeft - kRight);
    };
    auto py = [&](double y) {
        return kHeight - kBottom - (y - y_min) / (y_max - y_min) * (kHeight - kTop - kBottom);
    };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
        << "font-family=\"sans-serif\">" << title_ << "</text>\n";

    for (const auto& b : bands_) {
        out << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.35\" stroke=\"none\" "
            << "points=\"";
        for (int i = 0; i < b.x.size(); ++i) out << fmt(px(b.x[i])) << ',' << fmt(py(b.upper[i])) << ' ';
        for (int i = static_cast<int>(b.x.size()) - 1; i >= 0; --i)
            out << fmt(px(b.x[i])) << ',' << fmt(py(b.lower[i])) << ' ';
        out << "\"/>\n";
    }
    for (const auto& l : lines_) {
        out << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"1.6\"";
        if (l.dashed) out << " stroke-dasharray=\"6,4\"";
        out << " points=\"";
        for (int i = 0; i < l.x.size(); ++i) {
            const double x = std::isfinite(l.x[i]) ? l.x[i] : (l.x[i] < 0 ? x_min : x_max);
            out << fmt(px(x)) << ',' << fmt(py(l.y[i])) << ' ';
        }
        out << "\"/>\n";
    }
    for (const auto& p : points_) {
        for (int i = 0; i < p.x.size(); ++i)
            out << "<circle cx=\"" << fmt(px(p.x[i])) << "\" cy=\"" << fmt(py(p.y[i]))
                << "\" r=\"2.4\" fill=\"" << p.color << "\"/>\n";
    }

    // axes
    out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
        << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
        << kWidth - kRight << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    const double xs = tick_step(x_max - x_min);
    for (double t = std::ceil(x_min / xs) * xs; t <= x_max + 1e-9 * xs; t += xs) {
        out << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
            << fmt(px(t)) << "\" y2=\"" << kHeight - kBottom + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(px(t)) << "\" y=\"" << kHeight - kBottom + 20
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
            << "</text>\n";
    }
    const double ys = tick_step(y_max - y_min);
    for (double t = std::ceil(y_min / ys) * ys; t <= y_max + 1e-9 * ys; t += ys) {
        out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << kLeft
            << "\" y2=\"" << fmt(py(t)) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(t) + 4)
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
            << "</text>\n";
    }
    out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << x_label_
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
        << "transform=\"rotate(-90 16 " << (kTop + kHeight - kBottom) / 2 << ")\">" << y_label_
        << "</text>\n";

    // legend
    double ly = kTop + 8;
    auto legend_entry = [&](const std::string& color, const std::string& label) {
        if (label.empty()) return;
        out << "<rect x=\"" << kWidth - kRight - 170 << "\" y=\"" << ly - 9
            << "\" width=\"14\" height=\"10\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << kWidth - kRight - 150 << "\" y=\"" << ly
            << "\" font-size=\"11\" font-family=\"sans-serif\">" << label << "</text>\n";
        ly += 16;
    };
    for (const auto& b : bands_) legend_entry(b.color, b.label);
    for (const auto& l : lines_) legend_entry(l.color, l.label);
    for (const auto& p : points_) legend_entry(p.color, p.label);

    out << "</svg>\n";
}

}  // namespace unfold
