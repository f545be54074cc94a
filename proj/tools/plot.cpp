#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace psmpc::plot {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string Fmt(double v, const char* f = "%.6g") {
  char buf[40];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// Round-number tick positions covering [lo, hi].
std::vector<double> Ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) {
    out.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  }
  return out;
}

}  // namespace

std::string ToSvg(const Figure& fig, int width, int height) {
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  for (const Series& s : fig.series) {
    for (double v : s.x) {
      x_lo = std::min(x_lo, v);
      x_hi = std::max(x_hi, v);
    }
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  }
  if (!std::isfinite(x_lo)) x_lo = 0.0, x_hi = 1.0;
  if (!std::isfinite(y_lo)) y_lo = 0.0, y_hi = 1.0;
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi - y_lo < 1e-12 * std::max(1.0, std::abs(y_hi))) {
    y_lo -= 0.5;
    y_hi += 0.5;
  } else {
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;
  }

  const double left = 80, right = 160, top = 40, bottom = 50;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto X = [&](double v) { return left + (v - x_lo) / (x_hi - x_lo) * pw; };
  auto Y = [&](double v) { return top + (y_hi - v) / (y_hi - y_lo) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << Escape(fig.title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double t : Ticks(x_lo, x_hi)) {
    os << "<line x1=\"" << Fmt(X(t)) << "\" y1=\"" << top + ph << "\" x2=\"" << Fmt(X(t))
       << "\" y2=\"" << top << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << Fmt(X(t)) << "\" y=\"" << top + ph + 16
       << "\" text-anchor=\"middle\">" << Fmt(t, "%g") << "</text>\n";
  }
  if (!fig.y_categories.empty()) {
    for (std::size_t k = 0; k < fig.y_categories.size(); ++k) {
      const double v = static_cast<double>(k);
      if (v < y_lo || v > y_hi) continue;
      os << "<line x1=\"" << left << "\" y1=\"" << Fmt(Y(v)) << "\" x2=\"" << left + pw
         << "\" y2=\"" << Fmt(Y(v)) << "\" stroke=\"#ddd\"/>\n";
      os << "<text x=\"" << left - 6 << "\" y=\"" << Fmt(Y(v) + 4)
         << "\" text-anchor=\"end\">" << Escape(fig.y_categories[k]) << "</text>\n";
    }
  } else {
    for (double t : Ticks(y_lo, y_hi)) {
      os << "<line x1=\"" << left << "\" y1=\"" << Fmt(Y(t)) << "\" x2=\"" << left + pw
         << "\" y2=\"" << Fmt(Y(t)) << "\" stroke=\"#ddd\"/>\n";
      os << "<text x=\"" << left - 6 << "\" y=\"" << Fmt(Y(t) + 4)
         << "\" text-anchor=\"end\">" << Fmt(t, "%g") << "</text>\n";
    }
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\">" << Escape(fig.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << top + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(fig.y_label) << "</text>\n";

  for (std::size_t k = 0; k < fig.series.size(); ++k) {
    const Series& s = fig.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < s.x.size() && j < s.y.size(); ++j) {
      if (s.step && j > 0) os << Fmt(X(s.x[j])) << "," << Fmt(Y(s.y[j - 1])) << " ";
      os << Fmt(X(s.x[j])) << "," << Fmt(Y(s.y[j])) << " ";
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
       << left + pw + 32 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << Escape(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string ToCsv(const Figure& fig) {
  std::ostringstream os;
  os << "t";
  for (const Series& s : fig.series) os << "," << s.name;
  os << "\n";
  if (fig.series.empty()) return os.str();
  const std::vector<double>& x = fig.series.front().x;
  for (const Series& s : fig.series) {
    if (s.x != x || s.y.size() != x.size()) {
      throw std::invalid_argument("plot series must share their x samples");
    }
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    os << Fmt(x[j], "%.17g");
    for (const Series& s : fig.series) os << "," << Fmt(s.y[j], "%.17g");
    os << "\n";
  }
  return os.str();
}

}  // namespace psmpc::plot
