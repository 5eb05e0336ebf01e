#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "rfm/tables.hpp"

namespace rfm {

namespace detail {
inline std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round tick step: 1, 2 or 5 times a power of ten.
inline double tick_step(double range) {
  const double raw = range / 5.0, p = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0})
    if (raw <= m * p) return m * p;
  return 10.0 * p;
}
}  // namespace detail

/// Control chart: statistic against item index with the limit h as a dashed line.
/// Alarms are drawn as filled red squares, in-control items as open circles.
inline std::string render_chart_svg(const std::vector<DecisionRow>& rows, double h, const std::string& title = "") {
  if (rows.empty()) throw InvalidArgument("chart: no decisions");
  if (!std::isfinite(h)) throw InvalidArgument("chart: control limit must be finite");
  const double width = 720, height = 420, left = 70, right = 20, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  std::size_t tmax = 1;
  double ymax = h;
  for (const auto& r : rows) {
    tmax = std::max(tmax, r.t);
    if (std::isfinite(r.statistic)) ymax = std::max(ymax, r.statistic);
  }
  ymax = ymax > 0.0 ? 1.08 * ymax : 1.0;
  auto x = [&](double t) { return left + (tmax == 1 ? 0.5 : (t - 1.0) / static_cast<double>(tmax - 1)) * pw; };
  auto y = [&](double v) { return top + ph - std::clamp(v / ymax, 0.0, 1.0) * ph; };
  using detail::fixed3;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) s << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\">" << detail::xml_escape(title) << "</text>\n";
  s << "<g class=\"axes\" stroke=\"black\">\n"
    << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n</g>\n";
  const double ystep = detail::tick_step(ymax);
  for (double v = 0.0; v <= ymax + 1e-12 * ymax; v += ystep)
    s << "<text x=\"" << left - 6 << "\" y=\"" << fixed3(y(v) + 4) << "\" text-anchor=\"end\">" << format_double(v)
      << "</text>\n";
  const double tstep = std::max(1.0, std::round(detail::tick_step(static_cast<double>(tmax))));
  for (double t = 1.0; t <= static_cast<double>(tmax); t += tstep)
    s << "<text x=\"" << fixed3(x(t)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << t << "</text>\n";
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">item</text>\n";
  s << "<text transform=\"translate(16 " << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">statistic</text>\n";
  s << "<line class=\"limit\" data-h=\"" << format_double(h) << "\" x1=\"" << left << "\" y1=\"" << fixed3(y(h))
    << "\" x2=\"" << left + pw << "\" y2=\"" << fixed3(y(h)) << "\" stroke=\"red\" stroke-dasharray=\"6 4\"/>\n";
  s << "<text x=\"" << left + pw - 4 << "\" y=\"" << fixed3(y(h) - 6) << "\" text-anchor=\"end\" fill=\"red\">h = "
    << format_double(h) << "</text>\n";
  s << "<polyline fill=\"none\" stroke=\"#888\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i)
    s << (i ? " " : "") << fixed3(x(static_cast<double>(rows[i].t))) << ',' << fixed3(y(rows[i].statistic));
  s << "\"/>\n";
  for (const auto& r : rows) {
    const std::string cx = fixed3(x(static_cast<double>(r.t))), cy = fixed3(y(r.statistic));
    if (r.alarm)
      s << "<rect class=\"alarm\" data-t=\"" << r.t << "\" x=\"" << fixed3(x(static_cast<double>(r.t)) - 4) << "\" y=\""
        << fixed3(y(r.statistic) - 4) << "\" width=\"8\" height=\"8\" fill=\"red\"/>\n";
    else
      s << "<circle class=\"point\" data-t=\"" << r.t << "\" cx=\"" << cx << "\" cy=\"" << cy
        << "\" r=\"4\" fill=\"white\" stroke=\"black\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace rfm
