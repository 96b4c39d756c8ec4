#include "softctrl/svg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace softctrl {

namespace {

constexpr double kWidth = 760, kHeight = 580;
constexpr double kMapCx = 380, kMapCy = 200, kMapHalf = 180;
constexpr double kStripLeft = 40, kStripRight = 740;
constexpr double kStripTop = 420, kStripBottom = 560;

void check_trials(const std::vector<RolloutLog>& trials) {
  if (trials.empty()) throw std::invalid_argument("plot: no trials");
  for (const RolloutLog& log : trials) {
    validate(log);
    if (log.records.size() != trials.front().records.size())
      throw std::invalid_argument("plot: trials differ in length");
  }
}

double error_axis_max(const std::vector<RolloutLog>& trials) {
  double m = 0.0;
  for (const RolloutLog& log : trials)
    for (const StepRecord& rec : log.records)
      m = std::max(m, rec.per_step_error);
  return std::max(m, 1e-9);
}

double strip_x(std::size_t i, std::size_t n) {
  if (n < 2) return kStripLeft;
  return kStripLeft + (kStripRight - kStripLeft) * static_cast<double>(i) /
                          static_cast<double>(n - 1);
}

double strip_y(double error, double axis_max) {
  return kStripBottom - (kStripBottom - kStripTop) * error / axis_max;
}

}  // namespace

std::string error_band_points(const std::vector<RolloutLog>& trials) {
  check_trials(trials);
  const std::size_t n = trials.front().records.size();
  const double axis_max = error_axis_max(trials);
  std::ostringstream out;
  for (std::size_t i = 0; i < n; ++i) {
    double hi = trials.front().records[i].per_step_error;
    for (const RolloutLog& log : trials)
      hi = std::max(hi, log.records[i].per_step_error);
    if (i) out << ' ';
    out << format_fixed3(strip_x(i, n)) << ',' << format_fixed3(strip_y(hi, axis_max));
  }
  for (std::size_t r = n; r-- > 0;) {
    double lo = trials.front().records[r].per_step_error;
    for (const RolloutLog& log : trials)
      lo = std::min(lo, log.records[r].per_step_error);
    out << ' ' << format_fixed3(strip_x(r, n)) << ','
        << format_fixed3(strip_y(lo, axis_max));
  }
  return out.str();
}

void emit_plot(const std::vector<RolloutLog>& trials, const std::string& path) {
  check_trials(trials);
  const RolloutLog& first = trials.front();
  const std::size_t n = first.records.size();
  const double scale = kMapHalf / (0.75 * first.workspace_length);
  const auto map_x = [&](double x) { return kMapCx + x * scale; };
  const auto map_y = [&](double y) { return kMapCy - y * scale; };
  const double axis_max = error_axis_max(trials);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"20\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\" "
         "fill=\"#333333\">"
      << first.plant_id << " / " << first.controller_id << " / "
      << first.trajectory.name << " / cfg " << first.config_hash << " / "
      << trials.size() << " trial" << (trials.size() == 1 ? "" : "s")
      << "</text>\n";

  // Per-trial achieved sample cloud.
  for (const RolloutLog& log : trials) {
    for (const StepRecord& rec : log.records) {
      svg << "<circle cx=\"" << format_fixed3(map_x(rec.achieved.x))
          << "\" cy=\"" << format_fixed3(map_y(rec.achieved.y))
          << "\" r=\"1.5\" fill=\"#777777\" fill-opacity=\"0.25\"/>\n";
    }
  }
  // Target path.
  svg << "<polyline fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1.5\" "
         "points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) svg << ' ';
    const Position2& t = first.records[i].target;
    svg << format_fixed3(map_x(t.x)) << ',' << format_fixed3(map_y(t.y));
  }
  svg << "\"/>\n";
  // Mean achieved path across trials.
  svg << "<polyline fill=\"none\" stroke=\"#ee7733\" stroke-width=\"1.2\" "
         "points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    double sx = 0.0, sy = 0.0;
    for (const RolloutLog& log : trials) {
      sx += log.records[i].achieved.x;
      sy += log.records[i].achieved.y;
    }
    const auto count = static_cast<double>(trials.size());
    if (i) svg << ' ';
    svg << format_fixed3(map_x(sx / count)) << ','
        << format_fixed3(map_y(sy / count));
  }
  svg << "\"/>\n";

  // Error strip: min-max band plus mean line.
  svg << "<line x1=\"" << kStripLeft << "\" y1=\"" << kStripBottom
      << "\" x2=\"" << kStripRight << "\" y2=\"" << kStripBottom
      << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  svg << "<polygon fill=\"#88ccee\" fill-opacity=\"0.6\" stroke=\"none\" "
         "points=\""
      << error_band_points(trials) << "\"/>\n";
  svg << "<polyline fill=\"none\" stroke=\"#cc3311\" stroke-width=\"1\" "
         "points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const RolloutLog& log : trials) s += log.records[i].per_step_error;
    if (i) svg << ' ';
    svg << format_fixed3(strip_x(i, n)) << ','
        << format_fixed3(strip_y(s / static_cast<double>(trials.size()), axis_max));
  }
  svg << "\"/>\n";
  svg << "<text x=\"" << kStripLeft << "\" y=\"" << kStripTop - 6
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">"
         "error / workspace fraction, axis max "
      << format_fixed3(axis_max) << "</text>\n";
  svg << "<text x=\"" << (kStripLeft + kStripRight) / 2 << "\" y=\""
      << kHeight - 4
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">"
         "step</text>\n";
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << svg.str();
  if (!out) throw std::runtime_error("failed writing: " + path);
}

}  // namespace softctrl
