#include "softctrl/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace softctrl {
namespace {

struct Segment {
  virtual ~Segment() = default;
  virtual double length() const = 0;
  virtual Position2 at(double s) const = 0;  // s in [0, length()]
};

struct LineSegment final : Segment {
  Position2 a, b;
  double len;
  LineSegment(Position2 a_, Position2 b_) : a(a_), b(b_), len(distance(a_, b_)) {}
  double length() const override { return len; }
  Position2 at(double s) const override {
    const double t = s / len;
    return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
  }
};

struct ArcSegment final : Segment {
  Position2 center;
  double radius, angle0, sweep;  // radians, positive sweep is CCW
  ArcSegment(Position2 c, double r, double a0, double sw)
      : center(c), radius(r), angle0(a0), sweep(sw) {}
  double length() const override { return radius * std::abs(sweep); }
  Position2 at(double s) const override {
    const double ang = angle0 + sweep * (s / length());
    return {center.x + radius * std::cos(ang),
            center.y + radius * std::sin(ang)};
  }
};

// Chord from p0 to p1 displaced along a fixed normal by amp * sin(pi * t).
// Arc length is tabulated once and inverted by linear interpolation.
struct SineBowSegment final : Segment {
  Position2 p0, chord, normal;
  double amp;
  std::vector<double> cum;  // cumulative length at t = i / (cum.size() - 1)
  SineBowSegment(Position2 start, Position2 end, Position2 unit_normal,
                 double amplitude)
      : p0(start),
        chord{end.x - start.x, end.y - start.y},
        normal(unit_normal),
        amp(amplitude) {
    constexpr int kTable = 4096;
    cum.resize(kTable + 1);
    cum[0] = 0.0;
    Position2 prev = point_at_t(0.0);
    for (int i = 1; i <= kTable; ++i) {
      const Position2 p = point_at_t(static_cast<double>(i) / kTable);
      cum[i] = cum[i - 1] + distance(prev, p);
      prev = p;
    }
  }
  Position2 point_at_t(double t) const {
    const double bow = amp * std::sin(std::numbers::pi * t);
    return {p0.x + t * chord.x + bow * normal.x,
            p0.y + t * chord.y + bow * normal.y};
  }
  double length() const override { return cum.back(); }
  Position2 at(double s) const override {
    const auto it = std::lower_bound(cum.begin(), cum.end(), s);
    if (it == cum.begin()) return point_at_t(0.0);
    if (it == cum.end()) return point_at_t(1.0);
    const std::size_t i = static_cast<std::size_t>(it - cum.begin());
    const double seg = cum[i] - cum[i - 1];
    const double frac = seg > 0.0 ? (s - cum[i - 1]) / seg : 0.0;
    const double t = (static_cast<double>(i - 1) + frac) / (cum.size() - 1);
    return point_at_t(t);
  }
};

TrajectorySpec sample_path(std::string name,
                           const std::vector<std::unique_ptr<Segment>>& path,
                           int step_count, double control_period,
                           double workspace_length) {
  if (step_count < 100)
    throw std::invalid_argument("trajectory step_count must be >= 100");
  if (!(workspace_length > 0.0))
    throw std::invalid_argument("workspace_length must be positive");
  double total = 0.0;
  for (const auto& seg : path) total += seg->length();
  TrajectorySpec spec;
  spec.name = std::move(name);
  spec.step_count = step_count;
  spec.control_period = control_period;
  spec.waypoints.reserve(step_count);
  for (int i = 0; i < step_count; ++i) {
    double s = total * static_cast<double>(i) / step_count;
    for (const auto& seg : path) {
      if (s <= seg->length()) {
        spec.waypoints.push_back(seg->at(s));
        break;
      }
      s -= seg->length();
    }
  }
  validate(spec, workspace_length);
  return spec;
}

}  // namespace

double closed_path_length(const std::vector<Position2>& waypoints) {
  if (waypoints.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    total += distance(waypoints[i], waypoints[(i + 1) % waypoints.size()]);
  return total;
}

TrajectorySpec make_trajectory_a(int step_count, double workspace_length,
                                 double control_period) {
  const double l = workspace_length;
  const double r = 0.225 * l;
  std::vector<std::unique_ptr<Segment>> path;
  path.push_back(std::make_unique<ArcSegment>(Position2{0.0, 0.0}, r, 0.0,
                                              2.0 * std::numbers::pi));
  // Square perimeter, counter-clockwise, entered at the right-edge midpoint.
  const Position2 e = {r, 0.0};
  const Position2 c1 = {r, r}, c2 = {-r, r}, c3 = {-r, -r}, c4 = {r, -r};
  path.push_back(std::make_unique<LineSegment>(e, c1));
  path.push_back(std::make_unique<LineSegment>(c1, c2));
  path.push_back(std::make_unique<LineSegment>(c2, c3));
  path.push_back(std::make_unique<LineSegment>(c3, c4));
  path.push_back(std::make_unique<LineSegment>(c4, e));
  return sample_path("A", path, step_count, control_period, l);
}

TrajectorySpec make_trajectory_b(int step_count, double workspace_length,
                                 double control_period) {
  const double l = workspace_length;
  const Position2 t0 = {-0.26 * l, -0.18 * l};
  const Position2 t1 = {0.26 * l, -0.18 * l};
  // Apex placed so the corner at t1 is exactly 60 degrees.
  const Position2 t2 = {0.0, -0.18 * l + 0.26 * l * std::sqrt(3.0)};
  // Unit normal to the closing chord t2 -> t0, pointing away from the
  // interior, so the bow widens the course instead of cutting the corner.
  const double chord_len = distance(t2, t0);
  const Position2 unit = {(t0.x - t2.x) / chord_len, (t0.y - t2.y) / chord_len};
  const Position2 outward = {unit.y, -unit.x};
  std::vector<std::unique_ptr<Segment>> path;
  path.push_back(std::make_unique<LineSegment>(t0, t1));
  path.push_back(std::make_unique<LineSegment>(t1, t2));
  path.push_back(std::make_unique<SineBowSegment>(t2, t0, outward, 0.15 * l));
  return sample_path("B", path, step_count, control_period, l);
}

}  // namespace softctrl
