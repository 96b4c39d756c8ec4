#include "softctrl/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <system_error>

namespace softctrl {

double distance(const Position2& a, const Position2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

Actuation2 clamp_unit(const Actuation2& a) {
  return {clamp_unit(a.u1), clamp_unit(a.u2)};
}

void validate(const TrajectorySpec& spec, double workspace_length) {
  if (spec.waypoints.empty())
    throw std::invalid_argument("trajectory '" + spec.name + "': no waypoints");
  if (spec.step_count != static_cast<int>(spec.waypoints.size()))
    throw std::invalid_argument("trajectory '" + spec.name +
                                "': step_count does not match waypoint count");
  if (!(spec.control_period > 0.0))
    throw std::invalid_argument("trajectory '" + spec.name +
                                "': control_period must be positive");
  if (!(workspace_length > 0.0))
    throw std::invalid_argument("workspace_length must be positive");
  const double max_gap = 0.05 * workspace_length;
  const std::size_t n = spec.waypoints.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = distance(spec.waypoints[i], spec.waypoints[(i + 1) % n]);
    if (gap > max_gap)
      throw std::invalid_argument("trajectory '" + spec.name +
                                  "': waypoint gap exceeds 5% of workspace");
  }
}

StepRecord make_step_record(int step, const Position2& target,
                            const Position2& achieved,
                            const Actuation2& command,
                            double workspace_length) {
  if (!(workspace_length > 0.0))
    throw std::invalid_argument("make_step_record: workspace_length <= 0");
  StepRecord rec;
  rec.step = step;
  rec.target = target;
  rec.achieved = achieved;
  rec.command = command;
  rec.per_step_error = distance(target, achieved) / workspace_length;
  return rec;
}

namespace {

void check_sane(const Position2& p, double workspace_length, const char* what) {
  const double bound = 1.5 * 0.5 * workspace_length;
  if (!(std::abs(p.x) <= bound) || !(std::abs(p.y) <= bound)) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "%s position (%g, %g) outside sanity bound %g", what, p.x,
                  p.y, bound);
    throw std::domain_error(buf);
  }
}

}  // namespace

void RolloutLog::append(const StepRecord& rec) {
  if (!(workspace_length > 0.0))
    throw std::logic_error("RolloutLog::append: workspace_length not set");
  if (!diagnostics.empty())
    throw std::logic_error("RolloutLog::append: log carries diagnostics");
  check_sane(rec.target, workspace_length, "target");
  check_sane(rec.achieved, workspace_length, "achieved");
  records.push_back(rec);
}

void RolloutLog::append(const StepRecord& rec, const StepDiagnostics& diag) {
  if (!(workspace_length > 0.0))
    throw std::logic_error("RolloutLog::append: workspace_length not set");
  if (diagnostics.size() != records.size())
    throw std::logic_error("RolloutLog::append: diagnostics misaligned");
  check_sane(rec.target, workspace_length, "target");
  check_sane(rec.achieved, workspace_length, "achieved");
  records.push_back(rec);
  diagnostics.push_back(diag);
}

void validate(const RolloutLog& log) {
  if (static_cast<int>(log.records.size()) != log.trajectory.step_count)
    throw std::logic_error("rollout log record count (" +
                           std::to_string(log.records.size()) +
                           ") does not match trajectory step_count (" +
                           std::to_string(log.trajectory.step_count) + ")");
}

Metric score_errors(const std::vector<double>& errors) {
  if (errors.empty()) throw std::invalid_argument("score: no errors");
  double sum = 0.0, worst = 0.0;
  for (double e : errors) {
    sum += e;
    worst = std::max(worst, e);
  }
  const double n = static_cast<double>(errors.size());
  Metric m;
  m.mean_error = sum / n;
  // Two-pass population variance: immune to the cancellation that makes the
  // one-pass form report nonzero spread for identical samples.
  double sq = 0.0;
  for (double e : errors) sq += (e - m.mean_error) * (e - m.mean_error);
  m.std_error = std::sqrt(sq / n);
  m.max_error = worst;
  return m;
}

Metric score(const RolloutLog& log) {
  if (log.records.empty())
    throw std::invalid_argument("score: empty rollout log");
  std::vector<double> errors;
  errors.reserve(log.records.size());
  for (const StepRecord& rec : log.records) errors.push_back(rec.per_step_error);
  return score_errors(errors);
}

std::string format_full(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc())
    throw std::runtime_error("format_full: conversion failed");
  return std::string(buf, ptr);
}

std::string format_fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // Normalize negative zero so output never depends on rounding direction.
  if (std::string_view(buf) == "-0.000") return "0.000";
  return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

const char* const kBaseHeader =
    "step,target_x,target_y,achieved_x,achieved_y,u1,u2,error";
const char* const kDiagHeader =
    ",a_k1,a_k2,a_lstm1,a_lstm2,w,k11,k12,k21,k22";

double parse_double(std::string_view field, int line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    std::ostringstream msg;
    msg << "rollout csv line " << line_no << ": bad number '" << field << "'";
    throw std::runtime_error(msg.str());
  }
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

void save_csv(const RolloutLog& log, std::ostream& out) {
  out << "# trajectory=" << log.trajectory.name << '\n';
  out << "# plant=" << log.plant_id << '\n';
  out << "# controller=" << log.controller_id << '\n';
  out << "# seed=" << log.seed << '\n';
  out << "# config_hash=" << log.config_hash << '\n';
  out << "# workspace_length=" << format_full(log.workspace_length) << '\n';
  out << "# control_period=" << format_full(log.trajectory.control_period)
      << '\n';
  const bool diag = !log.diagnostics.empty();
  if (diag && log.diagnostics.size() != log.records.size())
    throw std::logic_error("save_csv: diagnostics misaligned");
  out << kBaseHeader;
  if (diag) out << kDiagHeader;
  out << '\n';
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const StepRecord& r = log.records[i];
    out << r.step << ',' << format_full(r.target.x) << ','
        << format_full(r.target.y) << ',' << format_full(r.achieved.x) << ','
        << format_full(r.achieved.y) << ',' << format_full(r.command.u1) << ','
        << format_full(r.command.u2) << ',' << format_full(r.per_step_error);
    if (diag) {
      const StepDiagnostics& d = log.diagnostics[i];
      out << ',' << format_full(d.kin_command.u1) << ','
          << format_full(d.kin_command.u2) << ','
          << format_full(d.lstm_command.u1) << ','
          << format_full(d.lstm_command.u2) << ',' << format_full(d.weight);
      for (double k : d.k) out << ',' << format_full(k);
    }
    out << '\n';
  }
}

void save_csv(const RolloutLog& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  save_csv(log, f);
  if (!f) throw std::runtime_error("write failed: " + path);
}

RolloutLog load_rollout_csv(std::istream& in) {
  RolloutLog log;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  bool diag = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string_view body = std::string_view(line).substr(1);
      const std::size_t eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      std::string key(body.substr(0, eq));
      key.erase(0, key.find_first_not_of(' '));
      const std::string value(body.substr(eq + 1));
      if (key == "trajectory") log.trajectory.name = value;
      else if (key == "plant") log.plant_id = value;
      else if (key == "controller") log.controller_id = value;
      else if (key == "seed") log.seed = std::stoull(value);
      else if (key == "config_hash") log.config_hash = value;
      else if (key == "workspace_length")
        log.workspace_length = parse_double(value, line_no);
      else if (key == "control_period")
        log.trajectory.control_period = parse_double(value, line_no);
      continue;
    }
    if (!header_seen) {
      if (line == kBaseHeader) diag = false;
      else if (line == std::string(kBaseHeader) + kDiagHeader) diag = true;
      else throw std::runtime_error("rollout csv: unrecognized header");
      header_seen = true;
      continue;
    }
    const auto fields = split_csv(line);
    const std::size_t expected = diag ? 17 : 8;
    if (fields.size() != expected) {
      std::ostringstream msg;
      msg << "rollout csv line " << line_no << ": expected " << expected
          << " fields, got " << fields.size();
      throw std::runtime_error(msg.str());
    }
    StepRecord r;
    r.step = static_cast<int>(parse_double(fields[0], line_no));
    r.target = {parse_double(fields[1], line_no),
                parse_double(fields[2], line_no)};
    r.achieved = {parse_double(fields[3], line_no),
                  parse_double(fields[4], line_no)};
    r.command = {parse_double(fields[5], line_no),
                 parse_double(fields[6], line_no)};
    r.per_step_error = parse_double(fields[7], line_no);
    log.records.push_back(r);
    log.trajectory.waypoints.push_back(r.target);
    if (diag) {
      StepDiagnostics d;
      d.kin_command = {parse_double(fields[8], line_no),
                       parse_double(fields[9], line_no)};
      d.lstm_command = {parse_double(fields[10], line_no),
                        parse_double(fields[11], line_no)};
      d.weight = parse_double(fields[12], line_no);
      for (int k = 0; k < 4; ++k) d.k[k] = parse_double(fields[13 + k], line_no);
      log.diagnostics.push_back(d);
    }
  }
  if (!header_seen) throw std::runtime_error("rollout csv: missing header");
  log.trajectory.step_count = static_cast<int>(log.records.size());
  return log;
}

RolloutLog load_rollout_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return load_rollout_csv(f);
}

}  // namespace softctrl
