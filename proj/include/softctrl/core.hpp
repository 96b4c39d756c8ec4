#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace softctrl {

struct Position2 {
  double x = 0.0;  // mm, relative to the unactuated rest pose
  double y = 0.0;  // mm
};

struct Actuation2 {
  double u1 = 0.0;  // signed normalized command, [-1, 1]
  double u2 = 0.0;  // signed normalized command, [-1, 1]
};

double distance(const Position2& a, const Position2& b);

double clamp_unit(double v);
Actuation2 clamp_unit(const Actuation2& a);

struct TrajectorySpec {
  std::string name;                  // "A", "B", or custom
  std::vector<Position2> waypoints;  // one target per control step
  int step_count = 0;                // must equal waypoints.size()
  double control_period = 0.0;       // seconds between targets, > 0
};

// Throws std::invalid_argument unless: waypoints non-empty, step_count
// matches, control_period > 0, and consecutive waypoints (including the
// closing pair) are at most 5% of workspace_length apart.
void validate(const TrajectorySpec& spec, double workspace_length);

struct StepRecord {
  int step = 0;
  Position2 target;
  Position2 achieved;
  Actuation2 command;
  double per_step_error = 0.0;  // distance(target, achieved) / workspace_length
};

StepRecord make_step_record(int step, const Position2& target,
                            const Position2& achieved,
                            const Actuation2& command,
                            double workspace_length);

// Optional per-step controller internals, aligned with RolloutLog::records.
struct StepDiagnostics {
  Actuation2 kin_command;
  Actuation2 lstm_command;
  double weight = 0.0;                 // blend weight applied this step
  double k[4] = {1.0, 0.0, 0.0, 1.0};  // row-major 2x2 kinematics estimate
};

struct RolloutLog {
  TrajectorySpec trajectory;
  std::vector<StepRecord> records;
  std::string plant_id;
  std::string controller_id;
  std::uint64_t seed = 0;
  std::string config_hash;        // hex digest of the run configuration
  double workspace_length = 0.0;  // mm, normalizer for errors
  std::vector<StepDiagnostics> diagnostics;  // empty, or one per record

  // Enforces the position sanity bound |x|,|y| <= 1.5 * workspace_length / 2.
  void append(const StepRecord& rec);
  void append(const StepRecord& rec, const StepDiagnostics& diag);
};

// Throws std::logic_error when the record count does not match the
// trajectory's step_count (a finished rollout must cover every waypoint).
void validate(const RolloutLog& log);

struct Metric {
  double mean_error = 0.0;  // mean per-step error, fraction of workspace
  double std_error = 0.0;   // population standard deviation, same unit
  double max_error = 0.0;   // worst step, same unit
};

// Aggregates per_step_error over records. Throws on an empty log.
Metric score(const RolloutLog& log);
Metric score_errors(const std::vector<double>& errors);

// CSV round-trip. Floats are written with enough digits to restore the
// exact double, so save followed by load reproduces every value bit for bit.
void save_csv(const RolloutLog& log, std::ostream& out);
void save_csv(const RolloutLog& log, const std::string& path);
RolloutLog load_rollout_csv(std::istream& in);
RolloutLog load_rollout_csv(const std::string& path);

// FNV-1a over a canonical byte string; used to stamp reports.
std::uint64_t fnv1a(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

// Deterministic float-to-text helpers shared by every emitter.
std::string format_full(double v);    // shortest exact round-trip form
std::string format_fixed3(double v);  // %.3f, for plot coordinates

}  // namespace softctrl
