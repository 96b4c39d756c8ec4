#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softctrl/baseline.hpp"
#include "softctrl/core.hpp"
#include "softctrl/hybrid.hpp"
#include "softctrl/lstm.hpp"
#include "softctrl/plant.hpp"

namespace softctrl {

struct PlantChoice {
  enum class Kind { kNominal, kRotated, kPerturbed };
  Kind kind = Kind::kNominal;
  int quarter_turns = 1;         // rotated: 1..3 CCW quarter turns
  double severity = 0.15;        // perturbed: relative parameter spread
  std::uint64_t unit_seed = 1;   // perturbed: which unit of the family
};

struct ControllerChoice {
  enum class Kind { kLstm, kKinematics, kHybrid };
  Kind kind = Kind::kHybrid;
  HybridConfig hybrid;  // weight/schedule; endpoints are forced for the
                        // single-controller kinds
};

struct ExperimentConfig {
  PlantChoice plant;
  ControllerChoice controller;
  char trajectory = 'A';  // 'A' or 'B'
  int step_count = 400;
  double control_period = 0.3;  // seconds per control tick
  int trials = 3;
  std::uint64_t seed = 0;
  std::string weights_path;
  std::string output_dir;
};

void validate(const ExperimentConfig& cfg);

// JSON round-trip. Unknown keys are rejected so config typos fail loudly;
// absent keys keep their defaults. The hash covers every field that can
// change results (the output directory is excluded).
std::string to_json_text(const ExperimentConfig& cfg);
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_hash(const ExperimentConfig& cfg);

std::string plant_id(const PlantChoice& choice);
std::string controller_id(const ControllerChoice& choice);

// Concrete plant for a choice: rotation or perturbation applied to the
// nominal family, the transport delay rescaled to the control period (the
// physical dead time is a plant property, not a controller one), and the
// given noise seed installed.
PlantParams make_plant(const PlantChoice& choice, double control_period,
                       std::uint64_t noise_seed);

// The blend policy a controller choice boils down to: kLstm pins weight 0,
// kKinematics pins weight 1, kHybrid passes its config through. All three
// run the same stepping path.
HybridConfig resolve_controller(const ControllerChoice& choice);

struct RolloutResult {
  std::vector<RolloutLog> trials;
  Metric aggregate;  // pooled per-step errors over all trials
};

// Closed-loop trajectory following: per trial, a fresh plant is warmed up
// with history_len + delay zero-command ticks (never logged), then each tick
// feeds the controller the next waypoint and the latest sensed position.
RolloutResult run_rollout(const ExperimentConfig& cfg, const LstmNetF& net);
RolloutResult run_rollout(const ExperimentConfig& cfg);  // loads weights_path

struct MatrixCell {
  std::string family;      // "alpha" (rotations) | "beta" (perturbed units)
  std::string controller;  // "lstm" | "hybrid"
  Metric a, b;  // per trajectory, pooled over 3 variants x trials rollouts
};

struct MatrixReport {
  std::vector<MatrixCell> rows;  // alpha-lstm, alpha-hybrid, beta-lstm, beta-hybrid
  int rollouts_per_cell = 0;
};

// Interchangeability protocol: rotations {1,2,3} and perturbed units
// {1,2,3} at the base config's severity, each under both controllers and
// both trajectories, plant noise paired between the two controllers.
MatrixReport run_interchangeability_matrix(const ExperimentConfig& base,
                                           const LstmNetF& net);

struct SweepRow {
  std::string family;   // "alpha" | "beta"
  std::string variant;  // "freq4" | "freq2.5" | "steps300" | "steps500" | "nominal"
  double control_period = 0.3;
  int step_count = 400;
  Metric metric;
};

struct SweepReport {
  std::vector<SweepRow> rows;       // 8: family x variant
  std::vector<SweepRow> reference;  // 2: nominal condition per family
};

// Control-rate and step-count variants under the hybrid controller; the
// trained network is frequency-blind, only the plant timing changes.
SweepReport run_adaptation_sweep(const ExperimentConfig& base,
                                 const LstmNetF& net);

struct AblationRow {
  std::string kind = "switch";  // "switch" | "reference"
  int switch_step = -1;         // -1 for the never-switched reference
  Metric metric;
  double final50_mean = 0.0;  // pooled mean error over the last 50 steps
};

struct AblationReport {
  std::vector<AblationRow> rows;  // switch rows ascending, then reference
  std::vector<std::vector<RolloutLog>> logs;  // per row, the trial logs
};

// Hybrid until the switch step, pure kinematics after; the reference row
// never switches. Plant noise is shared across rows so pre-switch segments
// are identical.
AblationReport run_ablation(const ExperimentConfig& base,
                            const std::vector<int>& switch_steps,
                            const LstmNetF& net);

// 25-robot arm comparison (delegates to grid_sweep).
GridResult run_baseline_comparison(std::uint64_t seed, int step_count = 400,
                                   int trials = 3);

void save_matrix_csv(const MatrixReport& report, const std::string& path);
void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);
void save_ablation_csv(const AblationReport& report, const std::string& path);
void save_baseline_report_csv(const GridResult& grid, const std::string& path);
void save_metric_csv(const Metric& metric, const std::string& condition,
                     const std::string& hash, const std::string& path);

}  // namespace softctrl
