#pragma once

#include <utility>
#include <vector>

#include "softctrl/core.hpp"
#include "softctrl/kincontrol.hpp"
#include "softctrl/lstm.hpp"

namespace softctrl {

// Blend weight policy: `weight` is the kinematics-controller share; an
// optional staircase schedule of (first_step, weight) rows overrides it from
// each row's step onward.
struct HybridConfig {
  double weight = 0.1;
  std::vector<std::pair<int, double>> schedule;
};

void validate(const HybridConfig& config);

double effective_weight(const HybridConfig& config, int step);

// w * kin + (1 - w) * lstm, componentwise, clamped to [-1, 1]. At w == 0 or
// w == 1 the arithmetic reduces to the surviving command exactly, so the
// endpoint controllers are the blend itself, not separate code paths.
Actuation2 blend(const Actuation2& kin_command, const Actuation2& lstm_command,
                 double weight);

// One control decision. `history` is chronological — back() holds the
// newest (sensed position, command issued one step earlier) pair, which is
// pushed into the kinematics window here before the map is refit and solved
// for the target; the network sees the whole window. Diagnostics (when
// requested) record both raw commands, the weight, and the fitted map.
Actuation2 hybrid_step(KinematicsState& kin, const LstmNetF& net,
                       const HybridConfig& config, int step,
                       const Position2& target,
                       const std::vector<HistoryItem>& history,
                       StepDiagnostics* diagnostics = nullptr);

}  // namespace softctrl
