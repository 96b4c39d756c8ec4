#include "softctrl/hybrid.hpp"

#include <stdexcept>
#include <string>

namespace softctrl {

void validate(const HybridConfig& config) {
  if (config.weight < 0.0 || config.weight > 1.0)
    throw std::invalid_argument("hybrid config: weight must be in [0, 1]");
  int prev = -1;
  for (const auto& [step, weight] : config.schedule) {
    if (step < 0)
      throw std::invalid_argument("hybrid config: schedule steps must be >= 0");
    if (step <= prev)
      throw std::invalid_argument(
          "hybrid config: schedule steps must be strictly increasing");
    if (weight < 0.0 || weight > 1.0)
      throw std::invalid_argument(
          "hybrid config: schedule weights must be in [0, 1]");
    prev = step;
  }
}

double effective_weight(const HybridConfig& config, int step) {
  double w = config.weight;
  for (const auto& [first_step, weight] : config.schedule) {
    if (step >= first_step)
      w = weight;
    else
      break;
  }
  return w;
}

Actuation2 blend(const Actuation2& kin_command, const Actuation2& lstm_command,
                 double weight) {
  if (weight < 0.0 || weight > 1.0)
    throw std::invalid_argument("blend: weight must be in [0, 1], got " +
                                std::to_string(weight));
  // The trailing + 0.0 collapses a negative zero so the logged command text
  // is identical whichever endpoint produced it.
  const double u1 = weight * kin_command.u1 + (1.0 - weight) * lstm_command.u1 + 0.0;
  const double u2 = weight * kin_command.u2 + (1.0 - weight) * lstm_command.u2 + 0.0;
  return {clamp_unit(u1), clamp_unit(u2)};
}

Actuation2 hybrid_step(KinematicsState& kin, const LstmNetF& net,
                       const HybridConfig& config, int step,
                       const Position2& target,
                       const std::vector<HistoryItem>& history,
                       StepDiagnostics* diagnostics) {
  if (step < 0) throw std::invalid_argument("hybrid_step: step must be >= 0");
  if (history.empty())
    throw std::invalid_argument("hybrid_step: history must not be empty");
  const double weight = effective_weight(config, step);
  push_observation(kin, history.back().position, history.back().prior_command);
  update_k(kin);
  const Actuation2 kin_command = solve_actuation(kin, target);
  const Actuation2 lstm_command = predict_actuation(net, target, history);
  const Actuation2 command = blend(kin_command, lstm_command, weight);
  if (diagnostics) {
    diagnostics->kin_command = kin_command;
    diagnostics->lstm_command = lstm_command;
    diagnostics->weight = weight;
    diagnostics->k[0] = kin.k(0, 0);
    diagnostics->k[1] = kin.k(0, 1);
    diagnostics->k[2] = kin.k(1, 0);
    diagnostics->k[3] = kin.k(1, 1);
  }
  return command;
}

}  // namespace softctrl
