#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "softctrl/core.hpp"

namespace softctrl {

// Simulated planar soft unit: per-axis saturating gains with direction-
// dependent asymmetry, a configurable channel-to-axis hookup (which command
// drives which world axis, and with what polarity), first-order lag, a pure
// command delay, and additive Gaussian sensor noise on the output.
struct PlantParams {
  double gain_x = 0.0;  // mm reached on world +x at full command, asymmetry 1
  double gain_y = 0.0;  // mm, same for world y
  // Gain multipliers by world direction: [+x, -x, +y, -y] (right/left/front/back).
  std::array<double, 4> asymmetry = {1.0, 1.0, 1.0, 1.0};
  bool swap_channels = false;  // true: u2 drives x and u1 drives y
  int sign_x = 1;              // polarity of the command driving x
  int sign_y = 1;              // polarity of the command driving y
  double time_constant = 0.0;  // s, first-order lag
  int delay_steps = 0;         // whole control steps of command delay, <= 3
  double saturation_softness = 1.0;  // tanh shape parameter, > 0
  double noise_std = 0.0;      // mm, per-axis sensor noise
  double pressure_cap = 0.5;   // bar at |u| = 1 (metadata; commands are normalized)
  std::uint64_t seed = 0;      // noise stream seed
};

void validate(const PlantParams& p);

// Commands pass through a FIFO of delay_steps slots into an active register
// that drives the lag, so a command issued at step t first moves the output
// at step t + delay_steps + 1 (one whole step of loop latency even at
// delay_steps = 0, as with a sampled controller on real hardware).
struct PlantState {
  Position2 lag;                  // true (noise-free) position
  Actuation2 active;              // command currently driving the actuator
  std::vector<Actuation2> queue;  // FIFO, exactly delay_steps entries
  std::mt19937_64 rng;            // sensor noise stream
};

PlantState init_state(const PlantParams& params);

// Advances one control step of dt seconds and returns the sensed (noisy)
// position. Commands are clamped to [-1, 1] on entry.
Position2 step(PlantState& state, const PlantParams& params,
               const Actuation2& command, double dt);

// Noise-free steady-state displacement for a constant command.
Position2 static_response(const PlantParams& params, const Actuation2& command);

// Reference unit: ~60.94 mm square workspace with the left and top sides
// harder to reach, 0.15 s lag, one step of delay, 0.25 mm sensor noise.
PlantParams nominal_plant(std::uint64_t seed);

// Physically rotating the unit against the fixed valves by quarter_turns
// (1..3) counter-clockwise quarter turns: swaps/negates the channel-to-axis
// hookup and moves each asymmetry entry around the compass accordingly.
PlantParams rotate_configuration(const PlantParams& params, int quarter_turns);

// A unit from the same mold with manufacturing variance: gains, asymmetry
// entries, and time constant each multiplied by an independent factor drawn
// uniformly from [1 - severity, 1 + severity] (asymmetry clamped to its
// [0.5, 1.5] validity range), and the delay bumped by one step with
// probability equal to severity. Deterministic for a fixed seed.
PlantParams perturb_unit(const PlantParams& params, double severity,
                         std::uint64_t seed);

// Workspace side length implied by the params: the full x-axis span at
// saturation, max(x-span, y-span).
double workspace_length(const PlantParams& params);

// Number of delay steps that keeps the physical command delay at ~0.3 s
// when the control period changes (clamped to the valid 0..3 range).
int delay_steps_for_period(double control_period);

// Versioned JSON round-trip for pinning exact plants in experiment configs.
std::string params_to_json(const PlantParams& p);
PlantParams params_from_json(const std::string& text);

}  // namespace softctrl
