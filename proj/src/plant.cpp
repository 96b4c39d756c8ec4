#include "softctrl/plant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "softctrl/rng.hpp"

namespace softctrl {

void validate(const PlantParams& p) {
  if (!(p.gain_x > 0.0) || !(p.gain_y > 0.0))
    throw std::invalid_argument("plant: gains must be positive");
  for (double a : p.asymmetry)
    if (!(a >= 0.5 && a <= 1.5))
      throw std::invalid_argument("plant: asymmetry entries must be in [0.5, 1.5]");
  if (p.sign_x * p.sign_x != 1 || p.sign_y * p.sign_y != 1)
    throw std::invalid_argument("plant: channel signs must be +-1");
  if (p.delay_steps < 0 || p.delay_steps > 3)
    throw std::invalid_argument("plant: delay_steps must be in 0..3");
  if (!(p.time_constant > 0.0))
    throw std::invalid_argument("plant: time_constant must be positive");
  if (!(p.saturation_softness > 0.0))
    throw std::invalid_argument("plant: saturation_softness must be positive");
  if (!(p.noise_std >= 0.0))
    throw std::invalid_argument("plant: noise_std must be >= 0");
  if (!(p.pressure_cap > 0.0))
    throw std::invalid_argument("plant: pressure_cap must be positive");
}

PlantState init_state(const PlantParams& params) {
  validate(params);
  PlantState s;
  s.lag = {0.0, 0.0};
  s.active = {0.0, 0.0};
  s.queue.assign(static_cast<std::size_t>(params.delay_steps), Actuation2{});
  s.rng.seed(params.seed);
  return s;
}

namespace {

// Normalized so full command reaches exactly the gain: sat(1) = 1.
double saturate(double u, double softness) {
  return std::tanh(softness * u) / std::tanh(softness);
}

}  // namespace

Position2 static_response(const PlantParams& params, const Actuation2& command) {
  const Actuation2 c = clamp_unit(command);
  const double vx = params.sign_x * (params.swap_channels ? c.u2 : c.u1);
  const double vy = params.sign_y * (params.swap_channels ? c.u1 : c.u2);
  const double ax = params.asymmetry[vx >= 0.0 ? 0 : 1];
  const double ay = params.asymmetry[vy >= 0.0 ? 2 : 3];
  return {params.gain_x * ax * saturate(vx, params.saturation_softness),
          params.gain_y * ay * saturate(vy, params.saturation_softness)};
}

Position2 step(PlantState& state, const PlantParams& params,
               const Actuation2& command, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("plant step: dt must be positive");
  const Position2 d = static_response(params, state.active);
  const double keep = std::exp(-dt / params.time_constant);
  state.lag.x = d.x + (state.lag.x - d.x) * keep;
  state.lag.y = d.y + (state.lag.y - d.y) * keep;
  const Actuation2 incoming = clamp_unit(command);
  if (state.queue.empty()) {
    state.active = incoming;
  } else {
    state.active = state.queue.front();
    state.queue.erase(state.queue.begin());
    state.queue.push_back(incoming);
  }
  Position2 sensed = state.lag;
  if (params.noise_std > 0.0) {
    const auto [nx, ny] = gaussian_pair(state.rng);
    sensed.x += params.noise_std * nx;
    sensed.y += params.noise_std * ny;
  }
  return sensed;
}

PlantParams nominal_plant(std::uint64_t seed) {
  PlantParams p;
  // Full x span = gain * (asym[+x] + asym[-x]) = 60.94 mm; same for y.
  p.gain_x = 60.94 / 1.88;
  p.gain_y = 60.94 / 1.88;
  p.asymmetry = {1.0, 0.88, 0.88, 1.0};  // left (-x) and top (+y) harder
  p.swap_channels = false;
  p.sign_x = 1;
  p.sign_y = 1;
  p.time_constant = 0.15;
  p.delay_steps = 1;
  p.saturation_softness = 1.2;
  p.noise_std = 0.25;
  p.pressure_cap = 0.5;
  p.seed = seed;
  return p;
}

PlantParams rotate_configuration(const PlantParams& params, int quarter_turns) {
  if (quarter_turns < 1 || quarter_turns > 3)
    throw std::invalid_argument("rotate_configuration: quarter_turns must be 1..3");
  PlantParams p = params;
  for (int t = 0; t < quarter_turns; ++t) {
    // One counter-clockwise quarter turn: the new x axis carries what the
    // old -y direction produced, the new y axis what the old +x produced.
    PlantParams n = p;
    n.gain_x = p.gain_y;
    n.gain_y = p.gain_x;
    n.swap_channels = !p.swap_channels;
    n.sign_x = -p.sign_y;
    n.sign_y = p.sign_x;
    n.asymmetry = {p.asymmetry[3], p.asymmetry[2], p.asymmetry[0],
                   p.asymmetry[1]};
    p = n;
  }
  return p;
}

PlantParams perturb_unit(const PlantParams& params, double severity,
                         std::uint64_t seed) {
  if (!(severity >= 0.0 && severity <= 0.5))
    throw std::invalid_argument("perturb_unit: severity must be in [0, 0.5]");
  PlantParams p = params;
  if (severity == 0.0) return p;
  std::mt19937_64 rng(seed);
  const auto factor = [&] {
    return uniform_in(rng, 1.0 - severity, 1.0 + severity);
  };
  p.gain_x *= factor();
  p.gain_y *= factor();
  for (double& a : p.asymmetry) a = std::clamp(a * factor(), 0.5, 1.5);
  p.time_constant *= factor();
  if (uniform01(rng) < severity)
    p.delay_steps = std::min(p.delay_steps + 1, 3);
  p.seed = mix_seed(seed);
  return p;
}

double workspace_length(const PlantParams& params) {
  const double span_x = params.gain_x * (params.asymmetry[0] + params.asymmetry[1]);
  const double span_y = params.gain_y * (params.asymmetry[2] + params.asymmetry[3]);
  return std::max(span_x, span_y);
}

int delay_steps_for_period(double control_period) {
  if (!(control_period > 0.0))
    throw std::invalid_argument("delay_steps_for_period: period must be positive");
  const int steps = static_cast<int>(std::lround(0.3 / control_period));
  return std::clamp(steps, 0, 3);
}

std::string params_to_json(const PlantParams& p) {
  nlohmann::json j;
  j["format"] = "plant-params";
  j["version"] = 1;
  j["gain_x"] = p.gain_x;
  j["gain_y"] = p.gain_y;
  j["asymmetry"] = p.asymmetry;
  j["swap_channels"] = p.swap_channels;
  j["sign_x"] = p.sign_x;
  j["sign_y"] = p.sign_y;
  j["time_constant"] = p.time_constant;
  j["delay_steps"] = p.delay_steps;
  j["saturation_softness"] = p.saturation_softness;
  j["noise_std"] = p.noise_std;
  j["pressure_cap"] = p.pressure_cap;
  j["seed"] = p.seed;
  return j.dump(2);
}

PlantParams params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("plant params: bad json: ") + e.what());
  }
  if (j.value("format", "") != "plant-params")
    throw std::runtime_error("plant params: missing or wrong format tag");
  if (j.value("version", 0) != 1)
    throw std::runtime_error("plant params: unsupported version");
  PlantParams p;
  try {
    p.gain_x = j.at("gain_x").get<double>();
    p.gain_y = j.at("gain_y").get<double>();
    p.asymmetry = j.at("asymmetry").get<std::array<double, 4>>();
    p.swap_channels = j.at("swap_channels").get<bool>();
    p.sign_x = j.at("sign_x").get<int>();
    p.sign_y = j.at("sign_y").get<int>();
    p.time_constant = j.at("time_constant").get<double>();
    p.delay_steps = j.at("delay_steps").get<int>();
    p.saturation_softness = j.at("saturation_softness").get<double>();
    p.noise_std = j.at("noise_std").get<double>();
    p.pressure_cap = j.at("pressure_cap").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("plant params: missing field: ") +
                             e.what());
  }
  validate(p);
  return p;
}

}  // namespace softctrl
