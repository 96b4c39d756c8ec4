#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "softctrl/plant.hpp"
#include "softctrl/rng.hpp"

using namespace softctrl;

namespace {

bool params_equal(const PlantParams& a, const PlantParams& b) {
  return a.gain_x == b.gain_x && a.gain_y == b.gain_y &&
         a.asymmetry == b.asymmetry && a.swap_channels == b.swap_channels &&
         a.sign_x == b.sign_x && a.sign_y == b.sign_y &&
         a.time_constant == b.time_constant && a.delay_steps == b.delay_steps &&
         a.saturation_softness == b.saturation_softness &&
         a.noise_std == b.noise_std && a.pressure_cap == b.pressure_cap;
}

PlantParams quiet_nominal() {
  PlantParams p = nominal_plant(0);
  p.noise_std = 0.0;
  return p;
}

std::vector<Actuation2> reference_walk(int n, double max_delta,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Actuation2> seq;
  seq.reserve(static_cast<std::size_t>(n));
  Actuation2 u;
  for (int i = 0; i < n; ++i) {
    u.u1 = clamp_unit(u.u1 + uniform_in(rng, -max_delta, max_delta));
    u.u2 = clamp_unit(u.u2 + uniform_in(rng, -max_delta, max_delta));
    seq.push_back(u);
  }
  return seq;
}

std::vector<Position2> replay(const PlantParams& params,
                              const std::vector<Actuation2>& seq) {
  PlantState state = init_state(params);
  std::vector<Position2> out;
  out.reserve(seq.size());
  for (const Actuation2& u : seq) out.push_back(step(state, params, u, 0.3));
  return out;
}

// Counter-clockwise quarter turns of the world frame.
Position2 rot90(const Position2& p, int quarter_turns) {
  Position2 r = p;
  for (int t = 0; t < quarter_turns; ++t) r = {-r.y, r.x};
  return r;
}

}  // namespace

TEST_CASE("nominal plant is seed-independent apart from the noise stream") {
  const PlantParams a = nominal_plant(1);
  const PlantParams b = nominal_plant(77);
  CHECK(params_equal(a, b));
  CHECK(a.seed == 1);
  CHECK(b.seed == 77);
  CHECK(workspace_length(a) == doctest::Approx(60.94).epsilon(1e-12));
  CHECK(a.delay_steps == 1);
  CHECK(a.noise_std == 0.25);
  CHECK(a.time_constant == doctest::Approx(0.15));
  // Left (-x) and top (+y) are the hard directions.
  CHECK(a.asymmetry[1] < a.asymmetry[0]);
  CHECK(a.asymmetry[2] < a.asymmetry[3]);
  CHECK_NOTHROW(validate(a));
}

TEST_CASE("plant parameter validation rejects bad fields") {
  PlantParams p = nominal_plant(0);
  p.gain_x = 0.0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = nominal_plant(0);
  p.asymmetry[2] = 1.6;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = nominal_plant(0);
  p.delay_steps = 4;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = nominal_plant(0);
  p.sign_x = 0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = nominal_plant(0);
  p.time_constant = 0.0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
}

TEST_CASE("rest pose is stable under zero command") {
  PlantParams p = nominal_plant(42);
  PlantState s = init_state(p);
  int within_noise = 0;
  for (int i = 0; i < 100; ++i) {
    const Position2 pos = step(s, p, {0.0, 0.0}, 0.3);
    // Pure sensor noise: tight almost always, never beyond the far tail.
    CHECK(std::abs(pos.x) <= 5.0 * p.noise_std);
    CHECK(std::abs(pos.y) <= 5.0 * p.noise_std);
    if (std::abs(pos.x) <= 3.0 * p.noise_std &&
        std::abs(pos.y) <= 3.0 * p.noise_std)
      ++within_noise;
  }
  CHECK(within_noise >= 98);
}

TEST_CASE("full positive command reaches about half the workspace diagonal") {
  const PlantParams p = quiet_nominal();
  PlantState s = init_state(p);
  Position2 pos;
  for (int i = 0; i < 200; ++i) pos = step(s, p, {1.0, 1.0}, 0.3);
  const double half_diag = 0.5 * std::hypot(60.94, 60.94);
  const double reach = std::hypot(pos.x, pos.y);
  CHECK(reach == doctest::Approx(half_diag).epsilon(0.05));
  // And it matches the closed-form steady state exactly.
  const Position2 ss = static_response(p, {1.0, 1.0});
  CHECK(pos.x == doctest::Approx(ss.x).epsilon(1e-9));
  CHECK(pos.y == doctest::Approx(ss.y).epsilon(1e-9));
}

TEST_CASE("zero command decays back to the origin") {
  const PlantParams p = quiet_nominal();
  PlantState s = init_state(p);
  for (int i = 0; i < 50; ++i) step(s, p, {0.8, -0.6}, 0.3);
  Position2 pos;
  for (int i = 0; i < 100; ++i) pos = step(s, p, {0.0, 0.0}, 0.3);
  CHECK(std::abs(pos.x) < 1e-9);
  CHECK(std::abs(pos.y) < 1e-9);
}

TEST_CASE("step response converges at the first-order-lag rate") {
  const PlantParams p = quiet_nominal();
  PlantState s = init_state(p);
  const Actuation2 cmd = {0.7, 0.4};
  const Position2 target = static_response(p, cmd);
  std::vector<double> gap;
  for (int i = 0; i < 30; ++i) {
    const Position2 pos = step(s, p, cmd, 0.3);
    gap.push_back(target.x - pos.x);
  }
  const double keep = std::exp(-0.3 / p.time_constant);
  // After the delay clears, the remaining gap shrinks by exactly exp(-dt/tau).
  // Stop once the gap is ~1e-6 of the target: below that, rounding of the
  // ~30 mm positions dominates the ratio.
  for (std::size_t i = p.delay_steps + 1; i + 1 < gap.size(); ++i) {
    if (std::abs(gap[i]) < 1e-6 * std::abs(target.x)) break;
    CHECK(gap[i + 1] / gap[i] == doctest::Approx(keep).epsilon(1e-9));
  }
}

TEST_CASE("command changes surface after the transport delay") {
  for (const int delay : {0, 1, 2, 3}) {
    CAPTURE(delay);
    PlantParams p = quiet_nominal();
    p.delay_steps = delay;
    PlantState s = init_state(p);
    int first_moved = -1;
    for (int i = 0; i < 10; ++i) {
      const Actuation2 cmd = i == 0 ? Actuation2{1.0, 0.0} : Actuation2{0.0, 0.0};
      const Position2 pos = step(s, p, cmd, 0.3);
      if (first_moved < 0 && std::abs(pos.x) > 1e-12) first_moved = i;
    }
    CHECK(first_moved == delay + 1);
  }
}

TEST_CASE("position stays inside the saturation bound for any commands") {
  const PlantParams p = quiet_nominal();
  PlantState s = init_state(p);
  const double bx = p.gain_x * std::max(p.asymmetry[0], p.asymmetry[1]);
  const double by = p.gain_y * std::max(p.asymmetry[2], p.asymmetry[3]);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    // Adversarial mix of extremes and random interior commands.
    const Actuation2 cmd = (i % 3 == 0)
                               ? Actuation2{i % 2 ? 1.0 : -1.0, i % 2 ? -1.0 : 1.0}
                               : Actuation2{uniform_in(rng, -1.0, 1.0),
                                            uniform_in(rng, -1.0, 1.0)};
    const Position2 pos = step(s, p, cmd, 0.3);
    CHECK(std::abs(pos.x) <= bx + 1e-9);
    CHECK(std::abs(pos.y) <= by + 1e-9);
  }
}

TEST_CASE("small commands move the plant in the commanded direction") {
  const PlantParams p = quiet_nominal();
  PlantState s = init_state(p);
  const Actuation2 cmd = {0.05, 0.03};
  Position2 pos;
  for (int i = 0; i < 10; ++i) pos = step(s, p, cmd, 0.3);
  CHECK(pos.x * cmd.u1 + pos.y * cmd.u2 > 0.0);
}

TEST_CASE("stepping is deterministic for a fixed noise seed") {
  const PlantParams p = nominal_plant(123);
  const auto seq = reference_walk(200, 0.2, 9);
  const auto run1 = replay(p, seq);
  const auto run2 = replay(p, seq);
  REQUIRE(run1.size() == run2.size());
  for (std::size_t i = 0; i < run1.size(); ++i) {
    CHECK(std::memcmp(&run1[i].x, &run2[i].x, sizeof(double)) == 0);
    CHECK(std::memcmp(&run1[i].y, &run2[i].y, sizeof(double)) == 0);
  }
}

TEST_CASE("four quarter turns compose to the identity") {
  const PlantParams p = nominal_plant(3);
  PlantParams r = p;
  for (int t = 0; t < 4; ++t) r = rotate_configuration(r, 1);
  CHECK(params_equal(p, r));
  CHECK_THROWS_AS(rotate_configuration(p, 0), std::invalid_argument);
  CHECK_THROWS_AS(rotate_configuration(p, 4), std::invalid_argument);
}

TEST_CASE("half turn flips both channel signs and swaps direction pairs") {
  const PlantParams p = nominal_plant(3);
  const PlantParams r = rotate_configuration(p, 2);
  CHECK(r.sign_x == -p.sign_x);
  CHECK(r.sign_y == -p.sign_y);
  CHECK(r.swap_channels == p.swap_channels);
  // What +x could reach now sits where -x was, and likewise for y.
  CHECK(r.asymmetry[0] == p.asymmetry[1]);
  CHECK(r.asymmetry[1] == p.asymmetry[0]);
  CHECK(r.asymmetry[2] == p.asymmetry[3]);
  CHECK(r.asymmetry[3] == p.asymmetry[2]);
}

TEST_CASE("a rotated unit retraces the nominal path through the rotated frame") {
  // Same valve commands into the physically rotated robot must land on the
  // rotation of the un-rotated robot's trajectory (noise off). Checked on a
  // deliberately lopsided unit so no symmetry can mask a mix-up.
  PlantParams base = quiet_nominal();
  base.asymmetry = {1.3, 0.7, 1.1, 0.6};
  base.gain_y *= 1.2;
  const auto seq = reference_walk(300, 0.3, 17);
  const auto nominal_run = replay(base, seq);
  for (const int q : {1, 2, 3}) {
    CAPTURE(q);
    const PlantParams rotated = rotate_configuration(base, q);
    const auto rotated_run = replay(rotated, seq);

    // The rotated unit's gains must still pass validation and keep the
    // workspace size (rotation moves capability around, never creates it).
    CHECK_NOTHROW(validate(rotated));
    REQUIRE(rotated_run.size() == nominal_run.size());
    for (std::size_t i = 0; i < nominal_run.size(); ++i) {
      const Position2 expect = rot90(nominal_run[i], q);
      CHECK(rotated_run[i].x == doctest::Approx(expect.x).epsilon(1e-12));
      CHECK(rotated_run[i].y == doctest::Approx(expect.y).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero severity leaves the unit untouched") {
  const PlantParams p = nominal_plant(3);
  const PlantParams q = perturb_unit(p, 0.0, 99);
  CHECK(params_equal(p, q));
  CHECK(q.seed == p.seed);
  CHECK_THROWS_AS(perturb_unit(p, -0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(perturb_unit(p, 0.6, 1), std::invalid_argument);
}

TEST_CASE("different unit seeds give different units") {
  const PlantParams p = nominal_plant(3);
  const PlantParams a = perturb_unit(p, 0.15, 1);
  const PlantParams b = perturb_unit(p, 0.15, 2);
  CHECK(!params_equal(a, b));
  // Deterministic per seed.
  CHECK(params_equal(a, perturb_unit(p, 0.15, 1)));
  // Factors stay inside the declared band.
  CHECK(a.gain_x >= 0.85 * p.gain_x);
  CHECK(a.gain_x <= 1.15 * p.gain_x);
  CHECK(a.time_constant >= 0.85 * p.time_constant);
  CHECK(a.time_constant <= 1.15 * p.time_constant);
  for (double asym : a.asymmetry) {
    CHECK(asym >= 0.5);
    CHECK(asym <= 1.5);
  }
}

TEST_CASE("severity 0.15 reproduces the measured unit-to-unit divergence") {
  // The paper's three sibling units averaged 5.21 mm of open-loop divergence
  // from the reference unit; the perturbation model is calibrated so a
  // severity-0.15 unit lands in that band on a full-range excitation replay.
  PlantParams nominal = quiet_nominal();
  const auto seq = reference_walk(3000, 0.35, 4);
  const auto base_run = replay(nominal, seq);
  double pooled = 0.0;
  const std::vector<std::uint64_t> units = {1, 2, 3};
  for (const std::uint64_t unit : units) {
    PlantParams sibling = perturb_unit(nominal, 0.15, unit);
    sibling.noise_std = 0.0;
    const auto run = replay(sibling, seq);
    double sum = 0.0;
    for (std::size_t i = 0; i < run.size(); ++i)
      sum += distance(run[i], base_run[i]);
    pooled += sum / static_cast<double>(run.size());
  }
  const double mean_divergence = pooled / static_cast<double>(units.size());
  CHECK(mean_divergence > 3.2);
  CHECK(mean_divergence < 7.2);
}

TEST_CASE("delay steps rescale with the control period") {
  CHECK(delay_steps_for_period(0.3) == 1);
  CHECK(delay_steps_for_period(0.25) == 1);  // 4 Hz
  CHECK(delay_steps_for_period(0.4) == 1);   // 2.5 Hz
  CHECK(delay_steps_for_period(0.1) == 3);
  CHECK(delay_steps_for_period(0.05) == 3);  // clamped at the queue limit
  CHECK(delay_steps_for_period(10.0) == 0);
  CHECK_THROWS_AS(delay_steps_for_period(0.0), std::invalid_argument);
}

TEST_CASE("plant parameters round-trip through JSON") {
  PlantParams p = perturb_unit(nominal_plant(11), 0.2, 5);
  const std::string text = params_to_json(p);
  const PlantParams back = params_from_json(text);
  CHECK(params_equal(p, back));
  CHECK(back.seed == p.seed);

  CHECK_THROWS_WITH_AS(params_from_json("{}"), doctest::Contains("format"),
                       std::runtime_error);
  CHECK_THROWS_AS(params_from_json("not json"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      params_from_json(R"({"format":"plant-params","version":2})"),
      doctest::Contains("version"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      params_from_json(R"({"format":"plant-params","version":1})"),
      doctest::Contains("missing"), std::runtime_error);
}
