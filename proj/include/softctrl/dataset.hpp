#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softctrl/core.hpp"
#include "softctrl/plant.hpp"

namespace softctrl {

struct Sample {
  Actuation2 command;
  Position2 position;  // sensed position after applying the command
};

bool operator==(const Sample& a, const Sample& b);

// Contiguous index range [begin, end).
struct SplitRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct Dataset {
  std::vector<Sample> records;
  double control_period = 0.3;  // seconds between samples
  std::string plant_id;
  SplitRange train, val, test;  // contiguous, disjoint, covering all records
};

bool operator==(const Dataset& a, const Dataset& b);

// Random-walk excitation: each command component moves by a uniform draw in
// [-max_delta, +max_delta] per step (clamped to [-1, 1]), the plant advances,
// and the (command, sensed position) pair is recorded. The walk starts from
// zero command. Applies the default 70/10/20 split. n >= 100 required.
Dataset excite(const PlantParams& params, int n, double max_delta,
               std::uint64_t seed, double control_period = 0.3);

// Reassigns contiguous train/val/test ranges in temporal order. Fractions
// must be strictly positive and sum to 1 within 1e-9, and every resulting
// range must be nonempty.
Dataset split(const Dataset& ds, double f_train, double f_val, double f_test);

// CSV (header step,u1,u2,x,y) plus a JSON sidecar at path + ".json" holding
// control_period, plant_id, and the split ranges. load(save(ds)) == ds.
void save(const Dataset& ds, const std::string& path);
Dataset load(const std::string& path);

}  // namespace softctrl
