#include "softctrl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "softctrl/rng.hpp"

namespace softctrl {

bool operator==(const Sample& a, const Sample& b) {
  return a.command.u1 == b.command.u1 && a.command.u2 == b.command.u2 &&
         a.position.x == b.position.x && a.position.y == b.position.y;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.records == b.records && a.control_period == b.control_period &&
         a.plant_id == b.plant_id && a.train.begin == b.train.begin &&
         a.train.end == b.train.end && a.val.begin == b.val.begin &&
         a.val.end == b.val.end && a.test.begin == b.test.begin &&
         a.test.end == b.test.end;
}

Dataset excite(const PlantParams& params, int n, double max_delta,
               std::uint64_t seed, double control_period) {
  if (n < 100) throw std::invalid_argument("excite: n must be >= 100");
  if (!(max_delta > 0.0 && max_delta <= 1.0) && max_delta != 0.0)
    throw std::invalid_argument("excite: max_delta must be in (0, 1] (or 0)");
  PlantState state = init_state(params);
  std::mt19937_64 walk_rng(derive_seed(seed, "excite-walk"));
  Dataset ds;
  ds.control_period = control_period;
  ds.plant_id = "excited";
  ds.records.reserve(static_cast<std::size_t>(n));
  Actuation2 u{0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    u.u1 = std::clamp(u.u1 + uniform_in(walk_rng, -max_delta, max_delta), -1.0, 1.0);
    u.u2 = std::clamp(u.u2 + uniform_in(walk_rng, -max_delta, max_delta), -1.0, 1.0);
    const Position2 p = step(state, params, u, control_period);
    ds.records.push_back({u, p});
  }
  return split(ds, 0.7, 0.1, 0.2);
}

Dataset split(const Dataset& ds, double f_train, double f_val, double f_test) {
  if (!(f_train > 0.0) || !(f_val > 0.0) || !(f_test > 0.0))
    throw std::invalid_argument("split: fractions must be strictly positive");
  if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");
  const std::size_t n = ds.records.size();
  const auto n_train = static_cast<std::size_t>(std::floor(f_train * n));
  const auto n_val = static_cast<std::size_t>(std::floor(f_val * n));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw std::invalid_argument("split: a range would be empty");
  Dataset out = ds;
  out.train = {0, n_train};
  out.val = {n_train, n_train + n_val};
  out.test = {n_train + n_val, n};
  return out;
}

namespace {

double parse_field(std::string_view field, const std::string& path, int line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    std::ostringstream msg;
    msg << path << ":" << line_no << ": bad number '" << field << "'";
    throw std::runtime_error(msg.str());
  }
  return v;
}

}  // namespace

void save(const Dataset& ds, const std::string& path) {
  {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "step,u1,u2,x,y\n";
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const Sample& s = ds.records[i];
      f << i << ',' << format_full(s.command.u1) << ','
        << format_full(s.command.u2) << ',' << format_full(s.position.x) << ','
        << format_full(s.position.y) << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + path);
  }
  nlohmann::json j;
  j["format"] = "dataset-meta";
  j["version"] = 1;
  j["control_period"] = ds.control_period;
  j["plant_id"] = ds.plant_id;
  j["n"] = ds.records.size();
  j["split"] = {{"train", {ds.train.begin, ds.train.end}},
                {"val", {ds.val.begin, ds.val.end}},
                {"test", {ds.test.begin, ds.test.end}}};
  std::ofstream meta(path + ".json");
  if (!meta) throw std::runtime_error("cannot open for writing: " + path + ".json");
  meta << j.dump(2) << '\n';
  if (!meta) throw std::runtime_error("write failed: " + path + ".json");
}

Dataset load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  Dataset ds;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "step,u1,u2,x,y")
        throw std::runtime_error(path + ":1: unrecognized header");
      header_seen = true;
      continue;
    }
    std::string_view rest = line;
    std::array<std::string_view, 5> fields;
    std::size_t count = 0;
    while (count < 5) {
      const std::size_t comma = rest.find(',');
      fields[count++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (count != 5 || fields[4].find(',') != std::string_view::npos) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": expected 5 fields";
      throw std::runtime_error(msg.str());
    }
    Sample s;
    (void)parse_field(fields[0], path, line_no);  // step index, redundant
    s.command.u1 = parse_field(fields[1], path, line_no);
    s.command.u2 = parse_field(fields[2], path, line_no);
    s.position.x = parse_field(fields[3], path, line_no);
    s.position.y = parse_field(fields[4], path, line_no);
    ds.records.push_back(s);
  }
  if (!header_seen) throw std::runtime_error(path + ": missing header");

  std::ifstream meta_in(path + ".json");
  if (!meta_in)
    throw std::runtime_error("cannot open for reading: " + path + ".json");
  nlohmann::json j;
  try {
    meta_in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ".json: bad json: " + e.what());
  }
  if (j.value("format", "") != "dataset-meta" || j.value("version", 0) != 1)
    throw std::runtime_error(path + ".json: wrong format or version");
  try {
    ds.control_period = j.at("control_period").get<double>();
    ds.plant_id = j.at("plant_id").get<std::string>();
    const auto& sp = j.at("split");
    ds.train = {sp.at("train").at(0).get<std::size_t>(),
                sp.at("train").at(1).get<std::size_t>()};
    ds.val = {sp.at("val").at(0).get<std::size_t>(),
              sp.at("val").at(1).get<std::size_t>()};
    ds.test = {sp.at("test").at(0).get<std::size_t>(),
               sp.at("test").at(1).get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ".json: missing field: " + e.what());
  }
  if (ds.test.end != ds.records.size())
    throw std::runtime_error(path + ".json: split does not cover the records");
  return ds;
}

}  // namespace softctrl
