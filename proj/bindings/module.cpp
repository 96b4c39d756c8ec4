// Python surface for the controller core: data collection, training,
// inference, the online kinematics fit, blending, and full experiment runs.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <Eigen/Dense>

#include "softctrl/dataset.hpp"
#include "softctrl/harness.hpp"
#include "softctrl/hybrid.hpp"
#include "softctrl/kincontrol.hpp"
#include "softctrl/lstm.hpp"
#include "softctrl/plant.hpp"
#include "softctrl/rng.hpp"

namespace py = pybind11;
using namespace softctrl;

namespace {

std::vector<HistoryItem> to_history(
    const std::vector<std::pair<std::pair<double, double>,
                                std::pair<double, double>>>& items) {
  std::vector<HistoryItem> out;
  out.reserve(items.size());
  for (const auto& [pos, act] : items)
    out.push_back({{pos.first, pos.second}, {act.first, act.second}});
  return out;
}

py::dict metric_dict(const Metric& m) {
  py::dict d;
  d["mean_error"] = m.mean_error;
  d["std_error"] = m.std_error;
  d["max_error"] = m.max_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_softctrl, m) {
  m.doc() = "hybrid soft-robot controller core";

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly(
          "size", [](const Dataset& d) { return d.records.size(); })
      .def_readonly("control_period", &Dataset::control_period)
      .def_readonly("plant_id", &Dataset::plant_id)
      .def("sample",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.records.size())
               throw py::index_error("sample index out of range");
             const Sample& s = d.records[i];
             return py::make_tuple(
                 py::make_tuple(s.command.u1, s.command.u2),
                 py::make_tuple(s.position.x, s.position.y));
           },
           py::arg("i"))
      .def("save", [](const Dataset& d, const std::string& path) {
        save(d, path);
      });

  m.def("load_dataset", [](const std::string& path) { return load(path); },
        py::arg("path"));

  m.def(
      "collect",
      [](int n, double max_delta, std::uint64_t seed, double period) {
        const PlantParams plant =
            nominal_plant(derive_seed(seed, "collect-noise"));
        return excite(plant, n, max_delta, seed, period);
      },
      py::arg("n"), py::arg("max_delta") = 0.2, py::arg("seed") = 0,
      py::arg("period") = 0.3);

  py::class_<LstmNetF>(m, "Net")
      .def_property_readonly(
          "spec_label", [](const LstmNetF& n) { return spec_label(n.spec); })
      .def("predict",
           [](const LstmNetF& n, std::pair<double, double> position,
              const std::vector<std::pair<std::pair<double, double>,
                                          std::pair<double, double>>>& history) {
             const Actuation2 a = predict_actuation(
                 n, {position.first, position.second}, to_history(history));
             return py::make_tuple(a.u1, a.u2);
           },
           py::arg("position"), py::arg("history"))
      .def("save", [](const LstmNetF& n, const std::string& path) {
        save_weights(n, path);
      });

  m.def("load_net",
        [](const std::string& path) { return load_weights<float>(path); },
        py::arg("path"));

  m.def(
      "train",
      [](const Dataset& ds, const std::string& spec, double learning_rate,
         int batch_size, int max_epochs, int patience, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.learning_rate = learning_rate;
        cfg.batch_size = batch_size;
        cfg.max_epochs = max_epochs;
        cfg.patience = patience;
        cfg.seed = seed;
        auto [net, rep] = train<float>(ds, parse_lstm_spec(spec), cfg);
        py::dict report;
        report["epochs_run"] = rep.epochs_run;
        report["best_epoch"] = rep.best_epoch;
        report["best_val"] = rep.best_val;
        report["wall_seconds"] = rep.wall_seconds;
        report["train_loss"] = rep.train_loss;
        report["val_loss"] = rep.val_loss;
        return py::make_tuple(std::move(net), report);
      },
      py::arg("dataset"), py::arg("spec") = "4-10-128-0.1",
      py::arg("learning_rate") = 1e-3, py::arg("batch_size") = 64,
      py::arg("max_epochs") = 30, py::arg("patience") = 5, py::arg("seed") = 0);

  m.def("evaluate",
        [](const LstmNetF& net, const Dataset& ds) { return evaluate(net, ds); },
        py::arg("net"), py::arg("dataset"));

  py::class_<KinematicsState>(m, "Kinematics")
      .def(py::init([](int dim, int window, double ridge) {
             return init_kin_state(dim, window, ridge);
           }),
           py::arg("dim") = 2, py::arg("window") = 5, py::arg("ridge") = 1e-2)
      .def("push",
           [](KinematicsState& s, std::pair<double, double> position,
              std::pair<double, double> actuation) {
             push_observation(s, Position2{position.first, position.second},
                              Actuation2{actuation.first, actuation.second});
           },
           py::arg("position"), py::arg("actuation"))
      .def("update", [](KinematicsState& s) { return update_k(s); })
      .def("solve",
           [](const KinematicsState& s, std::pair<double, double> target) {
             const Actuation2 a =
                 solve_actuation(s, Position2{target.first, target.second});
             return py::make_tuple(a.u1, a.u2);
           },
           py::arg("target"))
      .def_property_readonly("k", [](const KinematicsState& s) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < s.k.rows(); ++r) {
          std::vector<double> row;
          for (Eigen::Index c = 0; c < s.k.cols(); ++c)
            row.push_back(s.k(r, c));
          rows.push_back(std::move(row));
        }
        return rows;
      });

  m.def(
      "blend",
      [](std::pair<double, double> kin, std::pair<double, double> lstm,
         double weight) {
        const Actuation2 b = blend(Actuation2{kin.first, kin.second},
                                   Actuation2{lstm.first, lstm.second}, weight);
        return py::make_tuple(b.u1, b.u2);
      },
      py::arg("kin"), py::arg("lstm"), py::arg("weight"));

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = config_from_json_text(config_json);
        const RolloutResult r = run_rollout(cfg);
        py::dict out = metric_dict(r.aggregate);
        out["trials"] = r.trials.size();
        out["config_hash"] = config_hash(cfg);
        return out;
      },
      py::arg("config_json"));

  m.def("config_hash_of", [](const std::string& config_json) {
    return config_hash(config_from_json_text(config_json));
  });
}
