#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "softctrl/baseline.hpp"
#include "softctrl/core.hpp"
#include "softctrl/dataset.hpp"
#include "softctrl/harness.hpp"
#include "softctrl/lstm.hpp"
#include "softctrl/rng.hpp"
#include "softctrl/svg.hpp"

namespace {

using namespace softctrl;

PlantChoice parse_plant_text(const std::string& text) {
  PlantChoice choice;
  if (text == "nominal") {
    choice.kind = PlantChoice::Kind::kNominal;
    return choice;
  }
  const auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
      if (ch == ':') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    parts.push_back(cur);
    return parts;
  };
  const auto parts = split(text);
  if (parts[0] == "rotated" && parts.size() == 2) {
    choice.kind = PlantChoice::Kind::kRotated;
    choice.quarter_turns = std::stoi(parts[1]);
    return choice;
  }
  if (parts[0] == "perturbed" && parts.size() == 3) {
    choice.kind = PlantChoice::Kind::kPerturbed;
    choice.severity = std::stod(parts[1]);
    choice.unit_seed = std::stoull(parts[2]);
    return choice;
  }
  throw std::invalid_argument(
      "plant must be nominal, rotated:K, or perturbed:SEVERITY:UNIT, got \"" +
      text + "\"");
}

ControllerChoice::Kind parse_controller_kind(const std::string& text) {
  if (text == "lstm") return ControllerChoice::Kind::kLstm;
  if (text == "kinematics") return ControllerChoice::Kind::kKinematics;
  if (text == "hybrid") return ControllerChoice::Kind::kHybrid;
  throw std::invalid_argument(
      "controller must be lstm, kinematics, or hybrid, got \"" + text + "\"");
}

std::vector<std::pair<int, double>> parse_schedule_text(const std::string& text) {
  std::vector<std::pair<int, double>> schedule;
  std::string cur;
  const auto flush = [&] {
    if (cur.empty()) return;
    const auto colon = cur.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("schedule entries must be STEP:WEIGHT, got \"" +
                                  cur + "\"");
    schedule.emplace_back(std::stoi(cur.substr(0, colon)),
                          std::stod(cur.substr(colon + 1)));
    cur.clear();
  };
  for (char ch : text) {
    if (ch == ',')
      flush();
    else
      cur.push_back(ch);
  }
  flush();
  return schedule;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      values.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) values.push_back(std::stoi(cur));
  return values;
}

std::string condition_stem(const ExperimentConfig& cfg) {
  return plant_id(cfg.plant) + "_" + controller_id(cfg.controller) + "_" +
         std::string(1, cfg.trajectory);
}

void write_rollout_outputs(const ExperimentConfig& cfg,
                           const RolloutResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  {
    std::ofstream out(dir / "config.json", std::ios::binary);
    out << to_json_text(cfg);
  }
  for (std::size_t i = 0; i < result.trials.size(); ++i)
    save_csv(result.trials[i], (dir / ("trial" + std::to_string(i) + ".csv")).string());
  save_metric_csv(result.aggregate, condition_stem(cfg), config_hash(cfg),
                  (dir / "metric.csv").string());
  emit_plot(result.trials, (dir / "plot.svg").string());
}

struct RunFlags {
  std::string config_path, plant_text, controller_text, trajectory_text;
  std::string weights, out;
  int steps = 0, trials = 0;
  double period = 0.0, weight = -1.0;
  std::string schedule_text;
  std::uint64_t seed = 0;
};

// Config file first (defaults when absent), then every flag that was
// actually passed overrides its field.
ExperimentConfig build_config(const CLI::App* sub, const RunFlags& flags) {
  ExperimentConfig cfg;
  if (sub->count("--config")) cfg = load_config(flags.config_path);
  if (sub->count("--plant")) cfg.plant = parse_plant_text(flags.plant_text);
  if (sub->count("--controller"))
    cfg.controller.kind = parse_controller_kind(flags.controller_text);
  if (sub->count("--weight")) cfg.controller.hybrid.weight = flags.weight;
  if (sub->count("--schedule"))
    cfg.controller.hybrid.schedule = parse_schedule_text(flags.schedule_text);
  if (sub->count("--trajectory")) {
    if (flags.trajectory_text.size() != 1)
      throw std::invalid_argument("trajectory must be A or B");
    cfg.trajectory = flags.trajectory_text[0];
  }
  if (sub->count("--steps")) cfg.step_count = flags.steps;
  if (sub->count("--period")) cfg.control_period = flags.period;
  if (sub->count("--trials")) cfg.trials = flags.trials;
  if (sub->count("--weights")) cfg.weights_path = flags.weights;
  if (sub->count("--out")) cfg.output_dir = flags.out;
  cfg.seed = flags.seed;  // mandatory flag
  validate(cfg);
  return cfg;
}

void add_override_flags(CLI::App* sub, RunFlags& flags) {
  sub->add_option("--config", flags.config_path, "JSON experiment config");
  sub->add_option("--plant", flags.plant_text,
                  "nominal | rotated:K | perturbed:SEVERITY:UNIT");
  sub->add_option("--controller", flags.controller_text,
                  "lstm | kinematics | hybrid");
  sub->add_option("--weight", flags.weight, "hybrid blend weight");
  sub->add_option("--schedule", flags.schedule_text,
                  "weight schedule STEP:W[,STEP:W...]");
  sub->add_option("--trajectory", flags.trajectory_text, "A | B");
  sub->add_option("--steps", flags.steps, "waypoints per rollout");
  sub->add_option("--period", flags.period, "control period, seconds");
  sub->add_option("--trials", flags.trials, "trials per condition");
  sub->add_option("--weights", flags.weights, "trained weight file");
  sub->add_option("--out", flags.out, "output directory");
  sub->add_option("--seed", flags.seed, "master seed")->required();
}

LstmNetF load_required_weights(const std::string& path) {
  if (path.empty())
    throw std::runtime_error("no weights file configured (--weights)");
  return load_weights<float>(path);
}

void print_metric(const std::string& label, const Metric& m) {
  std::cout << label << " mean=" << format_full(m.mean_error)
            << " std=" << format_full(m.std_error)
            << " max=" << format_full(m.max_error) << "\n";
}

int run_app(int argc, char** argv) {
  CLI::App app{"hybrid adaptive soft-robot controller workbench"};
  app.require_subcommand(1);
  namespace fs = std::filesystem;

  // collect
  auto* collect = app.add_subcommand("collect", "record an excitation dataset");
  std::string collect_plant = "nominal", collect_out;
  int collect_n = 20000;
  double collect_delta = 0.2, collect_period = 0.3;
  std::uint64_t collect_seed = 0;
  collect->add_option("--plant", collect_plant,
                      "nominal | rotated:K | perturbed:SEVERITY:UNIT");
  collect->add_option("--n", collect_n, "samples to record");
  collect->add_option("--max-delta", collect_delta, "random-walk step bound");
  collect->add_option("--control-period", collect_period, "seconds per tick");
  collect->add_option("--seed", collect_seed, "master seed")->required();
  collect->add_option("--out", collect_out, "dataset CSV path")->required();
  collect->callback([&] {
    const PlantChoice choice = parse_plant_text(collect_plant);
    PlantParams params = make_plant(choice, collect_period,
                                    derive_seed(collect_seed, "collect-noise"));
    Dataset ds = excite(params, collect_n, collect_delta, collect_seed,
                        collect_period);
    ds.plant_id = plant_id(choice);
    save(ds, collect_out);
    std::cout << "samples=" << ds.records.size() << " plant=" << ds.plant_id
              << " wrote=" << collect_out << "\n";
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "fit the network offline");
  std::string train_data, train_out, train_spec = "4-10-128-0.1";
  int train_epochs = 30, train_batch = 64, train_patience = 5;
  double train_lr = 1e-3, train_clip = 5.0;
  std::uint64_t train_seed = 0;
  train_cmd->add_option("--data", train_data, "dataset CSV")->required();
  train_cmd->add_option("--out", train_out, "weight file path")->required();
  train_cmd->add_option("--spec", train_spec,
                        "layers-history-hidden-dropout, e.g. 4-10-128-0.1");
  train_cmd->add_option("--epochs", train_epochs, "max epochs");
  train_cmd->add_option("--batch", train_batch, "batch size");
  train_cmd->add_option("--lr", train_lr, "learning rate");
  train_cmd->add_option("--patience", train_patience, "early-stopping patience");
  train_cmd->add_option("--clip", train_clip, "gradient norm clip (0 = off)");
  train_cmd->add_option("--seed", train_seed, "master seed")->required();
  train_cmd->callback([&] {
    const Dataset ds = load(train_data);
    const LstmSpec spec = parse_lstm_spec(train_spec);
    TrainConfig cfg;
    cfg.max_epochs = train_epochs;
    cfg.batch_size = train_batch;
    cfg.learning_rate = train_lr;
    cfg.patience = train_patience;
    cfg.clip_norm = train_clip;
    cfg.seed = train_seed;
    const auto [net, report] = train<float>(ds, spec, cfg);
    save_weights(net, train_out);
    for (int e = 0; e < report.epochs_run; ++e)
      std::cout << "epoch=" << e << " train_loss="
                << format_full(report.train_loss[static_cast<std::size_t>(e)])
                << " val_loss="
                << format_full(report.val_loss[static_cast<std::size_t>(e)])
                << "\n";
    std::cout << "best_epoch=" << report.best_epoch
              << " best_val=" << format_full(report.best_val)
              << " wall_seconds=" << format_full(report.wall_seconds)
              << " wrote=" << train_out << "\n";
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "test-split prediction error");
  std::string eval_data, eval_weights;
  eval_cmd->add_option("--data", eval_data, "dataset CSV")->required();
  eval_cmd->add_option("--weights", eval_weights, "weight file")->required();
  eval_cmd->callback([&] {
    const Dataset ds = load(eval_data);
    const LstmNetF net = load_weights<float>(eval_weights);
    const double err = evaluate(net, ds);
    std::cout << "test_error_fraction=" << format_full(err)
              << " test_error_percent=" << format_full(err * 100.0) << "\n";
  });

  // run
  auto* run_cmd = app.add_subcommand("run", "closed-loop trajectory rollouts");
  RunFlags run_flags;
  add_override_flags(run_cmd, run_flags);
  run_cmd->callback([&] {
    ExperimentConfig cfg = build_config(run_cmd, run_flags);
    if (cfg.output_dir.empty())
      throw std::invalid_argument("run: --out (or config output_dir) required");
    const RolloutResult result = run_rollout(cfg);
    write_rollout_outputs(cfg, result);
    print_metric("condition=" + condition_stem(cfg) +
                     " hash=" + config_hash(cfg),
                 result.aggregate);
    std::cout << "wrote=" << cfg.output_dir << "\n";
  });

  // matrix
  auto* matrix_cmd =
      app.add_subcommand("matrix", "rotations-and-units interchangeability table");
  RunFlags matrix_flags;
  add_override_flags(matrix_cmd, matrix_flags);
  matrix_cmd->callback([&] {
    ExperimentConfig base = build_config(matrix_cmd, matrix_flags);
    if (base.output_dir.empty())
      throw std::invalid_argument("matrix: --out required");
    const LstmNetF net = load_required_weights(base.weights_path);
    const MatrixReport report = run_interchangeability_matrix(base, net);
    fs::create_directories(base.output_dir);
    const std::string path =
        (fs::path(base.output_dir) / "matrix_report.csv").string();
    save_matrix_csv(report, path);
    for (const MatrixCell& cell : report.rows) {
      print_metric(cell.family + "-" + cell.controller + " A", cell.a);
      print_metric(cell.family + "-" + cell.controller + " B", cell.b);
    }
    std::cout << "wrote=" << path << "\n";
  });

  // sweep
  auto* sweep_cmd =
      app.add_subcommand("sweep", "control-rate and step-count adaptation table");
  RunFlags sweep_flags;
  add_override_flags(sweep_cmd, sweep_flags);
  sweep_cmd->callback([&] {
    ExperimentConfig base = build_config(sweep_cmd, sweep_flags);
    if (base.output_dir.empty())
      throw std::invalid_argument("sweep: --out required");
    const LstmNetF net = load_required_weights(base.weights_path);
    const SweepReport report = run_adaptation_sweep(base, net);
    fs::create_directories(base.output_dir);
    const fs::path dir(base.output_dir);
    save_sweep_csv(report.rows, (dir / "sweep_report.csv").string());
    save_sweep_csv(report.reference, (dir / "sweep_reference.csv").string());
    for (const SweepRow& row : report.rows)
      print_metric(row.family + "-" + row.variant, row.metric);
    std::cout << "wrote=" << base.output_dir << "\n";
  });

  // ablate
  auto* ablate_cmd =
      app.add_subcommand("ablate", "mid-run switch to the kinematics controller");
  RunFlags ablate_flags;
  std::string switch_text = "100,200,300,350";
  add_override_flags(ablate_cmd, ablate_flags);
  ablate_cmd->add_option("--switch", switch_text, "switch steps, comma-separated");
  ablate_cmd->callback([&] {
    ExperimentConfig base = build_config(ablate_cmd, ablate_flags);
    if (base.output_dir.empty())
      throw std::invalid_argument("ablate: --out required");
    if (!ablate_cmd->count("--plant")) {
      base.plant.kind = PlantChoice::Kind::kPerturbed;
      base.plant.severity = 0.15;
      base.plant.unit_seed = 2;
    }
    if (!ablate_cmd->count("--trajectory")) base.trajectory = 'B';
    const LstmNetF net = load_required_weights(base.weights_path);
    const AblationReport report =
        run_ablation(base, parse_int_list(switch_text), net);
    fs::create_directories(base.output_dir);
    const fs::path dir(base.output_dir);
    save_ablation_csv(report, (dir / "ablation_report.csv").string());
    for (std::size_t r = 0; r < report.rows.size(); ++r) {
      const AblationRow& row = report.rows[r];
      const std::string stem =
          row.kind == "reference" ? "ablate_reference"
                                  : "ablate_s" + std::to_string(row.switch_step);
      for (std::size_t t = 0; t < report.logs[r].size(); ++t)
        save_csv(report.logs[r][t],
                 (dir / (stem + "_t" + std::to_string(t) + ".csv")).string());
      emit_plot(report.logs[r], (dir / (stem + ".svg")).string());
      print_metric(stem + " final50=" + format_full(row.final50_mean),
                   row.metric);
    }
    std::cout << "wrote=" << base.output_dir << "\n";
  });

  // baseline
  auto* baseline_cmd =
      app.add_subcommand("baseline", "25-robot arm comparison grid");
  std::string baseline_out;
  int baseline_steps = 400, baseline_trials = 3;
  std::uint64_t baseline_seed = 0;
  baseline_cmd->add_option("--steps", baseline_steps, "trajectory length");
  baseline_cmd->add_option("--trials", baseline_trials, "trials per robot");
  baseline_cmd->add_option("--seed", baseline_seed, "master seed")->required();
  baseline_cmd->add_option("--out", baseline_out, "output directory")->required();
  baseline_cmd->callback([&] {
    const GridResult grid =
        run_baseline_comparison(baseline_seed, baseline_steps, baseline_trials);
    fs::create_directories(baseline_out);
    const fs::path dir(baseline_out);
    save_grid_csv(grid.cells, (dir / "baseline_grid.csv").string());
    save_baseline_report_csv(grid, (dir / "baseline_report.csv").string());
    std::cout << "gain_i=" << format_full(grid.gain_i)
              << " lstm_test_error=" << format_full(grid.lstm_test_error)
              << "\n";
    print_metric("cc_aggregate", grid.cc_aggregate);
    print_metric("hybrid_aggregate", grid.hybrid_aggregate);
    std::cout << "hybrid_wins_offcenter=" << grid.hybrid_wins_offcenter
              << "/24 wrote=" << baseline_out << "\n";
  });

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "render a condition figure");
  std::vector<std::string> plot_csvs;
  std::string plot_out;
  plot_cmd->add_option("csv", plot_csvs, "trial rollout CSVs")->required();
  plot_cmd->add_option("--out", plot_out, "SVG path")->required();
  plot_cmd->callback([&] {
    std::vector<RolloutLog> logs;
    logs.reserve(plot_csvs.size());
    for (const std::string& path : plot_csvs)
      logs.push_back(load_rollout_csv(path));
    emit_plot(logs, plot_out);
    std::cout << "wrote=" << plot_out << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
