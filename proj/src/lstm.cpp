#include "softctrl/lstm.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>

namespace softctrl {

void validate(const LstmSpec& spec) {
  if (spec.num_layers < 1) throw std::invalid_argument("lstm spec: num_layers must be >= 1");
  if (spec.hidden_size < 1) throw std::invalid_argument("lstm spec: hidden_size must be >= 1");
  if (spec.history_len < 1) throw std::invalid_argument("lstm spec: history_len must be >= 1");
  if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0)
    throw std::invalid_argument("lstm spec: dropout_rate must be in [0, 1)");
  if (spec.input_size < 1 || spec.output_size < 1)
    throw std::invalid_argument("lstm spec: input/output sizes must be >= 1");
}

LstmSpec parse_lstmspec_fields(const std::string& label) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : label) {
    if (ch == '-' && !cur.empty() && cur.back() != 'e' && cur.back() != 'E') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4)
    throw std::invalid_argument(
        "lstm spec label must be layers-history-hidden-dropout, got \"" + label +
        "\"");
  LstmSpec spec;
  try {
    std::size_t used = 0;
    spec.num_layers = std::stoi(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument(parts[0]);
    spec.history_len = std::stoi(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
    spec.hidden_size = std::stoi(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument(parts[2]);
    spec.dropout_rate = std::stod(parts[3], &used);
    if (used != parts[3].size()) throw std::invalid_argument(parts[3]);
  } catch (const std::exception&) {
    throw std::invalid_argument("lstm spec label has a malformed field: \"" +
                                label + "\"");
  }
  return spec;
}

LstmSpec parse_lstm_spec(const std::string& label) {
  LstmSpec spec = parse_lstmspec_fields(label);
  validate(spec);
  return spec;
}

std::string spec_label(const LstmSpec& spec) {
  std::ostringstream out;
  out << spec.num_layers << '-' << spec.history_len << '-' << spec.hidden_size
      << '-' << format_full(spec.dropout_rate);
  return out.str();
}

SeriesView to_series(const Dataset& ds) {
  SeriesView sv;
  const auto n = static_cast<Eigen::Index>(ds.records.size());
  sv.positions.resize(2, n);
  sv.actuations.resize(2, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Sample& s = ds.records[static_cast<std::size_t>(j)];
    sv.positions(0, j) = s.position.x;
    sv.positions(1, j) = s.position.y;
    sv.actuations(0, j) = s.command.u1;
    sv.actuations(1, j) = s.command.u2;
  }
  sv.train = ds.train;
  sv.val = ds.val;
  sv.test = ds.test;
  return sv;
}

namespace {

// Per-feature mean and population std over the train range; target slots
// reuse the position statistics since targets live in the same space.
void compute_stats(const SeriesView& sv, int pd, int ad,
                   std::vector<double>& mean, std::vector<double>& scale) {
  const auto begin = static_cast<Eigen::Index>(sv.train.begin);
  const auto count = static_cast<Eigen::Index>(sv.train.end - sv.train.begin);
  mean.assign(static_cast<std::size_t>(2 * pd + ad), 0.0);
  scale.assign(static_cast<std::size_t>(2 * pd + ad), 1.0);
  const auto stats_of = [&](const Eigen::MatrixXd& m, int row, double& mu,
                            double& sigma) {
    const auto seg = m.row(row).segment(begin, count);
    mu = seg.mean();
    sigma = std::sqrt((seg.array() - mu).square().sum() /
                      static_cast<double>(count));
  };
  for (int d = 0; d < pd; ++d) {
    double mu = 0, sigma = 0;
    stats_of(sv.positions, d, mu, sigma);
    mean[static_cast<std::size_t>(d)] = mu;
    scale[static_cast<std::size_t>(d)] = std::max(sigma, 1e-6);
    mean[static_cast<std::size_t>(pd + ad + d)] = mu;
    scale[static_cast<std::size_t>(pd + ad + d)] = std::max(sigma, 1e-6);
  }
  for (int d = 0; d < ad; ++d) {
    double mu = 0, sigma = 0;
    stats_of(sv.actuations, d, mu, sigma);
    mean[static_cast<std::size_t>(pd + d)] = mu;
    scale[static_cast<std::size_t>(pd + d)] = std::max(sigma, 1e-6);
  }
}

template <typename Scalar>
void adam_step(typename LstmNet<Scalar>::Mat& p, typename LstmNet<Scalar>::Mat& m,
               typename LstmNet<Scalar>::Mat& v,
               const typename LstmNet<Scalar>::Mat& g, Scalar lr, Scalar bc1,
               Scalar bc2) {
  constexpr Scalar b1 = Scalar(0.9), b2 = Scalar(0.999), eps = Scalar(1e-8);
  m = b1 * m + (Scalar(1) - b1) * g;
  v = (b2 * v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
  p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace

template <typename Scalar>
std::pair<LstmNet<Scalar>, TrainReport> train_series(const SeriesView& sv,
                                                     LstmSpec spec,
                                                     const TrainConfig& cfg) {
  using Mat = typename LstmNet<Scalar>::Mat;
  const auto t_start = std::chrono::steady_clock::now();
  if (sv.positions.cols() != sv.actuations.cols())
    throw std::invalid_argument("train: position/actuation length mismatch");
  const int pd = static_cast<int>(sv.positions.rows());
  const int ad = static_cast<int>(sv.actuations.rows());
  spec.input_size = 2 * pd + ad;
  spec.output_size = ad;
  validate(spec);
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg.max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
  if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be > 0");

  const std::vector<int> train_anchors =
      lstm_detail::window_anchors(sv.train, spec.history_len);
  const std::vector<int> val_anchors =
      lstm_detail::window_anchors(sv.val, spec.history_len);
  if (train_anchors.empty() || val_anchors.empty())
    throw std::invalid_argument(
        "train: a split is too short to yield any supervised window");

  LstmNet<Scalar> net = init_net<Scalar>(spec, cfg.seed);
  {
    std::vector<double> mean = cfg.feat_mean, scale = cfg.feat_scale;
    if (mean.empty() && scale.empty()) {
      compute_stats(sv, pd, ad, mean, scale);
    }
    if (static_cast<int>(mean.size()) != spec.input_size ||
        static_cast<int>(scale.size()) != spec.input_size)
      throw std::invalid_argument("train: normalization stats size mismatch");
    for (int d = 0; d < spec.input_size; ++d) {
      if (!(scale[static_cast<std::size_t>(d)] > 0))
        throw std::invalid_argument("train: normalization scale must be > 0");
      net.feat_mean(d) = static_cast<Scalar>(mean[static_cast<std::size_t>(d)]);
      net.feat_scale(d) = static_cast<Scalar>(scale[static_cast<std::size_t>(d)]);
    }
  }

  lstm_detail::Gradients<Scalar> adam_m = lstm_detail::zero_gradients(net);
  lstm_detail::Gradients<Scalar> adam_v = lstm_detail::zero_gradients(net);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "lstm-shuffle"));
  std::mt19937_64 dropout_rng(derive_seed(cfg.seed, "lstm-dropout"));
  const bool use_dropout = spec.dropout_rate > 0.0 && spec.num_layers > 1;
  const Scalar keep = static_cast<Scalar>(1.0 - spec.dropout_rate);

  TrainReport report;
  LstmNet<Scalar> best = net;
  int stale = 0;
  long adam_t = 0;

  std::vector<int> order = train_anchors;
  std::vector<Mat> x_steps(static_cast<std::size_t>(spec.history_len));
  std::vector<Mat> masks;
  lstm_detail::ForwardCache<Scalar> cache;
  Mat labels, pred;

  const auto run_eval = [&](const std::vector<int>& anchors) {
    double total = 0.0;
    std::size_t done = 0;
    while (done < anchors.size()) {
      const auto bsz = std::min<std::size_t>(256, anchors.size() - done);
      for (auto& xs : x_steps) xs.resize(spec.input_size, static_cast<int>(bsz));
      labels.resize(ad, static_cast<int>(bsz));
      for (std::size_t k = 0; k < bsz; ++k) {
        const int anchor = anchors[done + k];
        lstm_detail::fill_window(sv, net, anchor, static_cast<int>(k), x_steps);
        for (int d = 0; d < ad; ++d)
          labels(d, static_cast<int>(k)) =
              static_cast<Scalar>(sv.actuations(d, anchor));
      }
      lstm_detail::forward_batch<Scalar>(net, x_steps, nullptr, nullptr, pred);
      total += static_cast<double>((pred - labels).squaredNorm()) /
               static_cast<double>(ad);
      done += bsz;
    }
    return total / static_cast<double>(anchors.size());
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          std::min<double>(uniform01(shuffle_rng) * static_cast<double>(i),
                           static_cast<double>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const auto bsz = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), order.size() - done);
      for (auto& xs : x_steps) xs.resize(spec.input_size, static_cast<int>(bsz));
      labels.resize(ad, static_cast<int>(bsz));
      for (std::size_t k = 0; k < bsz; ++k) {
        const int anchor = order[done + k];
        lstm_detail::fill_window(sv, net, anchor, static_cast<int>(k), x_steps);
        for (int d = 0; d < ad; ++d)
          labels(d, static_cast<int>(k)) =
              static_cast<Scalar>(sv.actuations(d, anchor));
      }
      const std::vector<Mat>* mask_ptr = nullptr;
      if (use_dropout) {
        masks.assign(static_cast<std::size_t>(spec.num_layers - 1), Mat());
        for (auto& mask : masks) {
          mask.resize(spec.hidden_size, static_cast<int>(bsz));
          for (int col = 0; col < static_cast<int>(bsz); ++col)
            for (int row = 0; row < spec.hidden_size; ++row)
              mask(row, col) = uniform01(dropout_rng) < spec.dropout_rate
                                   ? Scalar(0)
                                   : Scalar(1) / keep;
        }
        mask_ptr = &masks;
      }
      lstm_detail::forward_batch(net, x_steps, mask_ptr, &cache, pred);
      lstm_detail::Gradients<Scalar> grads = lstm_detail::zero_gradients(net);
      const Scalar loss =
          lstm_detail::backward_batch(net, cache, labels, mask_ptr, grads);
      if (!std::isfinite(static_cast<double>(loss)))
        throw TrainingDiverged(epoch, "training diverged at epoch " +
                                          std::to_string(epoch) +
                                          ": non-finite batch loss");
      if (cfg.clip_norm > 0) {
        double sq = static_cast<double>(grads.w_out.squaredNorm()) +
                    static_cast<double>(grads.b_out.squaredNorm());
        for (std::size_t l = 0; l < grads.w.size(); ++l)
          sq += static_cast<double>(grads.w[l].squaredNorm()) +
                static_cast<double>(grads.b[l].squaredNorm());
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          const auto s = static_cast<Scalar>(cfg.clip_norm / norm);
          for (auto& g : grads.w) g *= s;
          for (auto& g : grads.b) g *= s;
          grads.w_out *= s;
          grads.b_out *= s;
        }
      }
      ++adam_t;
      const auto lr = static_cast<Scalar>(cfg.learning_rate);
      const auto bc1 = static_cast<Scalar>(
          1.0 - std::pow(0.9, static_cast<double>(adam_t)));
      const auto bc2 = static_cast<Scalar>(
          1.0 - std::pow(0.999, static_cast<double>(adam_t)));
      for (std::size_t l = 0; l < net.w.size(); ++l) {
        adam_step<Scalar>(net.w[l], adam_m.w[l], adam_v.w[l], grads.w[l], lr,
                          bc1, bc2);
        typename LstmNet<Scalar>::Mat bm = adam_m.b[l], bv = adam_v.b[l],
                                      bp = net.b[l];
        adam_step<Scalar>(bp, bm, bv, grads.b[l], lr, bc1, bc2);
        net.b[l] = bp;
        adam_m.b[l] = bm;
        adam_v.b[l] = bv;
      }
      adam_step<Scalar>(net.w_out, adam_m.w_out, adam_v.w_out, grads.w_out, lr,
                        bc1, bc2);
      {
        typename LstmNet<Scalar>::Mat bm = adam_m.b_out, bv = adam_v.b_out,
                                      bp = net.b_out;
        adam_step<Scalar>(bp, bm, bv, grads.b_out, lr, bc1, bc2);
        net.b_out = bp;
        adam_m.b_out = bm;
        adam_v.b_out = bv;
      }
      epoch_loss += static_cast<double>(loss) * static_cast<double>(bsz);
      done += bsz;
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    const double val = run_eval(val_anchors);
    if (!std::isfinite(val))
      throw TrainingDiverged(epoch, "training diverged at epoch " +
                                        std::to_string(epoch) +
                                        ": non-finite validation loss");
    report.val_loss.push_back(val);
    report.epochs_run = epoch + 1;
    if (val < report.best_val) {
      report.best_val = val;
      report.best_epoch = epoch;
      best.w = net.w;
      best.b = net.b;
      best.w_out = net.w_out;
      best.b_out = net.b_out;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }

  net.w = best.w;
  net.b = best.b;
  net.w_out = best.w_out;
  net.b_out = best.b_out;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(net), report};
}

template <typename Scalar>
double evaluate_series(const LstmNet<Scalar>& net, const SeriesView& sv) {
  using Mat = typename LstmNet<Scalar>::Mat;
  const int ad = static_cast<int>(sv.actuations.rows());
  const std::vector<int> anchors =
      lstm_detail::window_anchors(sv.test, net.spec.history_len);
  if (anchors.empty())
    throw std::invalid_argument("evaluate: test split yields no windows");
  std::vector<Mat> x_steps(static_cast<std::size_t>(net.spec.history_len));
  Mat labels, pred;
  double abs_sum = 0.0;
  std::size_t done = 0;
  while (done < anchors.size()) {
    const auto bsz = std::min<std::size_t>(256, anchors.size() - done);
    for (auto& xs : x_steps)
      xs.resize(net.spec.input_size, static_cast<int>(bsz));
    labels.resize(ad, static_cast<int>(bsz));
    for (std::size_t k = 0; k < bsz; ++k) {
      const int anchor = anchors[done + k];
      lstm_detail::fill_window(sv, net, anchor, static_cast<int>(k), x_steps);
      for (int d = 0; d < ad; ++d)
        labels(d, static_cast<int>(k)) =
            static_cast<Scalar>(sv.actuations(d, anchor));
    }
    lstm_detail::forward_batch<Scalar>(net, x_steps, nullptr, nullptr, pred);
    abs_sum += static_cast<double>((pred - labels).cwiseAbs().sum());
    done += bsz;
  }
  const double mean_abs =
      abs_sum / (static_cast<double>(anchors.size()) * static_cast<double>(ad));
  return mean_abs / 2.0;  // fraction of the [-1, 1] actuation range
}

namespace {

constexpr char kWeightMagic[4] = {'S', 'C', 'N', 'W'};
constexpr std::uint32_t kWeightVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("weight file truncated: " + path);
  return value;
}

}  // namespace

template <typename Scalar>
void save_weights(const LstmNet<Scalar>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open weight file for writing: " + path);
  out.write(kWeightMagic, sizeof(kWeightMagic));
  write_raw(out, kWeightVersion);
  write_raw(out, static_cast<std::uint8_t>(sizeof(Scalar)));
  write_raw(out, static_cast<std::int32_t>(net.spec.num_layers));
  write_raw(out, static_cast<std::int32_t>(net.spec.hidden_size));
  write_raw(out, static_cast<std::int32_t>(net.spec.history_len));
  write_raw(out, static_cast<std::int32_t>(net.spec.input_size));
  write_raw(out, static_cast<std::int32_t>(net.spec.output_size));
  write_raw(out, net.spec.dropout_rate);
  for (int d = 0; d < net.spec.input_size; ++d)
    write_raw(out, static_cast<double>(net.feat_mean(d)));
  for (int d = 0; d < net.spec.input_size; ++d)
    write_raw(out, static_cast<double>(net.feat_scale(d)));
  const auto write_mat = [&](const typename LstmNet<Scalar>::Mat& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(Scalar)) * m.size());
  };
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    write_mat(net.w[l]);
    out.write(reinterpret_cast<const char*>(net.b[l].data()),
              static_cast<std::streamsize>(sizeof(Scalar)) * net.b[l].size());
  }
  write_mat(net.w_out);
  out.write(reinterpret_cast<const char*>(net.b_out.data()),
            static_cast<std::streamsize>(sizeof(Scalar)) * net.b_out.size());
  if (!out) throw std::runtime_error("failed writing weight file: " + path);
}

template <typename Scalar>
LstmNet<Scalar> load_weights(const std::string& path,
                             const std::optional<LstmSpec>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weight file: " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a weight file: " + path);
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kWeightVersion)
    throw std::runtime_error("unsupported weight file version " +
                             std::to_string(version) + ": " + path);
  const auto dtype = read_raw<std::uint8_t>(in, path);
  if (dtype != sizeof(Scalar))
    throw SpecMismatchError("weight file " + path + " stores " +
                            std::to_string(int(dtype) * 8) +
                            "-bit scalars; requested " +
                            std::to_string(sizeof(Scalar) * 8) + "-bit");
  LstmSpec spec;
  spec.num_layers = read_raw<std::int32_t>(in, path);
  spec.hidden_size = read_raw<std::int32_t>(in, path);
  spec.history_len = read_raw<std::int32_t>(in, path);
  spec.input_size = read_raw<std::int32_t>(in, path);
  spec.output_size = read_raw<std::int32_t>(in, path);
  spec.dropout_rate = read_raw<double>(in, path);
  validate(spec);
  if (expected) {
    const bool same = spec.num_layers == expected->num_layers &&
                      spec.hidden_size == expected->hidden_size &&
                      spec.history_len == expected->history_len &&
                      spec.input_size == expected->input_size &&
                      spec.output_size == expected->output_size &&
                      spec.dropout_rate == expected->dropout_rate;
    if (!same)
      throw SpecMismatchError("weight file " + path + " holds a " +
                              spec_label(spec) + " network; expected " +
                              spec_label(*expected));
  }
  LstmNet<Scalar> net = init_net<Scalar>(spec, 0);
  for (int d = 0; d < spec.input_size; ++d)
    net.feat_mean(d) = static_cast<Scalar>(read_raw<double>(in, path));
  for (int d = 0; d < spec.input_size; ++d)
    net.feat_scale(d) = static_cast<Scalar>(read_raw<double>(in, path));
  const auto read_block = [&](Scalar* dst, Eigen::Index n) {
    in.read(reinterpret_cast<char*>(dst),
            static_cast<std::streamsize>(sizeof(Scalar)) * n);
    if (!in) throw std::runtime_error("weight file truncated: " + path);
  };
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    read_block(net.w[l].data(), net.w[l].size());
    read_block(net.b[l].data(), net.b[l].size());
  }
  read_block(net.w_out.data(), net.w_out.size());
  read_block(net.b_out.data(), net.b_out.size());
  in.peek();
  if (!in.eof())
    throw std::runtime_error("weight file has trailing data: " + path);
  return net;
}

template std::pair<LstmNet<float>, TrainReport> train_series<float>(
    const SeriesView&, LstmSpec, const TrainConfig&);
template std::pair<LstmNet<double>, TrainReport> train_series<double>(
    const SeriesView&, LstmSpec, const TrainConfig&);
template double evaluate_series<float>(const LstmNet<float>&, const SeriesView&);
template double evaluate_series<double>(const LstmNet<double>&, const SeriesView&);
template void save_weights<float>(const LstmNet<float>&, const std::string&);
template void save_weights<double>(const LstmNet<double>&, const std::string&);
template LstmNet<float> load_weights<float>(const std::string&,
                                            const std::optional<LstmSpec>&);
template LstmNet<double> load_weights<double>(const std::string&,
                                              const std::optional<LstmSpec>&);

}  // namespace softctrl
