#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "softctrl/core.hpp"
#include "softctrl/dataset.hpp"
#include "softctrl/rng.hpp"

namespace softctrl {

// Network shape. The label convention is
// layers-history-hidden-dropout, e.g. "4-10-128-0.1".
struct LstmSpec {
  int num_layers = 4;
  int hidden_size = 128;
  int history_len = 10;     // window of previous steps fed per prediction
  double dropout_rate = 0.1;
  int input_size = 6;       // per-step features (position, prior command, target)
  int output_size = 2;
};

void validate(const LstmSpec& spec);
LstmSpec parse_lstm_spec(const std::string& label);
std::string spec_label(const LstmSpec& spec);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 30;
  int patience = 5;        // epochs without val improvement before stopping
  double clip_norm = 5.0;  // global gradient-norm clip, 0 disables
  std::uint64_t seed = 0;
  // Per-feature z-normalization; computed from the train split when empty.
  std::vector<double> feat_mean, feat_scale;
};

struct TrainReport {
  std::vector<double> train_loss;  // one entry per epoch run
  std::vector<double> val_loss;
  int best_epoch = -1;  // 0-based index of the kept weights
  int epochs_run = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double wall_seconds = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch_, const std::string& what)
      : std::runtime_error(what), epoch(epoch_) {}
  int epoch;
};

class SpecMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct LstmNet {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  LstmSpec spec;
  // Per layer: gate weights over the concatenated [h_prev, x] input, rows
  // stacked [forget; input; candidate; output], each block hidden_size tall.
  std::vector<Mat> w;
  std::vector<Vec> b;
  Mat w_out;  // output_size x hidden_size readout on the final hidden state
  Vec b_out;
  Vec feat_mean, feat_scale;  // input_size each

  int layer_input(int layer) const {
    return layer == 0 ? spec.input_size : spec.hidden_size;
  }
};

using LstmNetF = LstmNet<float>;
using LstmNetD = LstmNet<double>;

// Generic multichannel time series; the planar robot uses 2/2 channels,
// the 1-DOF arm 1/1. Column j holds the sample at step j.
struct SeriesView {
  Eigen::MatrixXd positions;   // pos_dim x n
  Eigen::MatrixXd actuations;  // act_dim x n
  SplitRange train, val, test;
};

SeriesView to_series(const Dataset& ds);

struct HistoryItem {
  Position2 position;
  Actuation2 prior_command;  // command issued one step before the position
};

namespace lstm_detail {

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// Anchor indices t usable as supervised samples within [range.begin,
// range.end): the window needs a_{t-H} back to exist and p_{t+1} ahead.
inline std::vector<int> window_anchors(const SplitRange& range, int history_len) {
  std::vector<int> anchors;
  const int begin = static_cast<int>(range.begin);
  const int end = static_cast<int>(range.end);
  for (int t = begin + history_len; t + 1 < end; ++t) anchors.push_back(t);
  return anchors;
}

// Feature column layout: [position (pos_dim), prior actuation (act_dim),
// window target (pos_dim)], z-normalized.
template <typename Scalar>
void fill_window(const SeriesView& sv, const LstmNet<Scalar>& net, int anchor,
                 int batch_col,
                 std::vector<typename LstmNet<Scalar>::Mat>& x_steps) {
  const int h = net.spec.history_len;
  const int pd = static_cast<int>(sv.positions.rows());
  const int ad = static_cast<int>(sv.actuations.rows());
  for (int s = 0; s < h; ++s) {
    const int j = anchor - h + 1 + s;
    auto col = x_steps[static_cast<std::size_t>(s)].col(batch_col);
    for (int d = 0; d < pd; ++d)
      col(d) = (Scalar(sv.positions(d, j)) - net.feat_mean(d)) / net.feat_scale(d);
    for (int d = 0; d < ad; ++d)
      col(pd + d) = (Scalar(sv.actuations(d, j - 1)) - net.feat_mean(pd + d)) /
                    net.feat_scale(pd + d);
    for (int d = 0; d < pd; ++d)
      col(pd + ad + d) =
          (Scalar(sv.positions(d, anchor + 1)) - net.feat_mean(pd + ad + d)) /
          net.feat_scale(pd + ad + d);
  }
}

// Forward pass over a batch of windows; optionally keeps every activation
// for backprop. Dropout masks (one per layer boundary, constant over time
// steps) are applied when provided.
template <typename Scalar>
struct ForwardCache {
  using Mat = typename LstmNet<Scalar>::Mat;
  // [layer][step]: input fed to the layer (post-dropout), gate activations,
  // cell states, and hidden outputs (pre-dropout).
  std::vector<std::vector<Mat>> x, f, i, ct, o, c, h;
  Mat pred;  // output_size x batch
};

template <typename Scalar>
void forward_batch(const LstmNet<Scalar>& net,
                   const std::vector<typename LstmNet<Scalar>::Mat>& x0,
                   const std::vector<typename LstmNet<Scalar>::Mat>* dropout_masks,
                   ForwardCache<Scalar>* cache,
                   typename LstmNet<Scalar>::Mat& pred) {
  using Mat = typename LstmNet<Scalar>::Mat;
  const LstmSpec& spec = net.spec;
  const int steps = spec.history_len;
  const int hs = spec.hidden_size;
  const auto batch = static_cast<int>(x0.front().cols());
  if (cache) {
    cache->x.assign(spec.num_layers, {});
    cache->f.assign(spec.num_layers, {});
    cache->i.assign(spec.num_layers, {});
    cache->ct.assign(spec.num_layers, {});
    cache->o.assign(spec.num_layers, {});
    cache->c.assign(spec.num_layers, {});
    cache->h.assign(spec.num_layers, {});
  }
  Mat layer_in_step;  // reused buffer
  std::vector<Mat> current = x0;
  Mat h_prev, c_prev, gates, f, i, ct, o, c, h;
  for (int l = 0; l < spec.num_layers; ++l) {
    const int in_l = net.layer_input(l);
    h_prev = Mat::Zero(hs, batch);
    c_prev = Mat::Zero(hs, batch);
    std::vector<Mat> outputs(static_cast<std::size_t>(steps));
    Mat concat(hs + in_l, batch);
    for (int s = 0; s < steps; ++s) {
      const Mat& x = current[static_cast<std::size_t>(s)];
      concat.topRows(hs) = h_prev;
      concat.bottomRows(in_l) = x;
      gates.noalias() = net.w[static_cast<std::size_t>(l)] * concat;
      gates.colwise() += net.b[static_cast<std::size_t>(l)];
      f = gates.topRows(hs).unaryExpr([](Scalar z) { return sigmoid(z); });
      i = gates.middleRows(hs, hs).unaryExpr([](Scalar z) { return sigmoid(z); });
      ct = gates.middleRows(2 * hs, hs).array().tanh();
      o = gates.bottomRows(hs).unaryExpr([](Scalar z) { return sigmoid(z); });
      c = f.cwiseProduct(c_prev) + i.cwiseProduct(ct);
      h = o.cwiseProduct(c.array().tanh().matrix());
      if (cache) {
        cache->x[static_cast<std::size_t>(l)].push_back(x);
        cache->f[static_cast<std::size_t>(l)].push_back(f);
        cache->i[static_cast<std::size_t>(l)].push_back(i);
        cache->ct[static_cast<std::size_t>(l)].push_back(ct);
        cache->o[static_cast<std::size_t>(l)].push_back(o);
        cache->c[static_cast<std::size_t>(l)].push_back(c);
        cache->h[static_cast<std::size_t>(l)].push_back(h);
      }
      outputs[static_cast<std::size_t>(s)] = h;
      h_prev = h;
      c_prev = c;
    }
    if (l + 1 < spec.num_layers && dropout_masks) {
      const Mat& mask = (*dropout_masks)[static_cast<std::size_t>(l)];
      for (Mat& out : outputs) out = out.cwiseProduct(mask);
    }
    current = std::move(outputs);
  }
  pred.noalias() = net.w_out * current.back();
  pred.colwise() += net.b_out;
  if (cache) cache->pred = pred;
}

template <typename Scalar>
struct Gradients {
  using Mat = typename LstmNet<Scalar>::Mat;
  using Vec = typename LstmNet<Scalar>::Vec;
  std::vector<Mat> w;
  std::vector<Vec> b;
  Mat w_out;
  Vec b_out;
};

template <typename Scalar>
Gradients<Scalar> zero_gradients(const LstmNet<Scalar>& net) {
  Gradients<Scalar> g;
  for (const auto& wl : net.w) g.w.push_back(LstmNet<Scalar>::Mat::Zero(wl.rows(), wl.cols()));
  for (const auto& bl : net.b) g.b.push_back(LstmNet<Scalar>::Vec::Zero(bl.size()));
  g.w_out = LstmNet<Scalar>::Mat::Zero(net.w_out.rows(), net.w_out.cols());
  g.b_out = LstmNet<Scalar>::Vec::Zero(net.b_out.size());
  return g;
}

// Mean squared error over every scalar output in the batch, plus its
// gradient through the full unrolled window.
template <typename Scalar>
Scalar backward_batch(const LstmNet<Scalar>& net, const ForwardCache<Scalar>& cache,
                      const typename LstmNet<Scalar>::Mat& labels,
                      const std::vector<typename LstmNet<Scalar>::Mat>* dropout_masks,
                      Gradients<Scalar>& grads) {
  using Mat = typename LstmNet<Scalar>::Mat;
  const LstmSpec& spec = net.spec;
  const int steps = spec.history_len;
  const int hs = spec.hidden_size;
  const auto batch = static_cast<int>(labels.cols());
  const Scalar inv_n = Scalar(1) / Scalar(batch * spec.output_size);

  const Mat diff = cache.pred - labels;
  const Scalar loss = diff.squaredNorm() * inv_n;
  const Mat dpred = Scalar(2) * inv_n * diff;

  const Mat& h_top_last = cache.h[static_cast<std::size_t>(spec.num_layers - 1)]
                              .back();
  Mat h_top_used = h_top_last;  // readout sees the pre-dropout top output
  grads.w_out.noalias() += dpred * h_top_used.transpose();
  grads.b_out.noalias() += dpred.rowwise().sum();

  // dh_ext[s]: gradient arriving at layer l's (pre-dropout) output h_{l,s}
  // from above (readout or the next layer's input path).
  std::vector<Mat> dh_ext(static_cast<std::size_t>(steps),
                          Mat::Zero(hs, batch));
  dh_ext.back().noalias() = net.w_out.transpose() * dpred;

  for (int l = spec.num_layers - 1; l >= 0; --l) {
    const int in_l = net.layer_input(l);
    const auto lu = static_cast<std::size_t>(l);
    // Dropout sits between this layer's output and the layer above; the
    // incoming gradient must pass back through the same mask.
    if (l + 1 < spec.num_layers && dropout_masks) {
      const Mat& mask = (*dropout_masks)[lu];
      for (Mat& d : dh_ext) d = d.cwiseProduct(mask);
    }
    std::vector<Mat> dx_lower;
    if (l > 0)
      dx_lower.assign(static_cast<std::size_t>(steps), Mat::Zero(hs, batch));
    Mat dh = Mat::Zero(hs, batch);
    Mat dc = Mat::Zero(hs, batch);
    Mat dgates(4 * hs, batch), concat(hs + in_l, batch), dconcat;
    for (int s = steps - 1; s >= 0; --s) {
      const auto su = static_cast<std::size_t>(s);
      dh += dh_ext[su];
      const Mat& f = cache.f[lu][su];
      const Mat& i = cache.i[lu][su];
      const Mat& ct = cache.ct[lu][su];
      const Mat& o = cache.o[lu][su];
      const Mat& c = cache.c[lu][su];
      const Mat tanh_c = c.array().tanh().matrix();
      const Mat c_prev = s > 0 ? cache.c[lu][su - 1] : Mat::Zero(hs, batch);
      const Mat h_prev = s > 0 ? cache.h[lu][su - 1] : Mat::Zero(hs, batch);

      const Mat dct_total =
          dc + dh.cwiseProduct(o).cwiseProduct(
                   (Scalar(1) - tanh_c.array().square()).matrix());
      dgates.topRows(hs) = dct_total.cwiseProduct(c_prev)
                               .cwiseProduct(f)
                               .cwiseProduct((Scalar(1) - f.array()).matrix());
      dgates.middleRows(hs, hs) =
          dct_total.cwiseProduct(ct).cwiseProduct(i).cwiseProduct(
              (Scalar(1) - i.array()).matrix());
      dgates.middleRows(2 * hs, hs) = dct_total.cwiseProduct(i).cwiseProduct(
          (Scalar(1) - ct.array().square()).matrix());
      dgates.bottomRows(hs) = dh.cwiseProduct(tanh_c)
                                  .cwiseProduct(o)
                                  .cwiseProduct((Scalar(1) - o.array()).matrix());

      concat.topRows(hs) = h_prev;
      concat.bottomRows(in_l) = cache.x[lu][su];
      grads.w[lu].noalias() += dgates * concat.transpose();
      grads.b[lu].noalias() += dgates.rowwise().sum();

      dconcat.noalias() = net.w[lu].transpose() * dgates;
      dh = dconcat.topRows(hs);
      if (l > 0) dx_lower[su] = dconcat.bottomRows(in_l);
      dc = dct_total.cwiseProduct(f);
    }
    if (l > 0) dh_ext = std::move(dx_lower);
  }
  return loss;
}

}  // namespace lstm_detail

// Single LSTM cell step for one layer, exactly the gate equations: sigmoid
// forget/input/output gates, tanh candidate and output squash, Hadamard
// products. Throws on any dimension mismatch.
template <typename Scalar>
void cell_forward(const LstmNet<Scalar>& net, int layer,
                  const typename LstmNet<Scalar>::Vec& x,
                  const typename LstmNet<Scalar>::Vec& h_prev,
                  const typename LstmNet<Scalar>::Vec& c_prev,
                  typename LstmNet<Scalar>::Vec& h_out,
                  typename LstmNet<Scalar>::Vec& c_out) {
  using Vec = typename LstmNet<Scalar>::Vec;
  if (layer < 0 || layer >= net.spec.num_layers)
    throw std::invalid_argument("cell_forward: layer out of range");
  const int hs = net.spec.hidden_size;
  const int in_l = net.layer_input(layer);
  if (x.size() != in_l || h_prev.size() != hs || c_prev.size() != hs)
    throw std::invalid_argument("cell_forward: dimension mismatch");
  Vec concat(hs + in_l);
  concat << h_prev, x;
  Vec gates = net.w[static_cast<std::size_t>(layer)] * concat +
              net.b[static_cast<std::size_t>(layer)];
  h_out.resize(hs);
  c_out.resize(hs);
  for (int r = 0; r < hs; ++r) {
    const Scalar f = lstm_detail::sigmoid(gates(r));
    const Scalar i = lstm_detail::sigmoid(gates(hs + r));
    const Scalar ct = std::tanh(gates(2 * hs + r));
    const Scalar o = lstm_detail::sigmoid(gates(3 * hs + r));
    c_out(r) = f * c_prev(r) + i * ct;
    h_out(r) = o * std::tanh(c_out(r));
  }
}

template <typename Scalar>
LstmNet<Scalar> init_net(const LstmSpec& spec, std::uint64_t seed) {
  validate(spec);
  using Mat = typename LstmNet<Scalar>::Mat;
  using Vec = typename LstmNet<Scalar>::Vec;
  LstmNet<Scalar> net;
  net.spec = spec;
  std::mt19937_64 rng(derive_seed(seed, "lstm-init"));
  const auto uniform_mat = [&](int rows, int cols) {
    const double r = 1.0 / std::sqrt(static_cast<double>(cols));
    Mat m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i)
        m(i, j) = static_cast<Scalar>(uniform_in(rng, -r, r));
    return m;
  };
  for (int l = 0; l < spec.num_layers; ++l) {
    const int in_l = net.layer_input(l);
    net.w.push_back(uniform_mat(4 * spec.hidden_size, spec.hidden_size + in_l));
    Vec b = Vec::Zero(4 * spec.hidden_size);
    // Forget gate biased open at the start; standard recurrent-net practice
    // so early training does not wash out the cell state.
    b.head(spec.hidden_size).setConstant(Scalar(1));
    net.b.push_back(b);
  }
  net.w_out = uniform_mat(spec.output_size, spec.hidden_size);
  net.b_out = Vec::Zero(spec.output_size);
  net.feat_mean = Vec::Zero(spec.input_size);
  net.feat_scale = Vec::Ones(spec.input_size);
  return net;
}

// Stateless inference: builds the feature window, runs the stack from zero
// initial states (dropout inactive), applies the readout, clamps to [-1, 1].
template <typename Scalar>
Eigen::VectorXd predict_actuation_generic(
    const LstmNet<Scalar>& net, const Eigen::VectorXd& target,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& history) {
  using Mat = typename LstmNet<Scalar>::Mat;
  const LstmSpec& spec = net.spec;
  if (static_cast<int>(history.size()) != spec.history_len)
    throw std::invalid_argument("predict_actuation: history must hold exactly " +
                                std::to_string(spec.history_len) + " entries");
  const int pd = static_cast<int>(target.size());
  const int ad = spec.output_size;
  if (pd + ad + pd != spec.input_size)
    throw std::invalid_argument("predict_actuation: feature dimension mismatch");
  std::vector<Mat> x_steps(static_cast<std::size_t>(spec.history_len));
  for (int s = 0; s < spec.history_len; ++s) {
    const auto& [pos, act] = history[static_cast<std::size_t>(s)];
    if (pos.size() != pd || act.size() != ad)
      throw std::invalid_argument("predict_actuation: history entry dimension");
    Mat col(spec.input_size, 1);
    for (int d = 0; d < pd; ++d)
      col(d, 0) = (Scalar(pos(d)) - net.feat_mean(d)) / net.feat_scale(d);
    for (int d = 0; d < ad; ++d)
      col(pd + d, 0) =
          (Scalar(act(d)) - net.feat_mean(pd + d)) / net.feat_scale(pd + d);
    for (int d = 0; d < pd; ++d)
      col(pd + ad + d, 0) = (Scalar(target(d)) - net.feat_mean(pd + ad + d)) /
                            net.feat_scale(pd + ad + d);
    x_steps[static_cast<std::size_t>(s)] = col;
  }
  Mat pred;
  lstm_detail::forward_batch<Scalar>(net, x_steps, nullptr, nullptr, pred);
  Eigen::VectorXd out(spec.output_size);
  for (int d = 0; d < spec.output_size; ++d)
    out(d) = std::clamp(static_cast<double>(pred(d, 0)), -1.0, 1.0);
  return out;
}

template <typename Scalar>
Actuation2 predict_actuation(const LstmNet<Scalar>& net, const Position2& target,
                             const std::vector<HistoryItem>& history) {
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> h;
  h.reserve(history.size());
  for (const HistoryItem& item : history) {
    Eigen::VectorXd p(2), a(2);
    p << item.position.x, item.position.y;
    a << item.prior_command.u1, item.prior_command.u2;
    h.emplace_back(std::move(p), std::move(a));
  }
  Eigen::VectorXd t(2);
  t << target.x, target.y;
  const Eigen::VectorXd out = predict_actuation_generic(net, t, h);
  return {out(0), out(1)};
}

template <typename Scalar>
std::pair<LstmNet<Scalar>, TrainReport> train_series(const SeriesView& sv,
                                                     LstmSpec spec,
                                                     const TrainConfig& cfg);

template <typename Scalar>
double evaluate_series(const LstmNet<Scalar>& net, const SeriesView& sv);

template <typename Scalar>
std::pair<LstmNet<Scalar>, TrainReport> train(const Dataset& ds,
                                              const LstmSpec& spec,
                                              const TrainConfig& cfg) {
  return train_series<Scalar>(to_series(ds), spec, cfg);
}

// Mean absolute actuation prediction error on the test split, normalized by
// the [-1, 1] actuation range (width 2); a fraction in [0, 1].
template <typename Scalar>
double evaluate(const LstmNet<Scalar>& net, const Dataset& ds) {
  return evaluate_series(net, to_series(ds));
}

template <typename Scalar>
void save_weights(const LstmNet<Scalar>& net, const std::string& path);

template <typename Scalar>
LstmNet<Scalar> load_weights(const std::string& path,
                             const std::optional<LstmSpec>& expected = {});

}  // namespace softctrl
