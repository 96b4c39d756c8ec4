#include "softctrl/kincontrol.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace softctrl {

KinematicsState init_kin_state(int dim, int window_len, double ridge) {
  if (dim < 1) throw std::invalid_argument("kin: dim must be >= 1");
  if (window_len < 2) throw std::invalid_argument("kin: window_len must be >= 2");
  if (!(ridge >= 0.0)) throw std::invalid_argument("kin: ridge must be >= 0");
  KinematicsState s;
  s.k = Eigen::MatrixXd::Identity(dim, dim);
  s.positions = Eigen::MatrixXd::Zero(dim, window_len);
  s.actuations = Eigen::MatrixXd::Zero(dim, window_len);
  s.filled = 0;
  s.window_len = window_len;
  s.ridge = ridge;
  return s;
}

void push_observation(KinematicsState& state, const Eigen::VectorXd& position,
                      const Eigen::VectorXd& prior_actuation) {
  const int d = state.dim();
  if (position.size() != d || prior_actuation.size() != d)
    throw std::invalid_argument("push_observation: dimension mismatch");
  const int w = state.window_len;
  state.positions.rightCols(w - 1) = state.positions.leftCols(w - 1).eval();
  state.actuations.rightCols(w - 1) = state.actuations.leftCols(w - 1).eval();
  state.positions.col(0) = position;
  state.actuations.col(0) = prior_actuation;
  state.filled = std::min(state.filled + 1, w);
}

void push_observation(KinematicsState& state, const Position2& position,
                      const Actuation2& prior_actuation) {
  Eigen::Vector2d p(position.x, position.y);
  Eigen::Vector2d a(prior_actuation.u1, prior_actuation.u2);
  push_observation(state, p, a);
}

double regularized_residual(const KinematicsState& state,
                            const Eigen::MatrixXd& candidate) {
  const auto p = state.positions.leftCols(state.filled);
  const auto a = state.actuations.leftCols(state.filled);
  return (p - candidate * a).squaredNorm() +
         state.ridge * (candidate - state.k).squaredNorm();
}

bool update_k(KinematicsState& state) {
  if (state.filled < 2) return false;
  const int d = state.dim();
  const Eigen::MatrixXd p = state.positions.leftCols(state.filled);
  const Eigen::MatrixXd a = state.actuations.leftCols(state.filled);
  const Eigen::MatrixXd gram = a * a.transpose();
  if (state.ridge > 0.0) {
    const Eigen::MatrixXd m =
        gram + state.ridge * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd rhs = p * a.transpose() + state.ridge * state.k;
    state.k = m.ldlt().solve(rhs.transpose()).transpose();
    return true;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lu.isInvertible()) {
    state.k = (p * a.transpose()) * lu.inverse();
    return true;
  }
  // Rank-deficient window at ridge 0: among all minimizers of ||P - KA||,
  // take the one closest to the previous K (change only along the span of
  // the observed actuations).
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-12);
  const Eigen::MatrixXd pinv_a = svd.solve(Eigen::MatrixXd::Identity(d, d));
  state.k = state.k + (p - state.k * a) * pinv_a;
  return true;
}

namespace {

double objective(const Eigen::MatrixXd& k, const Eigen::VectorXd& a,
                 const Eigen::VectorXd& target) {
  return (target - k * a).squaredNorm();
}

}  // namespace

Eigen::VectorXd solve_actuation(const KinematicsState& state,
                                const Eigen::VectorXd& target) {
  const int d = state.dim();
  if (target.size() != d)
    throw std::invalid_argument("solve_actuation: dimension mismatch");
  if (!state.k.allFinite())
    throw std::invalid_argument("solve_actuation: K has non-finite entries");
  const Eigen::MatrixXd& k = state.k;

  std::vector<Eigen::VectorXd> candidates;
  if (d == 1) {
    const double kk = k(0, 0);
    Eigen::VectorXd a(1);
    a(0) = kk != 0.0 ? std::clamp(target(0) / kk, -1.0, 1.0) : 0.0;
    candidates.push_back(a);
  } else if (d == 2) {
    // Unconstrained minimizer (exact inverse when K is well conditioned,
    // minimum-norm least squares otherwise).
    const double det = k(0, 0) * k(1, 1) - k(0, 1) * k(1, 0);
    const double scale = k.cwiseAbs().maxCoeff();
    if (std::abs(det) > 1e-12 * std::max(1.0, scale * scale)) {
      Eigen::Vector2d a0 = k.inverse() * target;
      if (a0.cwiseAbs().maxCoeff() <= 1.0) candidates.emplace_back(a0);
    } else {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(
          k, Eigen::ComputeThinU | Eigen::ComputeThinV);
      svd.setThreshold(1e-12);
      Eigen::VectorXd a0 = svd.solve(target);
      for (int i = 0; i < 2; ++i) a0(i) = std::clamp(a0(i), -1.0, 1.0);
      candidates.emplace_back(a0);
    }
    // One coordinate pinned at a bound, the other minimized and clamped:
    // covers every edge and corner of the box.
    for (int pinned = 0; pinned < 2; ++pinned) {
      const int free = 1 - pinned;
      const Eigen::Vector2d col_p = k.col(pinned);
      const Eigen::Vector2d col_f = k.col(free);
      const double denom = col_f.squaredNorm();
      for (double v : {-1.0, 1.0}) {
        Eigen::VectorXd a(2);
        a(pinned) = v;
        const Eigen::Vector2d resid = target - v * col_p;
        a(free) = denom > 0.0 ? std::clamp(col_f.dot(resid) / denom, -1.0, 1.0)
                              : 0.0;
        candidates.push_back(a);
      }
    }
  } else {
    throw std::invalid_argument("solve_actuation: only dim 1 and 2 supported");
  }

  double best_obj = std::numeric_limits<double>::infinity();
  double best_norm = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(d);
  for (const auto& a : candidates) {
    const double obj = objective(k, a, target);
    const double nrm = a.squaredNorm();
    const double tol = 1e-12 * (1.0 + best_obj);
    if (obj < best_obj - tol || (std::abs(obj - best_obj) <= tol && nrm < best_norm)) {
      best_obj = obj;
      best_norm = nrm;
      best = a;
    }
  }
  return best;
}

Actuation2 solve_actuation(const KinematicsState& state,
                           const Position2& target) {
  Eigen::Vector2d t(target.x, target.y);
  const Eigen::VectorXd a = solve_actuation(state, t);
  return {a(0), a(1)};
}

}  // namespace softctrl
