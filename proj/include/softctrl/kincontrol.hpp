#pragma once

#include <Eigen/Dense>

#include "softctrl/core.hpp"

namespace softctrl {

// Online estimate of the linear command-to-position map K from a sliding
// window of recent observations. Column k of positions pairs with column k
// of actuations one step earlier: [p_t ... p_{t-w+1}] against
// [a_{t-1} ... a_{t-w}], newest first.
struct KinematicsState {
  Eigen::MatrixXd k;          // dim x dim, mm per unit command
  Eigen::MatrixXd positions;  // dim x window_len, newest column first
  Eigen::MatrixXd actuations; // dim x window_len, newest column first
  int filled = 0;             // columns currently valid (<= window_len)
  int window_len = 5;
  double ridge = 1e-2;        // pull toward the previous K, >= 0

  int dim() const { return static_cast<int>(k.rows()); }
};

// K starts at identity; windows start empty. The default ridge is sized so
// that closed-loop windows with barely-moving commands (near-collinear
// columns) keep the fit pinned to the previous map instead of letting sensor
// noise swing the unobserved direction by tens of mm per unit.
KinematicsState init_kin_state(int dim = 2, int window_len = 5,
                               double ridge = 1e-2);

void push_observation(KinematicsState& state, const Eigen::VectorXd& position,
                      const Eigen::VectorXd& prior_actuation);
void push_observation(KinematicsState& state, const Position2& position,
                      const Actuation2& prior_actuation);

// Minimizes ||P - K A||_F^2 + ridge ||K - K_prev||_F^2 over the filled
// window columns, warm-started from the current K. Returns false (leaving K
// unchanged) when fewer than 2 columns are held. The regularized residual
// never exceeds the warm start's, and with ridge = 0 on a rank-deficient
// window the minimum-change minimizer is taken.
bool update_k(KinematicsState& state);

// Value of the objective update_k minimizes, for a candidate K against the
// current window and the current state.k as the anchor.
double regularized_residual(const KinematicsState& state,
                            const Eigen::MatrixXd& candidate);

// argmin ||target - K a|| subject to every component of a in [-1, 1];
// ties broken by minimum-norm a. Exact for dim 1 and 2 (interior point,
// edge, and corner candidates are enumerated).
Eigen::VectorXd solve_actuation(const KinematicsState& state,
                                const Eigen::VectorXd& target);
Actuation2 solve_actuation(const KinematicsState& state,
                           const Position2& target);

}  // namespace softctrl
