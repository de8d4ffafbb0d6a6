#pragma once

#include "fsi/classifier.hpp"
#include "fsi/episodes.hpp"
#include "fsi/losses.hpp"
#include "fsi/optim.hpp"

#include <span>

namespace fsi {

// Alternating minimization of the soft-assignment surrogate
//
//   F(W, q) = (a / |S|) sum_{i in S} s d(z_i, w_{y_i})
//           + (b / |Q|) sum_{i in Q} sum_k q_ik s d(z_i, w_k)
//           + (1 / |Q|) sum_{i,k} q_ik log q_ik
//           + m sum_k qbar_k log qbar_k
//
// with a = lambda_ce (0 without CE), b = 1 + alpha_cond (1 without the
// conditional term), m = 1 with the marginal term and 0 without, and
// qbar = column mean of q. See docs/tim_adm.md for the derivation.

struct AdmOptions {
  int iters = 150;
  /// Inner fixed-point iterations for the marginal balancing factors.
  int max_inner = 200;
  double inner_tolerance = 1e-13;
};

/// Exact minimizer of F over q for fixed W:
///   q_ik = softmax_k(b * log p_ik - m * log u_k),  u = column mean of q,
/// with u found by a damped fixed point warm-started from q_prev. Without the
/// marginal term this is p^b renormalized.
Matrix update_q(const Prototypes& proto, const Matrix& query_x, const Matrix& q_prev,
                const TimWeights& weights, const AdmOptions& options = {});

/// Exact minimizer of F over W for fixed q: each w_k is the weighted mean
///   (a/|S| sum_{S_k} z_i + b/|Q| sum_i q_ik z_i) / (a |S_k| / |S| + b/|Q| sum_i q_ik)
/// of normalized features. A class with zero total weight keeps `current`.
Prototypes update_w(const Matrix& support_x, std::span<const int> support_y, const Matrix& query_x,
                    const Matrix& q, const TimWeights& weights, const Prototypes& current);

double adm_surrogate(const Prototypes& proto, const Matrix& q, const Task& task,
                     const TimWeights& weights);

/// q starts at the posterior of the initial prototypes. The trace records the
/// true TIM loss.
SolveResult run_tim_adm(const Task& task, const TimWeights& weights, const AdmOptions& options = {},
                        const ClassifierOptions& classifier = {},
                        std::span<const int> query_truth = {});

}  // namespace fsi
