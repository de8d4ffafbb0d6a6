#pragma once

#include "fsi/classifier.hpp"
#include "fsi/error.hpp"
#include "fsi/episodes.hpp"
#include "fsi/losses.hpp"
#include "fsi/types.hpp"

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fsi {

/// Gradient with respect to the prototype matrix and the softmax scale.
struct Gradient {
  Matrix weights;
  double scale = 0.0;
};

// Analytic gradients. Each loss is a function of the logits
// l(i, k) = -s * ||z_i - w_k||^2, so with G = dL/dl
//   dL/dw_k = 2 s sum_i G(i, k) (z_i - w_k),   dL/ds = -sum_ik G(i, k) d(i, k).

Gradient grad_cross_entropy(const Prototypes& proto, const Matrix& x, std::span<const int> labels,
                            ScaleSource source);
Gradient grad_weighted_distance(const Prototypes& proto, const Matrix& x, ScaleSource source,
                                bool stop_gradient);
Gradient grad_lse(const Prototypes& proto, const Matrix& x, ScaleSource source);
Gradient grad_expected_distance(const Prototypes& proto, const Matrix& x, ScaleSource source);

/// Gradient of tim_loss (scale = tau).
Gradient grad_tim(const Prototypes& proto, const Task& task, const TimWeights& weights);

/// Gradient of poodle_loss (scale = gamma).
Gradient grad_poodle(const Prototypes& proto, const Matrix& support, std::span<const int> support_y,
                     const Matrix& positives, const Matrix& negatives, const PoodleWeights& weights);

/// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& loss, const Vector& x,
                                  double h = 1e-5);

struct AdamState {
  Matrix first_moment;
  Matrix second_moment;
  long step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(Eigen::Index rows, Eigen::Index cols, double lr);
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, Matrix& params, const Matrix& gradient);

struct TraceRecord {
  int iteration = 0;
  double wall_seconds = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;  // NaN when no ground truth was supplied
  double mutual_information = 0.0;
};

/// One record for the initial state and one after every iteration.
struct SolverTrace {
  std::vector<TraceRecord> records;
};

struct SolveResult {
  Prototypes prototypes;
  SolverTrace trace;
};

struct GdOptions {
  int iters = 1000;
  double lr = 1e-3;
};

enum class PoodleMode { Inductive, Transductive };

struct PoodleOptions {
  int iters = 250;
  double lr = 1e-3;
  PoodleMode mode = PoodleMode::Transductive;
  bool learn_scale = false;
};

/// Losses beyond this magnitude count as divergence.
inline constexpr double kDivergenceThreshold = 1e12;

/// Adam on the prototypes of the TIM loss. `query_truth` is only used for the
/// trace. Throws DivergenceError on a non-finite or exploding loss.
SolveResult run_tim_gd(const Task& task, const TimWeights& weights, const GdOptions& options = {},
                       const ClassifierOptions& classifier = {},
                       std::span<const int> query_truth = {});

/// CE + H(Y|X) on the prototypes only.
SolveResult run_entmin(const Task& task, const GdOptions& options = {},
                       const ClassifierOptions& classifier = {},
                       std::span<const int> query_truth = {});

SolveResult run_poodle(const Task& task, const PoodleWeights& weights,
                       const PoodleOptions& options = {}, const ClassifierOptions& classifier = {},
                       std::span<const int> query_truth = {});

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, int iteration, SolverTrace prefix)
      : NumericError(what, iteration), trace_(std::move(prefix)) {}

  const SolverTrace& trace() const noexcept { return trace_; }

 private:
  SolverTrace trace_;
};

}  // namespace fsi
