#pragma once

#include "fsi/classifier.hpp"
#include "fsi/types.hpp"

#include <span>
#include <string>

namespace fsi {

/// Weights of the mutual-information objective
///   lambda_ce * CE(support) + alpha_cond * H(Y|X) - H(Y)
/// on query predictions. The flags select the ablation variants.
struct TimWeights {
  double lambda_ce = 0.1;
  double alpha_cond = 0.1;
  bool use_ce = true;
  bool use_marginal = true;
  bool use_conditional = true;

  static TimWeights full() { return {}; }
  static TimWeights ce_only() { return {0.1, 0.1, true, false, false}; }
  static TimWeights ce_conditional() { return {0.1, 0.1, true, false, true}; }
  static TimWeights ce_marginal() { return {0.1, 0.1, true, true, false}; }

  /// "full", "ce", "ce+cond", "ce-marg"
  std::string label() const;
  static TimWeights from_label(const std::string& label);
};

/// CE(support) + alpha * pull(positives) - beta * push(negatives).
struct PoodleWeights {
  double alpha_pull = 1.0;
  double beta_push = 0.5;
  bool stop_grad_pull = true;
  bool stop_grad_push = true;
};

/// Probabilities are clamped below at this value before taking logs.
inline constexpr double kLogFloor = 1e-300;

/// -(1/n) sum_i log P(i, y_i)
double cross_entropy(const Posterior& p, std::span<const int> labels);

/// -(1/Q) sum_i sum_k P log P, with 0 log 0 = 0
double conditional_entropy(const Posterior& p);

/// Entropy of the column mean of P.
double marginal_entropy(const Posterior& p);

/// H(Y) - alpha * H(Y|X)
double mutual_information(const Posterior& p, double alpha);

double tim_loss(const Posterior& support_p, std::span<const int> support_y, const Posterior& query_p,
                const TimWeights& weights);

/// Value of the TIM loss for prototypes on a task (scale = tau).
double tim_loss(const Prototypes& proto, const Task& task, const TimWeights& weights);

/// sum_i sum_k s * d(z_i, w_k) * P(i, k). The flag only changes gradients.
double weighted_distance_loss(const Prototypes& proto, const Matrix& x, ScaleSource source,
                              bool treat_weights_as_constant = true);

/// -sum_i log sum_k exp(-s * d(z_i, w_k))
double lse_loss(const Prototypes& proto, const Matrix& x, ScaleSource source);

/// Same value as the weighted distance loss, differentiated through P.
double expected_distance_loss(const Prototypes& proto, const Matrix& x, ScaleSource source);

/// Sum over rows of the row Shannon entropy.
double summed_row_entropy(const Posterior& p);

/// Scale is gamma. Empty `negatives` (zero rows) drops the push term.
double poodle_loss(const Prototypes& proto, const Matrix& support, std::span<const int> support_y,
                   const Matrix& positives, const Matrix& negatives, const PoodleWeights& weights);

}  // namespace fsi
