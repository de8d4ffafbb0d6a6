#pragma once

// Shared numerics for losses, gradients and solvers operating on
// pre-normalized feature rows.

#include "fsi/losses.hpp"
#include "fsi/optim.hpp"
#include "fsi/types.hpp"

#include <span>

namespace fsi::detail {

struct Block {
  Matrix d;  // squared distances, n x K
  Matrix p;  // posterior, n x K
};

Block evaluate(const Matrix& z, const Matrix& w, double scale);

/// Adds dL/dW and dL/ds for a loss whose logit gradient on this block is
/// `logit_grad` (n x K).
void accumulate(Gradient& g, const Matrix& z, const Matrix& w, double scale, const Block& block,
                const Matrix& logit_grad);

Matrix logit_grad_ce(const Matrix& p, std::span<const int> labels);
Matrix logit_grad_conditional(const Matrix& p);
Matrix logit_grad_marginal(const Matrix& p);
/// Logit gradient of sum_ik s d_ik P_ik with P differentiated.
Matrix logit_grad_expected(const Block& block, double scale);

/// Sum of s * d * P over the block.
double weighted_distance(const Block& block, double scale);

/// TIM value and gradient on normalized support/query rows.
double tim_value(const Block& support, std::span<const int> support_y, const Block& query,
                 const TimWeights& w);
Gradient tim_gradient(const Matrix& zs, std::span<const int> support_y, const Matrix& zq,
                      const Matrix& w, double scale, const Block& support, const Block& query,
                      const TimWeights& weights);

bool all_finite(const Matrix& m);

}  // namespace fsi::detail
