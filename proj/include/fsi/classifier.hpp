#pragma once

#include "fsi/episodes.hpp"
#include "fsi/types.hpp"

#include <span>
#include <vector>

namespace fsi {

/// Which multiplier scales the negative distances inside the softmax.
enum class ScaleSource { Gamma, Tau };

struct ClassifierOptions {
  double gamma = 10.0;  // initial learnable scale
  double tau = 15.0;    // fixed temperature
  /// Project prototypes onto the unit sphere. Squared distances between unit
  /// vectors are 2 - 2 cos, so this also serves as the cosine variant.
  bool normalize_prototypes = false;
};

struct Prototypes {
  Matrix weights;  // K x D, one row per task class
  double gamma = 10.0;
  double tau = 15.0;

  int ways() const { return static_cast<int>(weights.rows()); }
  double scale(ScaleSource source) const { return source == ScaleSource::Gamma ? gamma : tau; }
};

/// w_k = mean of the raw support features of class k.
Prototypes init_prototypes(const Task& task, const ClassifierOptions& options = {});

/// D(i, k) = ||z_i - w_k||^2 for rows of `z` and `w`.
Matrix squared_distances(const Matrix& z, const Matrix& w);

/// Row softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// softmax_k(-s * ||z_i - w_k||^2) for already-normalized rows z.
Posterior posterior_normalized(const Matrix& w, const Matrix& z, double scale);

/// Normalizes the rows of x, then applies posterior_normalized.
Posterior posterior(const Prototypes& proto, const Matrix& x, ScaleSource source);

/// Row argmax; ties go to the lowest class index.
Labels predict(const Posterior& p);

/// Fraction of matches. Throws DataError on empty input.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

}  // namespace fsi
