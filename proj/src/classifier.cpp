#include "fsi/classifier.hpp"

#include "fsi/error.hpp"
#include "fsi/features.hpp"

#include <cmath>

namespace fsi {

Prototypes init_prototypes(const Task& task, const ClassifierOptions& options) {
  Prototypes proto;
  proto.gamma = options.gamma;
  proto.tau = options.tau;
  proto.weights = Matrix::Zero(task.ways, task.support_x.cols());
  std::vector<int> counts(task.ways, 0);
  for (Eigen::Index i = 0; i < task.support_x.rows(); ++i) {
    const int k = task.support_y[i];
    proto.weights.row(k) += task.support_x.row(i);
    ++counts[k];
  }
  for (int k = 0; k < task.ways; ++k) {
    if (counts[k] == 0) throw DataError("support set has no sample of class " + std::to_string(k));
    proto.weights.row(k) /= counts[k];
  }
  if (options.normalize_prototypes) proto.weights = normalize_rows(proto.weights);
  return proto;
}

Matrix squared_distances(const Matrix& z, const Matrix& w) {
  Matrix d = -2.0 * (z * w.transpose());
  d.colwise() += z.rowwise().squaredNorm();
  d.rowwise() += w.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Posterior posterior_normalized(const Matrix& w, const Matrix& z, double scale) {
  return softmax_rows(-scale * squared_distances(z, w));
}

Posterior posterior(const Prototypes& proto, const Matrix& x, ScaleSource source) {
  if (x.rows() == 0) throw DataError("posterior of an empty feature matrix");
  return posterior_normalized(proto.weights, normalize_rows(x), proto.scale(source));
}

Labels predict(const Posterior& p) {
  Labels out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < p.cols(); ++k) {
      if (p(i, k) > p(i, best)) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (truth.empty()) throw DataError("accuracy is undefined for an empty query set");
  if (predicted.size() != truth.size()) throw DataError("prediction and truth lengths differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

}  // namespace fsi
