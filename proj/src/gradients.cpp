#include "detail.hpp"

#include "fsi/classifier.hpp"
#include "fsi/error.hpp"
#include "fsi/features.hpp"

#include <algorithm>
#include <cmath>

namespace fsi {

namespace detail {

namespace {

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

}  // namespace

Block evaluate(const Matrix& z, const Matrix& w, double scale) {
  Block b;
  b.d = squared_distances(z, w);
  b.p = softmax_rows(-scale * b.d);
  return b;
}

void accumulate(Gradient& g, const Matrix& z, const Matrix& w, double scale, const Block& block,
                const Matrix& logit_grad) {
  if (z.rows() == 0) return;
  // l_ik = -s ||z_i - w_k||^2  =>  dl_ik/dw_k = 2 s (z_i - w_k),  dl_ik/ds = -d_ik
  const Eigen::RowVectorXd mass = logit_grad.colwise().sum();
  g.weights.noalias() += 2.0 * scale * (logit_grad.transpose() * z);
  g.weights -= 2.0 * scale * (mass.transpose().asDiagonal() * w);
  g.scale -= (logit_grad.array() * block.d.array()).sum();
}

Matrix logit_grad_ce(const Matrix& p, std::span<const int> labels) {
  Matrix g = p;
  for (std::size_t i = 0; i < labels.size(); ++i) g(i, labels[i]) -= 1.0;
  return labels.empty() ? g : Matrix(g / static_cast<double>(labels.size()));
}

Matrix logit_grad_conditional(const Matrix& p) {
  // d/dl_ij of -(1/Q) sum_k P_ik log P_ik = -(1/Q) P_ij (log P_ij + H_i)
  Matrix g(p.rows(), p.cols());
  const double inv_q = 1.0 / static_cast<double>(std::max<Eigen::Index>(p.rows(), 1));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < p.cols(); ++k) h -= p(i, k) * safe_log(p(i, k));
    for (Eigen::Index k = 0; k < p.cols(); ++k) g(i, k) = -inv_q * p(i, k) * (safe_log(p(i, k)) + h);
  }
  return g;
}

Matrix logit_grad_marginal(const Matrix& p) {
  // d/dl_ij of H(mean_i P) = -(1/Q) P_ij (log pbar_j - sum_k P_ik log pbar_k)
  Matrix g(p.rows(), p.cols());
  if (p.rows() == 0) return g;
  const double inv_q = 1.0 / static_cast<double>(p.rows());
  const Eigen::RowVectorXd mean = p.colwise().mean();
  Eigen::RowVectorXd log_mean(mean.size());
  for (Eigen::Index k = 0; k < mean.size(); ++k) log_mean[k] = safe_log(mean[k]);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double avg = p.row(i).dot(log_mean);
    g.row(i) = -inv_q * p.row(i).array() * (log_mean.array() - avg);
  }
  return g;
}

Matrix logit_grad_expected(const Block& block, double scale) {
  // L = -sum_k l_k P_k  =>  dL/dl_j = -P_j (1 + l_j - sum_k P_k l_k)
  Matrix g(block.p.rows(), block.p.cols());
  for (Eigen::Index i = 0; i < block.p.rows(); ++i) {
    const auto l = (-scale * block.d.row(i)).eval();
    const double avg = block.p.row(i).dot(l);
    g.row(i) = -block.p.row(i).array() * (1.0 + l.array() - avg);
  }
  return g;
}

double weighted_distance(const Block& block, double scale) {
  return scale * (block.d.array() * block.p.array()).sum();
}

double tim_value(const Block& support, std::span<const int> support_y, const Block& query,
                 const TimWeights& w) {
  return tim_loss(support.p, support_y, query.p, w);
}

Gradient tim_gradient(const Matrix& zs, std::span<const int> support_y, const Matrix& zq,
                      const Matrix& w, double scale, const Block& support, const Block& query,
                      const TimWeights& weights) {
  Gradient g{Matrix::Zero(w.rows(), w.cols()), 0.0};
  if (weights.use_ce && weights.lambda_ce != 0.0) {
    accumulate(g, zs, w, scale, support, weights.lambda_ce * logit_grad_ce(support.p, support_y));
  }
  if (zq.rows() > 0 && (weights.use_conditional || weights.use_marginal)) {
    Matrix gq = Matrix::Zero(zq.rows(), w.rows());
    if (weights.use_conditional) gq += weights.alpha_cond * logit_grad_conditional(query.p);
    if (weights.use_marginal) gq -= logit_grad_marginal(query.p);
    accumulate(g, zq, w, scale, query, gq);
  }
  return g;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

namespace {

Gradient zero_gradient(const Prototypes& proto) {
  return Gradient{Matrix::Zero(proto.weights.rows(), proto.weights.cols()), 0.0};
}

}  // namespace

Gradient grad_cross_entropy(const Prototypes& proto, const Matrix& x, std::span<const int> labels,
                            ScaleSource source) {
  Gradient g = zero_gradient(proto);
  if (x.rows() == 0) return g;
  const double s = proto.scale(source);
  const Matrix z = normalize_rows(x);
  const detail::Block b = detail::evaluate(z, proto.weights, s);
  detail::accumulate(g, z, proto.weights, s, b, detail::logit_grad_ce(b.p, labels));
  return g;
}

Gradient grad_weighted_distance(const Prototypes& proto, const Matrix& x, ScaleSource source,
                                bool stop_gradient) {
  if (!stop_gradient) return grad_expected_distance(proto, x, source);
  Gradient g = zero_gradient(proto);
  if (x.rows() == 0) return g;
  const double s = proto.scale(source);
  const Matrix z = normalize_rows(x);
  const detail::Block b = detail::evaluate(z, proto.weights, s);
  // Posterior weights held constant: dL/dl = -P.
  detail::accumulate(g, z, proto.weights, s, b, -b.p);
  return g;
}

Gradient grad_lse(const Prototypes& proto, const Matrix& x, ScaleSource source) {
  Gradient g = zero_gradient(proto);
  if (x.rows() == 0) return g;
  const double s = proto.scale(source);
  const Matrix z = normalize_rows(x);
  const Matrix d = squared_distances(z, proto.weights);
  // dw_j = sum_i softmax_j(-s d_i) * 2 s (w_j - z_i), written out directly.
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::RowVectorXd logits = -s * d.row(i);
    const double m = logits.maxCoeff();
    const Eigen::RowVectorXd e = (logits.array() - m).exp();
    const double total = e.sum();
    for (Eigen::Index j = 0; j < proto.weights.rows(); ++j) {
      const double pj = e[j] / total;
      g.weights.row(j) += pj * 2.0 * s * (proto.weights.row(j) - z.row(i));
      g.scale += pj * d(i, j);
    }
  }
  return g;
}

Gradient grad_expected_distance(const Prototypes& proto, const Matrix& x, ScaleSource source) {
  Gradient g = zero_gradient(proto);
  if (x.rows() == 0) return g;
  const double s = proto.scale(source);
  const Matrix z = normalize_rows(x);
  const detail::Block b = detail::evaluate(z, proto.weights, s);
  detail::accumulate(g, z, proto.weights, s, b, detail::logit_grad_expected(b, s));
  return g;
}

Gradient grad_tim(const Prototypes& proto, const Task& task, const TimWeights& weights) {
  const double s = proto.tau;
  const Matrix zs = normalize_rows(task.support_x);
  const Matrix zq = task.query_x.rows() > 0 ? normalize_rows(task.query_x) : Matrix(0, proto.weights.cols());
  const detail::Block bs = detail::evaluate(zs, proto.weights, s);
  const detail::Block bq = detail::evaluate(zq, proto.weights, s);
  Gradient g = detail::tim_gradient(zs, task.support_y, zq, proto.weights, s, bs, bq, weights);
  if (!g.weights.allFinite() || !std::isfinite(g.scale)) {
    throw NumericError("non-finite TIM gradient", 0);
  }
  return g;
}

Gradient grad_poodle(const Prototypes& proto, const Matrix& support, std::span<const int> support_y,
                     const Matrix& positives, const Matrix& negatives, const PoodleWeights& weights) {
  Gradient g = grad_cross_entropy(proto, support, support_y, ScaleSource::Gamma);
  auto add = [&g](const Gradient& other, double c) {
    g.weights += c * other.weights;
    g.scale += c * other.scale;
  };
  if (weights.alpha_pull != 0.0 && positives.rows() > 0) {
    add(grad_weighted_distance(proto, positives, ScaleSource::Gamma, weights.stop_grad_pull),
        weights.alpha_pull);
  }
  if (weights.beta_push != 0.0 && negatives.rows() > 0) {
    add(grad_weighted_distance(proto, negatives, ScaleSource::Gamma, weights.stop_grad_push),
        -weights.beta_push);
  }
  return g;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& loss, const Vector& x,
                                  double h) {
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double up = loss(probe);
    probe[j] = x[j] - h;
    const double down = loss(probe);
    probe[j] = x[j];
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace fsi
