#include "fsi/tim_adm.hpp"

#include "detail.hpp"
#include "fsi/error.hpp"
#include "fsi/features.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace fsi {

namespace {

struct Coefficients {
  double support;   // a
  double query;     // b
  bool marginal;    // m
};

Coefficients coefficients(const TimWeights& w) {
  return {w.use_ce ? w.lambda_ce : 0.0, 1.0 + (w.use_conditional ? w.alpha_cond : 0.0), w.use_marginal};
}

Matrix q_step(const Matrix& d, double scale, const Matrix& q_prev, const TimWeights& weights,
              const AdmOptions& options) {
  const Coefficients c = coefficients(weights);
  const Eigen::Index n = d.rows();
  const Eigen::Index k = d.cols();
  // a_ik = exp(-b s d_ik), shifted per row; the shift cancels in every row.
  Matrix a = -c.query * scale * d;
  for (Eigen::Index i = 0; i < n; ++i) a.row(i).array() = (a.row(i).array() - a.row(i).maxCoeff()).exp();
  if (!c.marginal || n == 0) {
    for (Eigen::Index i = 0; i < n; ++i) a.row(i) /= a.row(i).sum();
    return a;
  }

  // q_ik = a_ik / u_k / Z_i with u = column mean of q. Solve for log u by the
  // damped iteration v <- (v + log mean(q(v))) / 2.
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(k, -std::log(static_cast<double>(k)));
  if (q_prev.rows() == n && q_prev.cols() == k) {
    const Eigen::RowVectorXd prev = q_prev.colwise().mean();
    if (prev.allFinite() && prev.minCoeff() > 0.0) v = prev.array().log();
  }
  Matrix q(n, k);
  auto assign = [&](const Eigen::RowVectorXd& logu) {
    const Eigen::RowVectorXd inv_u = (-logu).array().exp();
    for (Eigen::Index i = 0; i < n; ++i) {
      q.row(i) = a.row(i).cwiseProduct(inv_u);
      q.row(i) /= q.row(i).sum();
    }
  };
  for (int it = 0; it < options.max_inner; ++it) {
    assign(v);
    const Eigen::RowVectorXd mean = q.colwise().mean().cwiseMax(1e-300);
    const Eigen::RowVectorXd next = 0.5 * (v.array() + mean.array().log()).matrix();
    const double change = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (change < options.inner_tolerance) break;
  }
  assign(v);
  if (!q.allFinite()) throw NumericError("non-finite soft assignment", 0);
  return q;
}

Matrix w_step(const Matrix& zs, std::span<const int> support_y, const Matrix& zq, const Matrix& q,
              const TimWeights& weights, const Matrix& current) {
  const Coefficients c = coefficients(weights);
  const Eigen::Index k = current.rows();
  Matrix num = Matrix::Zero(k, current.cols());
  Eigen::VectorXd den = Eigen::VectorXd::Zero(k);
  if (c.support > 0.0 && zs.rows() > 0) {
    const double per_sample = c.support / static_cast<double>(zs.rows());
    for (Eigen::Index i = 0; i < zs.rows(); ++i) {
      num.row(support_y[i]) += per_sample * zs.row(i);
      den[support_y[i]] += per_sample;
    }
  }
  if (zq.rows() > 0) {
    const double per_sample = c.query / static_cast<double>(zq.rows());
    num.noalias() += per_sample * (q.transpose() * zq);
    den += per_sample * q.colwise().sum().transpose();
  }
  Matrix w = current;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (den[j] > 0.0) w.row(j) = num.row(j) / den[j];
  }
  return w;
}

double surrogate(const Matrix& zs, std::span<const int> support_y, const Matrix& zq, const Matrix& w,
                 const Matrix& q, double scale, const TimWeights& weights) {
  const Coefficients c = coefficients(weights);
  double f = 0.0;
  if (c.support > 0.0 && zs.rows() > 0) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < zs.rows(); ++i) sum += (zs.row(i) - w.row(support_y[i])).squaredNorm();
    f += c.support / static_cast<double>(zs.rows()) * scale * sum;
  }
  if (zq.rows() > 0) {
    const double inv_q = 1.0 / static_cast<double>(zq.rows());
    const Matrix d = squared_distances(zq, w);
    f += c.query * inv_q * scale * (q.array() * d.array()).sum();
    double neg_entropy = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      const double v = q.data()[i];
      if (v > 0.0) neg_entropy += v * std::log(v);
    }
    f += inv_q * neg_entropy;
    if (c.marginal) {
      const Eigen::RowVectorXd mean = q.colwise().mean();
      for (Eigen::Index j = 0; j < mean.size(); ++j) {
        if (mean[j] > 0.0) f += mean[j] * std::log(mean[j]);
      }
    }
  }
  return f;
}

Matrix normalized_or_empty(const Matrix& x, Eigen::Index dim) {
  return x.rows() > 0 ? normalize_rows(x) : Matrix(0, dim);
}

}  // namespace

Matrix update_q(const Prototypes& proto, const Matrix& query_x, const Matrix& q_prev,
                const TimWeights& weights, const AdmOptions& options) {
  const Matrix zq = normalized_or_empty(query_x, proto.weights.cols());
  return q_step(squared_distances(zq, proto.weights), proto.tau, q_prev, weights, options);
}

Prototypes update_w(const Matrix& support_x, std::span<const int> support_y, const Matrix& query_x,
                    const Matrix& q, const TimWeights& weights, const Prototypes& current) {
  const Eigen::Index dim = current.weights.cols();
  if (q.rows() != query_x.rows()) throw ConfigError("soft assignment rows must match queries");
  Prototypes out = current;
  out.weights = w_step(normalized_or_empty(support_x, dim), support_y,
                       normalized_or_empty(query_x, dim), q, weights, current.weights);
  return out;
}

double adm_surrogate(const Prototypes& proto, const Matrix& q, const Task& task,
                     const TimWeights& weights) {
  const Eigen::Index dim = proto.weights.cols();
  return surrogate(normalized_or_empty(task.support_x, dim), task.support_y,
                   normalized_or_empty(task.query_x, dim), proto.weights, q, proto.tau, weights);
}

SolveResult run_tim_adm(const Task& task, const TimWeights& weights, const AdmOptions& options,
                        const ClassifierOptions& classifier, std::span<const int> query_truth) {
  if (options.iters < 0) throw ConfigError("iteration count must be non-negative");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  Prototypes proto = init_prototypes(task, classifier);
  const Eigen::Index dim = proto.weights.cols();
  const Matrix zs = normalize_rows(task.support_x);
  const Matrix zq = normalized_or_empty(task.query_x, dim);
  const double s = proto.tau;

  SolverTrace trace;
  Matrix q;
  for (int it = 0;; ++it) {
    const detail::Block bs = detail::evaluate(zs, proto.weights, s);
    const detail::Block bq = detail::evaluate(zq, proto.weights, s);
    TraceRecord r;
    r.iteration = it;
    r.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    r.loss = detail::tim_value(bs, task.support_y, bq, weights);
    r.accuracy = std::numeric_limits<double>::quiet_NaN();
    if (!query_truth.empty() && static_cast<std::size_t>(bq.p.rows()) == query_truth.size()) {
      r.accuracy = accuracy(predict(bq.p), query_truth);
    }
    r.mutual_information = bq.p.rows() > 0 ? mutual_information(bq.p, 1.0) : 0.0;
    trace.records.push_back(r);
    if (!std::isfinite(r.loss) || std::abs(r.loss) > kDivergenceThreshold) {
      throw DivergenceError("solver diverged: loss " + std::to_string(r.loss), it, trace);
    }
    if (it == options.iters) break;
    if (it == 0) q = bq.p;
    q = q_step(bq.d, s, q, weights, options);
    proto.weights = w_step(zs, task.support_y, zq, q, weights, proto.weights);
    if (classifier.normalize_prototypes) proto.weights = normalize_rows(proto.weights);
  }
  return {std::move(proto), std::move(trace)};
}

}  // namespace fsi
