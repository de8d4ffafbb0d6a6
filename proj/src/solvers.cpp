#include "detail.hpp"

#include "fsi/error.hpp"
#include "fsi/features.hpp"
#include "fsi/optim.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace fsi {

AdamState AdamState::zeros(Eigen::Index rows, Eigen::Index cols, double lr) {
  AdamState s;
  s.first_moment = Matrix::Zero(rows, cols);
  s.second_moment = Matrix::Zero(rows, cols);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& st, Matrix& params, const Matrix& gradient) {
  if (st.first_moment.size() == 0) {
    st.first_moment = Matrix::Zero(params.rows(), params.cols());
    st.second_moment = Matrix::Zero(params.rows(), params.cols());
  }
  ++st.step_count;
  st.first_moment = st.beta1 * st.first_moment + (1.0 - st.beta1) * gradient;
  st.second_moment = st.beta2 * st.second_moment + (1.0 - st.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  params.array() -= st.lr * (st.first_moment.array() / c1) /
                    ((st.second_moment.array() / c2).sqrt() + st.epsilon);
}

namespace {

using Clock = std::chrono::steady_clock;

class TraceRecorder {
 public:
  explicit TraceRecorder(std::span<const int> truth) : truth_(truth), start_(Clock::now()) {}

  void record(int iteration, double loss, const Posterior& query_p) {
    TraceRecord r;
    r.iteration = iteration;
    r.wall_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    r.loss = loss;
    r.accuracy = std::numeric_limits<double>::quiet_NaN();
    if (!truth_.empty() && static_cast<std::size_t>(query_p.rows()) == truth_.size()) {
      r.accuracy = accuracy(predict(query_p), truth_);
    }
    r.mutual_information = query_p.rows() > 0 ? mutual_information(query_p, 1.0) : 0.0;
    trace_.records.push_back(r);
    if (!std::isfinite(loss) || std::abs(loss) > kDivergenceThreshold) {
      throw DivergenceError("solver diverged: loss " + std::to_string(loss), iteration, trace_);
    }
  }

  SolverTrace take() { return std::move(trace_); }

 private:
  std::span<const int> truth_;
  Clock::time_point start_;
  SolverTrace trace_;
};

Matrix normalized_or_empty(const Matrix& x, Eigen::Index dim) {
  return x.rows() > 0 ? normalize_rows(x) : Matrix(0, dim);
}

void project_if_needed(Matrix& w, const ClassifierOptions& options) {
  if (options.normalize_prototypes) w = normalize_rows(w);
}

}  // namespace

SolveResult run_tim_gd(const Task& task, const TimWeights& weights, const GdOptions& options,
                       const ClassifierOptions& classifier, std::span<const int> query_truth) {
  if (options.iters < 0) throw ConfigError("iteration count must be non-negative");
  TraceRecorder recorder(query_truth);
  Prototypes proto = init_prototypes(task, classifier);
  const Eigen::Index dim = proto.weights.cols();
  const Matrix zs = normalize_rows(task.support_x);
  const Matrix zq = normalized_or_empty(task.query_x, dim);
  const double s = proto.tau;
  AdamState adam = AdamState::zeros(proto.weights.rows(), dim, options.lr);

  for (int it = 0;; ++it) {
    const detail::Block bs = detail::evaluate(zs, proto.weights, s);
    const detail::Block bq = detail::evaluate(zq, proto.weights, s);
    recorder.record(it, detail::tim_value(bs, task.support_y, bq, weights), bq.p);
    if (it == options.iters) break;
    const Gradient g =
        detail::tim_gradient(zs, task.support_y, zq, proto.weights, s, bs, bq, weights);
    if (!g.weights.allFinite()) throw NumericError("non-finite TIM gradient", it);
    adam_step(adam, proto.weights, g.weights);
    project_if_needed(proto.weights, classifier);
  }
  return {std::move(proto), recorder.take()};
}

SolveResult run_entmin(const Task& task, const GdOptions& options, const ClassifierOptions& classifier,
                       std::span<const int> query_truth) {
  return run_tim_gd(task, TimWeights::ce_conditional(), options, classifier, query_truth);
}

SolveResult run_poodle(const Task& task, const PoodleWeights& weights, const PoodleOptions& options,
                       const ClassifierOptions& classifier, std::span<const int> query_truth) {
  if (options.iters < 0) throw ConfigError("iteration count must be non-negative");
  TraceRecorder recorder(query_truth);
  Prototypes proto = init_prototypes(task, classifier);
  const Eigen::Index dim = proto.weights.cols();
  const Matrix zs = normalize_rows(task.support_x);
  const Matrix zq = normalized_or_empty(task.query_x, dim);
  Matrix zpos = zs;
  if (options.mode == PoodleMode::Transductive && zq.rows() > 0) {
    zpos.resize(zs.rows() + zq.rows(), dim);
    zpos << zs, zq;
  }
  const Matrix zneg = normalized_or_empty(task.negatives_x, dim);
  const bool use_pull = weights.alpha_pull != 0.0 && zpos.rows() > 0;
  const bool use_push = weights.beta_push != 0.0 && zneg.rows() > 0;

  AdamState adam = AdamState::zeros(proto.weights.rows(), dim, options.lr);
  AdamState adam_scale = AdamState::zeros(1, 1, options.lr);
  Matrix scale_param(1, 1);

  for (int it = 0;; ++it) {
    const double s = proto.gamma;
    const detail::Block bs = detail::evaluate(zs, proto.weights, s);
    const detail::Block bq = detail::evaluate(zq, proto.weights, s);
    detail::Block bpos, bneg;
    double loss = cross_entropy(bs.p, task.support_y);
    if (use_pull) {
      bpos = detail::evaluate(zpos, proto.weights, s);
      loss += weights.alpha_pull * detail::weighted_distance(bpos, s);
    }
    if (use_push) {
      bneg = detail::evaluate(zneg, proto.weights, s);
      loss -= weights.beta_push * detail::weighted_distance(bneg, s);
    }
    recorder.record(it, loss, bq.p);
    if (it == options.iters) break;

    Gradient g{Matrix::Zero(proto.weights.rows(), dim), 0.0};
    detail::accumulate(g, zs, proto.weights, s, bs, detail::logit_grad_ce(bs.p, task.support_y));
    if (use_pull) {
      const Matrix lg = weights.stop_grad_pull ? Matrix(-bpos.p) : detail::logit_grad_expected(bpos, s);
      detail::accumulate(g, zpos, proto.weights, s, bpos, weights.alpha_pull * lg);
    }
    if (use_push) {
      const Matrix lg = weights.stop_grad_push ? Matrix(-bneg.p) : detail::logit_grad_expected(bneg, s);
      detail::accumulate(g, zneg, proto.weights, s, bneg, -weights.beta_push * lg);
    }
    if (!g.weights.allFinite() || !std::isfinite(g.scale)) {
      throw NumericError("non-finite POODLE gradient", it);
    }
    adam_step(adam, proto.weights, g.weights);
    project_if_needed(proto.weights, classifier);
    if (options.learn_scale) {
      scale_param(0, 0) = proto.gamma;
      Matrix gs(1, 1);
      gs(0, 0) = g.scale;
      adam_step(adam_scale, scale_param, gs);
      proto.gamma = std::max(scale_param(0, 0), 1e-6);
    }
  }
  return {std::move(proto), recorder.take()};
}

}  // namespace fsi
