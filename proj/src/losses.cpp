#include "fsi/losses.hpp"

#include "fsi/error.hpp"
#include "fsi/features.hpp"

#include <algorithm>
#include <cmath>

namespace fsi {

namespace {

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

std::string TimWeights::label() const {
  if (use_ce && use_marginal && use_conditional) return "full";
  if (use_ce && !use_marginal && !use_conditional) return "ce";
  if (use_ce && !use_marginal && use_conditional) return "ce+cond";
  if (use_ce && use_marginal && !use_conditional) return "ce-marg";
  std::string out;
  if (use_ce) out += "ce";
  if (use_marginal) out += "-marg";
  if (use_conditional) out += "+cond";
  return out.empty() ? "none" : out;
}

TimWeights TimWeights::from_label(const std::string& label) {
  if (label == "full") return full();
  if (label == "ce") return ce_only();
  if (label == "ce+cond") return ce_conditional();
  if (label == "ce-marg") return ce_marginal();
  throw ConfigError("unknown TIM loss variant '" + label + "' (full, ce, ce+cond, ce-marg)");
}

double cross_entropy(const Posterior& p, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) sum -= safe_log(p(i, labels[i]));
  return sum / static_cast<double>(labels.size());
}

double conditional_entropy(const Posterior& p) {
  if (p.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) sum -= plogp(p.data()[i]);
  return sum / static_cast<double>(p.rows());
}

double marginal_entropy(const Posterior& p) {
  if (p.rows() == 0) return 0.0;
  const Eigen::RowVectorXd mean = p.colwise().mean();
  double h = 0.0;
  for (Eigen::Index k = 0; k < mean.size(); ++k) h -= plogp(mean[k]);
  return h;
}

double mutual_information(const Posterior& p, double alpha) {
  return marginal_entropy(p) - alpha * conditional_entropy(p);
}

double tim_loss(const Posterior& support_p, std::span<const int> support_y, const Posterior& query_p,
                const TimWeights& w) {
  double loss = 0.0;
  if (w.use_ce) loss += w.lambda_ce * cross_entropy(support_p, support_y);
  if (w.use_conditional) loss += w.alpha_cond * conditional_entropy(query_p);
  if (w.use_marginal) loss -= marginal_entropy(query_p);
  return loss;
}

double tim_loss(const Prototypes& proto, const Task& task, const TimWeights& weights) {
  const Posterior ps = posterior(proto, task.support_x, ScaleSource::Tau);
  const Posterior pq = task.query_x.rows() > 0 ? posterior(proto, task.query_x, ScaleSource::Tau)
                                               : Posterior(0, proto.ways());
  return tim_loss(ps, task.support_y, pq, weights);
}

double weighted_distance_loss(const Prototypes& proto, const Matrix& x, ScaleSource source,
                              bool /*treat_weights_as_constant*/) {
  if (x.rows() == 0) return 0.0;
  const double s = proto.scale(source);
  const Matrix d = squared_distances(normalize_rows(x), proto.weights);
  const Matrix p = softmax_rows(-s * d);
  return s * (d.array() * p.array()).sum();
}

double lse_loss(const Prototypes& proto, const Matrix& x, ScaleSource source) {
  if (x.rows() == 0) return 0.0;
  const double s = proto.scale(source);
  const Matrix logits = -s * squared_distances(normalize_rows(x), proto.weights);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    loss -= m + std::log((logits.row(i).array() - m).exp().sum());
  }
  return loss;
}

double expected_distance_loss(const Prototypes& proto, const Matrix& x, ScaleSource source) {
  return weighted_distance_loss(proto, x, source, false);
}

double summed_row_entropy(const Posterior& p) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) sum -= plogp(p.data()[i]);
  return sum;
}

double poodle_loss(const Prototypes& proto, const Matrix& support, std::span<const int> support_y,
                   const Matrix& positives, const Matrix& negatives, const PoodleWeights& w) {
  double loss = cross_entropy(posterior(proto, support, ScaleSource::Gamma), support_y);
  if (w.alpha_pull != 0.0) {
    loss += w.alpha_pull * weighted_distance_loss(proto, positives, ScaleSource::Gamma, w.stop_grad_pull);
  }
  if (w.beta_push != 0.0 && negatives.rows() > 0) {
    loss -= w.beta_push * weighted_distance_loss(proto, negatives, ScaleSource::Gamma, w.stop_grad_push);
  }
  return loss;
}

}  // namespace fsi
