#pragma once
// Finite-difference harness shared by the unit and acceptance tests. Stop-
// gradient terms are differentiated with their posterior weights frozen at
// the evaluation point, which is what the operator means.

#include "fsi/classifier.hpp"
#include "fsi/features.hpp"
#include "fsi/losses.hpp"
#include "fsi/optim.hpp"
#include "oracles.hpp"

#include <random>

namespace gradcheck {

using fsi::Matrix;
using fsi::Prototypes;
using fsi::Vector;

// Flattened [weights (row-major), scale].
inline Vector pack(const Matrix& w, double s) {
  Vector v(w.size() + 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) v[i] = w.data()[i];
  v[w.size()] = s;
  return v;
}

inline Prototypes unpack(const Vector& v, Eigen::Index k, Eigen::Index d, bool gamma) {
  Prototypes p;
  p.weights = Matrix(k, d);
  for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = v[i];
  (gamma ? p.gamma : p.tau) = v[k * d];
  return p;
}

// sum_ik s d_ik(W) P_ik with P held fixed.
inline double frozen_weighted_distance(const Prototypes& p, const Matrix& x, const Matrix& frozen) {
  const Matrix d = fsi::squared_distances(fsi::normalize_rows(x), p.weights);
  return p.gamma * (d.array() * frozen.array()).sum();
}

inline double relative_error(const fsi::Gradient& g, const Vector& fd) {
  const Vector a = pack(g.weights, g.scale);
  return oracle::max_relative_error(Matrix(a.transpose()), Matrix(fd.transpose()));
}

struct Instance {
  Prototypes proto;
  Matrix support, query, negatives;
  fsi::Labels support_y;
  fsi::Task task;
};

// K <= 5, D <= 32. Prototypes are short random vectors so that the logits
// spread over a few units: saturated posteriors have gradients near the
// round-off floor of central differences, which makes relative errors noise.
inline Instance random_instance(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> kd(2, 5), dd(2, 32), sd(1, 3);
  const int k = kd(gen), d = dd(gen), shots = sd(gen);
  Instance in;
  in.proto.weights = oracle::random_matrix(k, d, gen, 0.5 / std::sqrt(static_cast<double>(d)));
  in.proto.gamma = std::uniform_real_distribution<double>(2.0, 12.0)(gen);
  in.proto.tau = std::uniform_real_distribution<double>(2.0, 15.0)(gen);
  in.support = oracle::random_matrix(k * shots, d, gen);
  for (int i = 0; i < k * shots; ++i) in.support_y.push_back(i % k);
  in.query = oracle::random_matrix(3 * k, d, gen);
  in.negatives = oracle::random_matrix(4 * k, d, gen);
  in.task.ways = k;
  in.task.support_x = in.support;
  in.task.support_y = in.support_y;
  in.task.query_x = in.query;
  return in;
}

inline double tim_error(const Instance& in, const fsi::TimWeights& w, double h = 1e-5) {
  const auto k = in.proto.weights.rows(), d = in.proto.weights.cols();
  const Vector fd = fsi::finite_difference_gradient(
      [&](const Vector& v) { return fsi::tim_loss(unpack(v, k, d, false), in.task, w); },
      pack(in.proto.weights, in.proto.tau), h);
  return relative_error(fsi::grad_tim(in.proto, in.task, w), fd);
}

inline double poodle_error(const Instance& in, const fsi::PoodleWeights& w, double h = 1e-5) {
  const auto k = in.proto.weights.rows(), d = in.proto.weights.cols();
  Matrix pos(in.support.rows() + in.query.rows(), d);
  pos << in.support, in.query;
  const Matrix p_pos = fsi::posterior(in.proto, pos, fsi::ScaleSource::Gamma);
  const Matrix p_neg = fsi::posterior(in.proto, in.negatives, fsi::ScaleSource::Gamma);
  auto term = [](const Prototypes& p, const Matrix& x, const Matrix& frozen, bool stop) {
    return stop ? frozen_weighted_distance(p, x, frozen)
                : fsi::weighted_distance_loss(p, x, fsi::ScaleSource::Gamma, false);
  };
  const Vector fd = fsi::finite_difference_gradient(
      [&](const Vector& v) {
        const Prototypes p = unpack(v, k, d, true);
        return fsi::cross_entropy(fsi::posterior(p, in.support, fsi::ScaleSource::Gamma), in.support_y) +
               w.alpha_pull * term(p, pos, p_pos, w.stop_grad_pull) -
               w.beta_push * term(p, in.negatives, p_neg, w.stop_grad_push);
      },
      pack(in.proto.weights, in.proto.gamma), h);
  return relative_error(fsi::grad_poodle(in.proto, in.support, in.support_y, pos, in.negatives, w), fd);
}

inline double lse_error(const Instance& in, double h = 1e-5) {
  const auto k = in.proto.weights.rows(), d = in.proto.weights.cols();
  const Vector fd = fsi::finite_difference_gradient(
      [&](const Vector& v) { return fsi::lse_loss(unpack(v, k, d, true), in.query, fsi::ScaleSource::Gamma); },
      pack(in.proto.weights, in.proto.gamma), h);
  return relative_error(fsi::grad_lse(in.proto, in.query, fsi::ScaleSource::Gamma), fd);
}

inline double expected_distance_error(const Instance& in, double h = 1e-5) {
  const auto k = in.proto.weights.rows(), d = in.proto.weights.cols();
  const Vector fd = fsi::finite_difference_gradient(
      [&](const Vector& v) {
        return fsi::expected_distance_loss(unpack(v, k, d, true), in.query, fsi::ScaleSource::Gamma);
      },
      pack(in.proto.weights, in.proto.gamma), h);
  return relative_error(fsi::grad_expected_distance(in.proto, in.query, fsi::ScaleSource::Gamma), fd);
}

// Stop-gradient weighted distance against its frozen-posterior definition.
inline double weighted_distance_error(const Instance& in, double h = 1e-5) {
  const auto k = in.proto.weights.rows(), d = in.proto.weights.cols();
  const Matrix frozen = fsi::posterior(in.proto, in.query, fsi::ScaleSource::Gamma);
  const Vector fd = fsi::finite_difference_gradient(
      [&](const Vector& v) { return frozen_weighted_distance(unpack(v, k, d, true), in.query, frozen); },
      pack(in.proto.weights, in.proto.gamma), h);
  return relative_error(fsi::grad_weighted_distance(in.proto, in.query, fsi::ScaleSource::Gamma, true), fd);
}

}  // namespace gradcheck
