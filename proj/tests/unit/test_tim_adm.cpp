#include "fsi/error.hpp"
#include "fsi/tim_adm.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fsi;

namespace {

const std::vector<TimWeights> kVariants = {TimWeights::full(), TimWeights::ce_only(),
                                           TimWeights::ce_conditional(), TimWeights::ce_marginal()};

struct Instance {
  Task task;
  Prototypes proto;
};

Instance random_instance(std::mt19937_64& gen, int k = 5, int d = 16, int shots = 2, int q = 30) {
  Instance in;
  const Matrix centres = normalize_rows(oracle::random_matrix(k, d, gen));
  in.task.ways = k;
  in.task.support_x = Matrix(k * shots, d);
  for (int i = 0; i < k * shots; ++i) {
    in.task.support_x.row(i) = centres.row(i % k) + oracle::random_matrix(1, d, gen, 0.2);
    in.task.support_y.push_back(i % k);
  }
  in.task.query_x = Matrix(q, d);
  for (int i = 0; i < q; ++i) in.task.query_x.row(i) = centres.row(gen() % k) + oracle::random_matrix(1, d, gen, 0.2);
  in.proto = init_prototypes(in.task);
  in.proto.weights += oracle::random_matrix(k, d, gen, 0.05);
  in.proto.tau = std::uniform_real_distribution<double>(3.0, 15.0)(gen);
  return in;
}

// Direct evaluation of the surrogate in long double.
oracle::ld surrogate_oracle(const Instance& in, const Matrix& w, const Matrix& q, const TimWeights& tw) {
  const oracle::ld a = tw.use_ce ? tw.lambda_ce : 0.0;
  const oracle::ld b = 1.0 + (tw.use_conditional ? tw.alpha_cond : 0.0);
  const oracle::ld s = in.proto.tau;
  const auto ds = oracle::distances(in.task.support_x, w);
  const auto dq = oracle::distances(in.task.query_x, w);
  const std::size_t ns = ds.size(), nq = dq.size(), k = w.rows();
  oracle::ld f = 0;
  for (std::size_t i = 0; i < ns; ++i) f += a / ns * s * ds[i][in.task.support_y[i]];
  std::vector<oracle::ld> mean(k, 0);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      f += b / nq * q(i, c) * s * dq[i][c] + oracle::xlogx(q(i, c)) / nq;
      mean[c] += q(i, c) / nq;
    }
  }
  if (tw.use_marginal)
    for (oracle::ld m : mean) f += oracle::xlogx(m);
  return f;
}

}  // namespace

TEST(UpdateQ, DecoupledEqualsPosterior) {
  std::mt19937_64 gen(1);
  const Instance in = random_instance(gen);
  const TimWeights w{0.1, 0.1, true, false, false};
  const Matrix q = update_q(in.proto, in.task.query_x, Matrix(), w);
  const Posterior p = posterior(in.proto, in.task.query_x, ScaleSource::Tau);
  EXPECT_LT((q - p).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(UpdateQ, RowsSumToOne) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance in = random_instance(gen);
    for (const auto& w : kVariants) {
      const Matrix q = update_q(in.proto, in.task.query_x, oracle::random_posterior(30, 5, gen), w);
      for (Eigen::Index i = 0; i < q.rows(); ++i) EXPECT_NEAR(q.row(i).sum(), 1.0, 1e-9);
      EXPECT_GE(q.minCoeff(), 0.0);
    }
  }
}

TEST(UpdateQ, SurrogateNonIncreasing) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(gen);
    for (const auto& w : kVariants) {
      const Matrix q0 = oracle::random_posterior(30, 5, gen);
      const Matrix q1 = update_q(in.proto, in.task.query_x, q0, w);
      const auto before = surrogate_oracle(in, in.proto.weights, q0, w);
      const auto after = surrogate_oracle(in, in.proto.weights, q1, w);
      EXPECT_LE(static_cast<double>(after - before), 1e-10) << w.label();
      EXPECT_NEAR(adm_surrogate(in.proto, q1, in.task, w), static_cast<double>(after), 1e-10);
    }
  }
}

TEST(UpdateQ, MarginalTermBalancesAssignments) {
  std::mt19937_64 gen(4);
  const Instance in = random_instance(gen);
  const Matrix with = update_q(in.proto, in.task.query_x, Matrix(), TimWeights::full());
  const Matrix without = update_q(in.proto, in.task.query_x, Matrix(), TimWeights::ce_conditional());
  EXPECT_GE(marginal_entropy(with), marginal_entropy(without) - 1e-12);
}

TEST(UpdateW, SingleClassWithoutSupport) {
  std::mt19937_64 gen(5);
  const Instance in = random_instance(gen);
  Matrix q = Matrix::Zero(30, 5);
  q.col(3).setOnes();
  TimWeights w = TimWeights::full();
  w.use_ce = false;
  const Prototypes out = update_w(in.task.support_x, in.task.support_y, in.task.query_x, q, w, in.proto);
  const Matrix z = normalize_rows(in.task.query_x);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    oracle::ld sum = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) sum += z(i, j);
    EXPECT_NEAR(out.weights(3, j), static_cast<double>(sum / z.rows()), 1e-12);
  }
  for (int k : {0, 1, 2, 4}) EXPECT_EQ(out.weights.row(k), in.proto.weights.row(k));
}

TEST(UpdateW, NoQueriesGivesSupportMeans) {
  std::mt19937_64 gen(6);
  Instance in = random_instance(gen);
  in.task.support_x = normalize_rows(in.task.support_x);
  const Matrix none(0, in.task.support_x.cols());
  const Prototypes out = update_w(in.task.support_x, in.task.support_y, none, Matrix(0, 5),
                                  TimWeights::full(), in.proto);
  EXPECT_LT((out.weights - init_prototypes(in.task).weights).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(UpdateW, SurrogateNonIncreasing) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(gen);
    for (const auto& w : kVariants) {
      const Matrix q = oracle::random_posterior(30, 5, gen);
      const Prototypes next = update_w(in.task.support_x, in.task.support_y, in.task.query_x, q, w, in.proto);
      EXPECT_LE(static_cast<double>(surrogate_oracle(in, next.weights, q, w) -
                                    surrogate_oracle(in, in.proto.weights, q, w)),
                1e-10);
    }
  }
}

TEST(UpdateW, MismatchedAssignment) {
  std::mt19937_64 gen(8);
  const Instance in = random_instance(gen);
  EXPECT_THROW(update_w(in.task.support_x, in.task.support_y, in.task.query_x, Matrix::Ones(3, 5),
                        TimWeights::full(), in.proto),
               ConfigError);
}

TEST(RunTimAdm, ZeroItersIsInductive) {
  std::mt19937_64 gen(9);
  const Instance in = random_instance(gen);
  AdmOptions o;
  o.iters = 0;
  const SolveResult r = run_tim_adm(in.task, {}, o);
  EXPECT_EQ(r.prototypes.weights, init_prototypes(in.task).weights);
  EXPECT_EQ(r.trace.records.size(), 1u);
}

TEST(RunTimAdm, TraceLengthAndDefaults) {
  std::mt19937_64 gen(10);
  const Instance in = random_instance(gen);
  EXPECT_EQ(AdmOptions{}.iters, 150);
  const SolveResult r = run_tim_adm(in.task, {});
  EXPECT_EQ(r.trace.records.size(), 151u);
  AdmOptions o;
  o.iters = -1;
  EXPECT_THROW(run_tim_adm(in.task, {}, o), ConfigError);
}

TEST(RunTimAdm, SurrogateMonotoneAlongIterations) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(gen);
    for (const auto& w : kVariants) {
      Prototypes p = init_prototypes(in.task);
      p.tau = in.proto.tau;
      Matrix q = posterior(p, in.task.query_x, ScaleSource::Tau);
      double prev = adm_surrogate(p, q, in.task, w);
      for (int it = 0; it < 30; ++it) {
        q = update_q(p, in.task.query_x, q, w);
        const double mid = adm_surrogate(p, q, in.task, w);
        p = update_w(in.task.support_x, in.task.support_y, in.task.query_x, q, w, p);
        const double next = adm_surrogate(p, q, in.task, w);
        EXPECT_LE(mid, prev + 1e-10);
        EXPECT_LE(next, mid + 1e-10);
        prev = next;
      }
    }
  }
}

TEST(RunTimAdm, ImprovesOverInductive) {
  const EmbeddingSet set = generate_synthetic({64, 20, 100, 2.08, 2.0, 1});
  double ind = 0, adm = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Episode ep = sample_episode(set, nullptr, {}, i);
    ind += accuracy(predict(posterior(init_prototypes(ep.task), ep.task.query_x, ScaleSource::Tau)), ep.query_y);
    const SolveResult r = run_tim_adm(ep.task, {});
    adm += accuracy(predict(posterior(r.prototypes, ep.task.query_x, ScaleSource::Tau)), ep.query_y);
  }
  EXPECT_GT(adm, ind + 5.0);
}
