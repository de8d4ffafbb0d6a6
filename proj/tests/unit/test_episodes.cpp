#include "fsi/episodes.hpp"
#include "fsi/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace fsi;

namespace {

const EmbeddingSet& novel() {
  static const EmbeddingSet s = generate_synthetic({16, 10, 30, 0.3, 0.0, 1});
  return s;
}

bool same(const Episode& a, const Episode& b) {
  return a.task.support_x == b.task.support_x && a.task.support_y == b.task.support_y &&
         a.task.query_x == b.task.query_x && a.task.negatives_x == b.task.negatives_x &&
         a.query_y == b.query_y && a.class_map == b.class_map;
}

}  // namespace

TEST(SampleEpisode, StandardShape) {
  TaskConfig cfg;
  const Episode ep = sample_episode(novel(), nullptr, cfg, 0);
  EXPECT_EQ(ep.task.support_x.rows(), 5);
  EXPECT_EQ(ep.task.support_x.cols(), 16);
  EXPECT_EQ(ep.task.query_x.rows(), 75);
  EXPECT_EQ(ep.query_y.size(), 75u);
  EXPECT_EQ(ep.task.negatives_x.rows(), 0);
}

TEST(SampleEpisode, SupportBalanceAndBijection) {
  TaskConfig cfg;
  cfg.shots = 3;
  cfg.queries_per_class = 4;
  EpisodeSampler sampler(novel(), nullptr, cfg);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const Episode ep = sampler.sample(i);
    std::vector<int> per_class(5, 0);
    for (int y : ep.task.support_y) ++per_class[y];
    EXPECT_EQ(per_class, std::vector<int>(5, 3));
    EXPECT_EQ(std::set<int>(ep.class_map.begin(), ep.class_map.end()).size(), 5u);
    // Rows come from the mapped dataset class, without replacement.
    std::set<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < ep.task.support_x.rows(); ++r) {
      const int cls = ep.class_map[ep.task.support_y[r]];
      bool found = false;
      for (int idx : novel().class_indices(cls)) found |= novel().features().row(idx) == ep.task.support_x.row(r);
      EXPECT_TRUE(found);
      rows.insert(std::vector<double>(ep.task.support_x.row(r).begin(), ep.task.support_x.row(r).end()));
    }
    for (Eigen::Index r = 0; r < ep.task.query_x.rows(); ++r) {
      rows.insert(std::vector<double>(ep.task.query_x.row(r).begin(), ep.task.query_x.row(r).end()));
    }
    EXPECT_EQ(rows.size(), 35u);
  }
}

TEST(SampleEpisode, MinimalEpisode) {
  Matrix f(2, 2);
  f << 1, 0, 0, 1;
  const EmbeddingSet tiny(f, {0, 1}, 2);
  TaskConfig cfg;
  cfg.ways = 2;
  cfg.shots = 1;
  cfg.queries_per_class = 0;
  const Episode ep = sample_episode(tiny, nullptr, cfg, 0);
  EXPECT_EQ(ep.task.support_x.rows(), 2);
  EXPECT_EQ(ep.task.query_x.rows(), 0);
}

TEST(SampleEpisode, Deterministic) {
  TaskConfig cfg;
  cfg.seed = 77;
  cfg.negatives = UniformSphere{20, false};
  const Episode a = sample_episode(novel(), nullptr, cfg, 7);
  const Episode b = sample_episode(novel(), nullptr, cfg, 7);
  EXPECT_TRUE(same(a, b));
  EXPECT_FALSE(same(a, sample_episode(novel(), nullptr, cfg, 8)));
}

TEST(SampleEpisode, IndexOrderIrrelevant) {
  TaskConfig cfg;
  EpisodeSampler sampler(novel(), nullptr, cfg);
  const Episode later = sampler.sample(5);
  for (std::uint64_t i = 0; i < 5; ++i) sampler.sample(i);
  EXPECT_TRUE(same(later, sampler.sample(5)));
}

TEST(SampleEpisode, Errors) {
  TaskConfig cfg;
  cfg.queries_per_class = 30;  // 1 + 30 > 30 samples per class
  EXPECT_THROW(sample_episode(novel(), nullptr, cfg, 0), InsufficientSamplesError);
  cfg = {};
  cfg.ways = 11;
  EXPECT_THROW(sample_episode(novel(), nullptr, cfg, 0), InsufficientSamplesError);
  cfg = {};
  cfg.ways = 1;
  EXPECT_THROW(sample_episode(novel(), nullptr, cfg, 0), ConfigError);
  cfg = {};
  cfg.shots = 0;
  EXPECT_THROW(sample_episode(novel(), nullptr, cfg, 0), ConfigError);
  cfg = {};
  cfg.negatives = BasePool{10, false};
  EXPECT_THROW(sample_episode(novel(), nullptr, cfg, 0), ConfigError);  // no base set
  cfg.negatives = BasePool{0, false};
  EXPECT_THROW(sample_episode(novel(), &novel(), cfg, 0), ConfigError);
  cfg = {};
  cfg.balance = Dirichlet{0.0, 75};
  EXPECT_THROW(sample_episode(novel(), nullptr, cfg, 0), ConfigError);
}

TEST(SampleEpisode, BaseSharingSamplesRejected) {
  TaskConfig cfg;
  cfg.negatives = BasePool{10, false};
  const EmbeddingSet copy = novel();
  EXPECT_THROW(EpisodeSampler(novel(), &copy, cfg), DataError);
  const EmbeddingSet other = generate_synthetic({16, 10, 30, 0.3, 0.0, 2});
  EXPECT_NO_THROW(EpisodeSampler(novel(), &other, cfg));
}

TEST(SampleEpisode, NegativesFromSameSetAvoidEpisodeClasses) {
  TaskConfig cfg;
  cfg.negatives = BasePool{100, false};
  EpisodeSampler sampler(novel(), &novel(), cfg);
  for (std::uint64_t i = 0; i < 30; ++i) {
    const Episode ep = sampler.sample(i);
    ASSERT_EQ(ep.negative_classes.size(), 100u);
    for (int c : ep.negative_classes) {
      EXPECT_EQ(std::count(ep.class_map.begin(), ep.class_map.end(), c), 0);
    }
    for (Eigen::Index r = 0; r < ep.task.negatives_x.rows(); ++r) {
      EXPECT_NEAR(ep.task.negatives_x.row(r).norm(), 1.0, 1e-12);
    }
  }
}

TEST(SampleEpisode, ReusedNegativesAreShared) {
  TaskConfig cfg;
  cfg.negatives = UniformSphere{10, true};
  EpisodeSampler sampler(novel(), nullptr, cfg);
  EXPECT_EQ(sampler.sample(0).task.negatives_x, sampler.sample(3).task.negatives_x);
  cfg.negatives = UniformSphere{10, false};
  EpisodeSampler fresh(novel(), nullptr, cfg);
  EXPECT_NE(fresh.sample(0).task.negatives_x, fresh.sample(3).task.negatives_x);
}

TEST(SampleEpisode, DirichletQueries) {
  const EmbeddingSet big = generate_synthetic({8, 6, 80, 0.3, 0.0, 3});
  TaskConfig cfg;
  cfg.balance = Dirichlet{0.5, 75};
  EpisodeSampler sampler(big, nullptr, cfg);
  bool saw_uneven = false;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const Episode ep = sampler.sample(i);
    EXPECT_EQ(ep.task.query_x.rows(), 75);
    std::vector<int> counts(5, 0);
    for (int y : ep.query_y) ++counts[y];
    saw_uneven |= *std::max_element(counts.begin(), counts.end()) > 25;
  }
  EXPECT_TRUE(saw_uneven);
}

TEST(Dirichlet, LargeConcentrationIsBalanced) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(sample_dirichlet_counts(1e9, 5, 75, rng), std::vector<int>(5, 15));
  }
}

TEST(Dirichlet, CountsAlwaysSumToTotal) {
  Rng rng(6);
  for (double kappa : {1e-3, 0.1, 0.5, 1.0, 2.0, 100.0}) {
    for (int i = 0; i < 2000; ++i) {
      const auto c = sample_dirichlet_counts(kappa, 5, 75, rng);
      EXPECT_EQ(std::accumulate(c.begin(), c.end(), 0), 75);
      for (int v : c) EXPECT_GE(v, 0);
    }
  }
  EXPECT_EQ(sample_dirichlet_counts(1.0, 3, 0, rng), std::vector<int>(3, 0));
}

TEST(Dirichlet, SymmetricMean) {
  Rng rng(7);
  std::vector<double> sum(5, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto c = sample_dirichlet_counts(1.0, 5, 75, rng);
    for (int k = 0; k < 5; ++k) sum[k] += c[k];
  }
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(sum[k] / draws, 15.0, 0.3);
}

TEST(Dirichlet, InvalidArguments) {
  Rng rng(1);
  EXPECT_THROW(sample_dirichlet_counts(0.0, 5, 75, rng), ConfigError);
  EXPECT_THROW(sample_dirichlet_counts(1.0, 5, -1, rng), ConfigError);
}

TEST(UniformSphere, UnitRows) {
  Rng rng(8);
  const Matrix m = sample_uniform_sphere(1000, 7, rng);
  for (Eigen::Index i = 0; i < m.rows(); ++i) EXPECT_NEAR(m.row(i).norm(), 1.0, 1e-6);
}

TEST(UniformSphere, UniformAngleOnCircle) {
  Rng rng(9);
  const int n = 100000, bins = 16;
  const Matrix m = sample_uniform_sphere(n, 2, rng);
  std::vector<int> hist(bins, 0);
  for (int i = 0; i < n; ++i) {
    double a = std::atan2(m(i, 1), m(i, 0)) + std::numbers::pi;
    int b = static_cast<int>(a / (2 * std::numbers::pi) * bins);
    ++hist[std::min(b, bins - 1)];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / bins;
  for (int h : hist) chi2 += (h - expected) * (h - expected) / expected;
  // chi-square, 15 degrees of freedom, upper 0.001 quantile.
  EXPECT_LT(chi2, 37.697);
}

TEST(UniformSphere, MeanVanishes) {
  Rng rng(10);
  const Matrix m = sample_uniform_sphere(100000, 8, rng);
  EXPECT_LT(m.colwise().mean().norm(), 0.02);
}

TEST(UniformSphere, DimensionTooSmall) {
  Rng rng(1);
  EXPECT_THROW(sample_uniform_sphere(3, 1, rng), ConfigError);
}

TEST(BaseNegatives, ExhaustiveDrawReturnsEveryEligibleSample) {
  const EmbeddingSet base = generate_synthetic({6, 4, 5, 0.3, 0.0, 4});
  Rng rng(11);
  const std::vector<int> excluded = {1, 3};
  Labels src;
  const Matrix m = sample_negatives_from_base(base, 10, excluded, rng, &src);
  std::multiset<std::vector<double>> got, want;
  for (Eigen::Index i = 0; i < m.rows(); ++i) got.insert({m.row(i).begin(), m.row(i).end()});
  const Matrix z = normalize_rows(base.features());
  for (int c : {0, 2})
    for (int i : base.class_indices(c)) want.insert({z.row(i).begin(), z.row(i).end()});
  EXPECT_EQ(got, want);
}

TEST(BaseNegatives, AllClassesExcluded) {
  const EmbeddingSet base = generate_synthetic({6, 3, 5, 0.3, 0.0, 4});
  Rng rng(12);
  const std::vector<int> excluded = {0, 1, 2};
  EXPECT_THROW(sample_negatives_from_base(base, 1, excluded, rng), InsufficientSamplesError);
}

TEST(BaseNegatives, NeverFromExcludedClasses) {
  const EmbeddingSet base = generate_synthetic({16, 64, 100, 0.3, 0.0, 5});
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> excluded;
    for (int k = 0; k < 5; ++k) excluded.push_back(static_cast<int>(rng.below(64)));
    Labels src;
    const Matrix m = sample_negatives_from_base(base, 400, excluded, rng, &src);
    ASSERT_EQ(m.rows(), 400);
    // Brute-force membership: locate each row in the base set and check its class.
    const Matrix z = normalize_rows(base.features());
    for (Eigen::Index r = 0; r < m.rows(); r += 37) {
      int owner = -1;
      for (Eigen::Index i = 0; i < z.rows() && owner < 0; ++i)
        if (z.row(i) == m.row(r)) owner = base.labels()[i];
      ASSERT_GE(owner, 0);
      EXPECT_EQ(std::count(excluded.begin(), excluded.end(), owner), 0);
      EXPECT_EQ(owner, src[r]);
    }
    for (int c : src) EXPECT_EQ(std::count(excluded.begin(), excluded.end(), c), 0);
  }
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
  Rng a = Rng::for_stream(1, 2), b = Rng::for_stream(1, 2), c = Rng::for_stream(1, 3);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_EQ(derive_stream_seed(1, 2), derive_stream_seed(1, 2));
  EXPECT_NE(derive_stream_seed(1, 2), derive_stream_seed(2, 1));
}

TEST(Rng, MomentsOfDistributions) {
  Rng rng(21);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0, sg_small = 0;
  std::vector<int> below(7, 0);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    sg += rng.gamma(2.5);
    sg_small += rng.gamma(0.3);
    ++below[rng.below(7)];
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.01);
  EXPECT_NEAR(sg / n, 2.5, 0.02);
  EXPECT_NEAR(sg_small / n, 0.3, 0.01);
  for (int c : below) EXPECT_NEAR(c / static_cast<double>(n), 1.0 / 7, 0.005);
}
