#pragma once

#include "fsi/features.hpp"
#include "fsi/rng.hpp"
#include "fsi/types.hpp"

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace fsi {

struct Balanced {};

/// Query counts per class drawn from a symmetric Dirichlet(concentration).
struct Dirichlet {
  double concentration = 1.0;
  int total_queries = 75;
};

using QueryBalance = std::variant<Balanced, Dirichlet>;

struct NoNegatives {};

/// Negatives drawn from a base embedding set whose classes are disjoint from
/// the task's. With `reuse`, every episode gets the same draw.
struct BasePool {
  int count = 400;
  bool reuse = false;
};

/// Negatives drawn uniformly on the unit sphere.
struct UniformSphere {
  int count = 400;
  bool reuse = false;
};

using NegativeSource = std::variant<NoNegatives, BasePool, UniformSphere>;

struct TaskConfig {
  int ways = 5;
  int shots = 1;
  int queries_per_class = 15;
  QueryBalance balance = Balanced{};
  NegativeSource negatives = NoNegatives{};
  std::uint64_t seed = 0;
};

/// What a solver gets to see: no query labels.
struct Task {
  int ways = 0;
  Matrix support_x;  // (ways * shots) x D, raw features
  Labels support_y;  // task-local labels in [0, ways)
  Matrix query_x;    // Q x D, raw features
  Matrix negatives_x;  // M x D, unit rows; zero rows when disabled
};

struct Episode {
  Task task;
  Labels query_y;    // ground truth, evaluation only
  Labels class_map;  // task-local label -> dataset class id
  Labels negative_classes;  // dataset class of each base-pool negative
};

/// Draws episodes from a novel set, optionally with a base set for negatives.
///
/// When `base` is the novel set itself, negatives come from the classes not
/// used by the episode. A distinct base set must not share samples with the
/// novel set; that is checked once here.
class EpisodeSampler {
 public:
  EpisodeSampler(const EmbeddingSet& novel, const EmbeddingSet* base, TaskConfig cfg);

  /// Deterministic in (cfg.seed, index).
  Episode sample(std::uint64_t index) const;

  const TaskConfig& config() const { return cfg_; }

 private:
  const EmbeddingSet& novel_;
  const EmbeddingSet* base_;
  TaskConfig cfg_;
  int max_queries_per_class_;
};

Episode sample_episode(const EmbeddingSet& set, const EmbeddingSet* base, const TaskConfig& cfg,
                       std::uint64_t episode_index);

/// p ~ Dirichlet(kappa * 1), then largest-remainder rounding of p * total.
/// Remainder ties go to the lower class index. Counts sum to `total`.
std::vector<int> sample_dirichlet_counts(double kappa, int ways, int total, Rng& rng);

Matrix sample_uniform_sphere(int count, int dim, Rng& rng);

/// Uniform without replacement among base samples whose class is not in
/// `excluded`; rows are l2-normalized. Source classes go to `source_classes`
/// when non-null. Throws InsufficientSamplesError when the pool is too small.
Matrix sample_negatives_from_base(const EmbeddingSet& base, int count, std::span<const int> excluded,
                                  Rng& rng, Labels* source_classes = nullptr);

}  // namespace fsi
