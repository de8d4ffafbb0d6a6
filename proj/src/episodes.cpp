#include "fsi/episodes.hpp"

#include "fsi/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace fsi {

namespace {

// Stream id used for negatives shared by all episodes.
constexpr std::uint64_t kSharedNegativesStream = ~std::uint64_t{0};

// Moves a uniform random subset of size k to the front of `items`.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(items.size() - i);
    std::swap(items[i], items[j]);
  }
}

std::uint64_t row_hash(const Matrix& m, Eigen::Index row) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    h ^= std::bit_cast<std::uint64_t>(m(row, j));
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_disjoint(const EmbeddingSet& novel, const EmbeddingSet& base) {
  if (novel.dim() != base.dim()) {
    throw ConfigError("base and novel embeddings differ in dimension");
  }
  std::unordered_multimap<std::uint64_t, Eigen::Index> seen;
  seen.reserve(novel.size());
  const Matrix& nf = novel.features();
  for (Eigen::Index i = 0; i < nf.rows(); ++i) seen.emplace(row_hash(nf, i), i);
  const Matrix& bf = base.features();
  for (Eigen::Index i = 0; i < bf.rows(); ++i) {
    auto [lo, hi] = seen.equal_range(row_hash(bf, i));
    for (auto it = lo; it != hi; ++it) {
      if (nf.row(it->second) == bf.row(i)) {
        throw DataError("base pool shares classes with the novel pool (identical sample: base row " +
                        std::to_string(i) + ")");
      }
    }
  }
}

void validate(const TaskConfig& cfg) {
  if (cfg.ways < 2) throw ConfigError("ways must be at least 2");
  if (cfg.shots < 1) throw ConfigError("shots must be at least 1");
  if (cfg.queries_per_class < 0) throw ConfigError("queries per class must be non-negative");
  if (const auto* d = std::get_if<Dirichlet>(&cfg.balance)) {
    if (!(d->concentration > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
    if (d->total_queries < 0) throw ConfigError("total queries must be non-negative");
  }
  if (const auto* b = std::get_if<BasePool>(&cfg.negatives); b && b->count < 1) {
    throw ConfigError("negative count must be at least 1");
  }
  if (const auto* u = std::get_if<UniformSphere>(&cfg.negatives); u && u->count < 1) {
    throw ConfigError("negative count must be at least 1");
  }
}

}  // namespace

EpisodeSampler::EpisodeSampler(const EmbeddingSet& novel, const EmbeddingSet* base, TaskConfig cfg)
    : novel_(novel), base_(base), cfg_(cfg), max_queries_per_class_(cfg.queries_per_class) {
  validate(cfg_);
  if (novel_.num_classes() < cfg_.ways) {
    throw InsufficientSamplesError("embedding set has " + std::to_string(novel_.num_classes()) +
                                   " classes, task needs " + std::to_string(cfg_.ways));
  }
  if (std::holds_alternative<BasePool>(cfg_.negatives)) {
    if (base_ == nullptr) throw ConfigError("base-pool negatives require a base embedding set");
    if (base_ != &novel_) check_disjoint(novel_, *base_);
  }
  if (std::holds_alternative<UniformSphere>(cfg_.negatives) && novel_.dim() < 2) {
    throw ConfigError("uniform sphere negatives need dim >= 2");
  }
  if (std::holds_alternative<Balanced>(cfg_.balance)) {
    const int need = cfg_.shots + cfg_.queries_per_class;
    for (int c = 0; c < novel_.num_classes(); ++c) {
      if (static_cast<int>(novel_.class_indices(c).size()) < need) {
        throw InsufficientSamplesError("class " + std::to_string(c) + " has " +
                                       std::to_string(novel_.class_indices(c).size()) +
                                       " samples, task needs " + std::to_string(need));
      }
    }
  }
}

Episode EpisodeSampler::sample(std::uint64_t index) const {
  Rng rng = Rng::for_stream(cfg_.seed, index);
  const int ways = cfg_.ways;
  const int dim = novel_.dim();

  std::vector<int> classes(novel_.num_classes());
  std::iota(classes.begin(), classes.end(), 0);
  partial_shuffle(classes, ways, rng);
  classes.resize(ways);

  std::vector<int> counts(ways, cfg_.queries_per_class);
  if (const auto* d = std::get_if<Dirichlet>(&cfg_.balance)) {
    counts = sample_dirichlet_counts(d->concentration, ways, d->total_queries, rng);
  }

  Episode ep;
  ep.class_map = classes;
  ep.task.ways = ways;
  const int total_queries = std::accumulate(counts.begin(), counts.end(), 0);
  ep.task.support_x.resize(static_cast<Eigen::Index>(ways) * cfg_.shots, dim);
  ep.task.support_y.reserve(ways * cfg_.shots);
  ep.task.query_x.resize(total_queries, dim);
  ep.query_y.reserve(total_queries);

  const Matrix& f = novel_.features();
  Eigen::Index s_row = 0;
  Eigen::Index q_row = 0;
  for (int k = 0; k < ways; ++k) {
    std::vector<int> pool = novel_.class_indices(classes[k]);
    const std::size_t need = static_cast<std::size_t>(cfg_.shots) + counts[k];
    if (pool.size() < need) {
      throw InsufficientSamplesError("class " + std::to_string(classes[k]) + " has " +
                                     std::to_string(pool.size()) + " samples, episode needs " +
                                     std::to_string(need));
    }
    partial_shuffle(pool, need, rng);
    for (int s = 0; s < cfg_.shots; ++s) {
      ep.task.support_x.row(s_row++) = f.row(pool[s]);
      ep.task.support_y.push_back(k);
    }
    for (int q = 0; q < counts[k]; ++q) {
      ep.task.query_x.row(q_row++) = f.row(pool[cfg_.shots + q]);
      ep.query_y.push_back(k);
    }
  }

  ep.task.negatives_x.resize(0, dim);
  if (const auto* b = std::get_if<BasePool>(&cfg_.negatives)) {
    Rng shared = Rng::for_stream(cfg_.seed, kSharedNegativesStream);
    Rng& source = b->reuse ? shared : rng;
    std::span<const int> excluded;
    if (base_ == &novel_) excluded = classes;
    ep.task.negatives_x =
        sample_negatives_from_base(*base_, b->count, excluded, source, &ep.negative_classes);
  } else if (const auto* u = std::get_if<UniformSphere>(&cfg_.negatives)) {
    Rng shared = Rng::for_stream(cfg_.seed, kSharedNegativesStream);
    Rng& source = u->reuse ? shared : rng;
    ep.task.negatives_x = sample_uniform_sphere(u->count, dim, source);
  }
  return ep;
}

Episode sample_episode(const EmbeddingSet& set, const EmbeddingSet* base, const TaskConfig& cfg,
                       std::uint64_t episode_index) {
  return EpisodeSampler(set, base, cfg).sample(episode_index);
}

std::vector<int> sample_dirichlet_counts(double kappa, int ways, int total, Rng& rng) {
  if (!(kappa > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  if (ways < 1) throw ConfigError("ways must be positive");
  if (total < 0) throw ConfigError("total must be non-negative");
  std::vector<double> g(ways);
  double sum = 0.0;
  for (int k = 0; k < ways; ++k) {
    g[k] = rng.gamma(kappa);
    sum += g[k];
  }
  std::vector<int> counts(ways, 0);
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    // Every gamma draw underflowed: the proportions are a vertex.
    counts[rng.below(ways)] = total;
    return counts;
  }
  std::vector<double> remainder(ways);
  int assigned = 0;
  for (int k = 0; k < ways; ++k) {
    const double share = g[k] / sum * total;
    counts[k] = static_cast<int>(std::floor(share));
    remainder[k] = share - counts[k];
    assigned += counts[k];
  }
  std::vector<int> order(ways);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int r = 0; assigned < total; ++r, ++assigned) ++counts[order[r % ways]];
  return counts;
}

Matrix sample_uniform_sphere(int count, int dim, Rng& rng) {
  if (dim < 2) throw ConfigError("sphere sampling needs dim >= 2");
  if (count < 0) throw ConfigError("count must be non-negative");
  Matrix out(count, dim);
  for (int i = 0; i < count; ++i) {
    double norm2 = 0.0;
    do {
      for (int j = 0; j < dim; ++j) out(i, j) = rng.normal();
      norm2 = out.row(i).squaredNorm();
    } while (norm2 == 0.0);
    out.row(i) /= std::sqrt(norm2);
  }
  return out;
}

Matrix sample_negatives_from_base(const EmbeddingSet& base, int count, std::span<const int> excluded,
                                  Rng& rng, Labels* source_classes) {
  if (count < 0) throw ConfigError("count must be non-negative");
  std::vector<bool> skip(base.num_classes(), false);
  for (int c : excluded) {
    if (c >= 0 && c < base.num_classes()) skip[c] = true;
  }
  std::vector<int> eligible;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (!skip[base.labels()[i]]) eligible.push_back(static_cast<int>(i));
  }
  if (eligible.size() < static_cast<std::size_t>(count)) {
    throw InsufficientSamplesError("negative pool exhausted: " + std::to_string(eligible.size()) +
                                   " eligible samples, " + std::to_string(count) + " requested");
  }
  partial_shuffle(eligible, count, rng);
  Matrix picked(count, base.dim());
  if (source_classes) source_classes->assign(count, 0);
  for (int i = 0; i < count; ++i) {
    picked.row(i) = base.features().row(eligible[i]);
    if (source_classes) (*source_classes)[i] = base.labels()[eligible[i]];
  }
  return normalize_rows(picked);
}

}  // namespace fsi
