#pragma once

#include "fsi/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fsi {

/// Labeled feature vectors of one dataset split. Immutable once built.
///
/// Feature values are rounded to binary32 on construction, which is the
/// on-disk precision, so save/load is exact for every set. All arithmetic
/// downstream runs in double.
class EmbeddingSet {
 public:
  /// Validates: finite rows, labels in [0, num_classes), every class present.
  /// Throws DataError (LabelRangeError for out-of-range labels).
  EmbeddingSet(Matrix features, Labels labels, int num_classes, std::string name = {});

  int dim() const { return static_cast<int>(features_.cols()); }
  std::size_t size() const { return labels_.size(); }
  int num_classes() const { return num_classes_; }
  const std::string& name() const { return name_; }

  const Matrix& features() const { return features_; }
  const Labels& labels() const { return labels_; }

  /// Row indices of class c, in ascending order.
  const std::vector<int>& class_indices(int c) const { return by_class_.at(c); }

  bool operator==(const EmbeddingSet& other) const;

 private:
  Matrix features_;
  Labels labels_;
  int num_classes_;
  std::string name_;
  std::vector<std::vector<int>> by_class_;
};

struct SyntheticConfig {
  int dim = 64;
  int num_classes = 20;
  int per_class = 100;
  /// Expected norm of the within-class noise: each coordinate gets
  /// N(0, spread^2 / dim).
  double spread = 0.3;
  /// Norm of a direction added to every class mean before noise. Mimics the
  /// common component of real backbone features; 0 keeps means uniform. The
  /// direction is fixed per dimension, independent of the seed.
  double shared = 0.0;
  std::uint64_t seed = 0;
};

/// Throws DegenerateInputError on a zero vector.
Vector l2_normalize(const Eigen::Ref<const Vector>& v);

/// Row-wise l2_normalize.
Matrix normalize_rows(const Matrix& x);

/// Class means uniform on the unit sphere; samples are
/// l2_normalize(mean + spread * N(0, I / dim)). Deterministic given the seed.
EmbeddingSet generate_synthetic(const SyntheticConfig& cfg);

// Binary layout, little-endian, no padding:
//   "FSE1" | u32 version=1 | u32 D | u32 N | u32 num_classes
//   | N*D binary32 features, row-major | N u32 labels
inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::byte> encode_embeddings(const EmbeddingSet& set);
EmbeddingSet decode_embeddings(std::span<const std::byte> bytes, std::string name = {});

/// Reads the binary format, or CSV (label,v1,...,vD per row) when the file
/// does not start with the magic bytes and has a .csv extension.
EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

EmbeddingSet load_embeddings_csv(const std::filesystem::path& path);
void save_embeddings_csv(const EmbeddingSet& set, const std::filesystem::path& path);

}  // namespace fsi
