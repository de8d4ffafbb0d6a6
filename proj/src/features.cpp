#include "fsi/features.hpp"

#include "fsi/error.hpp"
#include "fsi/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fsi {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'E', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 4;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  }
  return v;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

bool has_magic(std::span<const std::byte> bytes) {
  if (bytes.size() < 4) return false;
  for (int i = 0; i < 4; ++i) {
    if (bytes[i] != static_cast<std::byte>(kMagic[i])) return false;
  }
  return true;
}

}  // namespace

EmbeddingSet::EmbeddingSet(Matrix features, Labels labels, int num_classes, std::string name)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      name_(std::move(name)) {
  if (num_classes_ < 1) throw DataError("embedding set needs at least one class");
  if (features_.cols() < 1) throw DataError("embedding dimension must be positive");
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw DataError("feature rows and labels differ in count");
  }
  if (labels_.size() < static_cast<std::size_t>(num_classes_)) {
    throw DataError("fewer samples than classes");
  }
  for (Eigen::Index i = 0; i < features_.size(); ++i) {
    double& v = features_.data()[i];
    if (!std::isfinite(v)) throw DataError("non-finite feature value in row " +
                                           std::to_string(i / features_.cols()));
    v = static_cast<double>(static_cast<float>(v));
  }
  by_class_.assign(num_classes_, {});
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int y = labels_[i];
    if (y < 0 || y >= num_classes_) {
      throw LabelRangeError("label " + std::to_string(y) + " out of range [0, " +
                            std::to_string(num_classes_) + ")");
    }
    by_class_[y].push_back(static_cast<int>(i));
  }
  for (int c = 0; c < num_classes_; ++c) {
    if (by_class_[c].empty()) throw DataError("class " + std::to_string(c) + " has no samples");
  }
}

bool EmbeddingSet::operator==(const EmbeddingSet& other) const {
  return num_classes_ == other.num_classes_ && labels_ == other.labels_ &&
         features_.rows() == other.features_.rows() && features_.cols() == other.features_.cols() &&
         features_ == other.features_;
}

Vector l2_normalize(const Eigen::Ref<const Vector>& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw DegenerateInputError("cannot normalize a zero or non-finite vector");
  }
  return v / norm;
}

Matrix normalize_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DegenerateInputError("feature row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) = x.row(i) / norm;
  }
  return out;
}

// The shared direction depends only on the dimension, so sets generated with
// different seeds look like outputs of one backbone.
constexpr std::uint64_t kSharedDirectionSeed = 0x5eed5eed;

EmbeddingSet generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.dim < 2) throw ConfigError("synthetic dim must be at least 2");
  if (cfg.num_classes < 1) throw ConfigError("synthetic num_classes must be positive");
  if (cfg.per_class < 1) throw ConfigError("synthetic per_class must be positive");
  if (!(cfg.spread >= 0.0) || !std::isfinite(cfg.spread)) {
    throw ConfigError("synthetic spread must be finite and non-negative");
  }
  if (!(cfg.shared >= 0.0) || !std::isfinite(cfg.shared)) {
    throw ConfigError("synthetic shared component must be finite and non-negative");
  }
  Rng rng(cfg.seed);
  Matrix means(cfg.num_classes, cfg.dim);
  for (int c = 0; c < cfg.num_classes; ++c) {
    Vector g(cfg.dim);
    do {
      for (int j = 0; j < cfg.dim; ++j) g[j] = rng.normal();
    } while (g.norm() == 0.0);
    means.row(c) = g.normalized().transpose();
  }
  if (cfg.shared > 0.0) {
    Rng shared_rng(kSharedDirectionSeed);
    Vector e(cfg.dim);
    do {
      for (int j = 0; j < cfg.dim; ++j) e[j] = shared_rng.normal();
    } while (e.norm() == 0.0);
    means.rowwise() += cfg.shared * e.normalized().transpose();
  }
  const Eigen::Index n = static_cast<Eigen::Index>(cfg.num_classes) * cfg.per_class;
  Matrix features(n, cfg.dim);
  Labels labels(n);
  Vector sample(cfg.dim);
  const double sigma = cfg.spread / std::sqrt(static_cast<double>(cfg.dim));
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int s = 0; s < cfg.per_class; ++s) {
      const Eigen::Index row = static_cast<Eigen::Index>(c) * cfg.per_class + s;
      do {
        for (int j = 0; j < cfg.dim; ++j) sample[j] = means(c, j) + sigma * rng.normal();
      } while (sample.norm() == 0.0);
      features.row(row) = sample.normalized().transpose();
      labels[row] = c;
    }
  }
  std::ostringstream name;
  name << "synthetic(D=" << cfg.dim << ",C=" << cfg.num_classes << ",N=" << cfg.per_class
       << ",spread=" << cfg.spread << ",shared=" << cfg.shared << ",seed=" << cfg.seed << ")";
  return EmbeddingSet(std::move(features), std::move(labels), cfg.num_classes, name.str());
}

std::vector<std::byte> encode_embeddings(const EmbeddingSet& set) {
  const auto n = static_cast<std::uint32_t>(set.size());
  const auto d = static_cast<std::uint32_t>(set.dim());
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes + std::size_t{n} * d * 4 + std::size_t{n} * 4);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kFormatVersion);
  put_u32(out, d);
  put_u32(out, n);
  put_u32(out, static_cast<std::uint32_t>(set.num_classes()));
  const Matrix& f = set.features();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(f(i, j))));
    }
  }
  for (int y : set.labels()) put_u32(out, static_cast<std::uint32_t>(y));
  return out;
}

EmbeddingSet decode_embeddings(std::span<const std::byte> bytes, std::string name) {
  if (bytes.size() < 4) throw TruncatedError("file shorter than the magic bytes");
  if (!has_magic(bytes)) throw BadMagicError("bad magic bytes, expected \"FSE1\"");
  if (bytes.size() < kHeaderBytes) throw TruncatedError("truncated header");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFormatVersion) {
    throw VersionMismatchError("unsupported format version " + std::to_string(version));
  }
  const std::uint32_t d = get_u32(bytes, 8);
  const std::uint32_t n = get_u32(bytes, 12);
  const std::uint32_t num_classes = get_u32(bytes, 16);
  const std::size_t expected = kHeaderBytes + std::size_t{n} * d * 4 + std::size_t{n} * 4;
  if (bytes.size() < expected) {
    throw TruncatedError("truncated payload: " + std::to_string(bytes.size()) + " of " +
                         std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) throw FormatError("trailing bytes after payload");
  if (d == 0) throw FormatError("dimension is zero");
  Matrix features(n, d);
  std::size_t offset = kHeaderBytes;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j, offset += 4) {
      features(i, j) = std::bit_cast<float>(get_u32(bytes, offset));
    }
  }
  Labels labels(n);
  for (std::uint32_t i = 0; i < n; ++i, offset += 4) {
    const std::uint32_t y = get_u32(bytes, offset);
    if (y >= num_classes) {
      throw LabelRangeError("label " + std::to_string(y) + " out of range [0, " +
                            std::to_string(num_classes) + ")");
    }
    labels[i] = static_cast<int>(y);
  }
  return EmbeddingSet(std::move(features), std::move(labels), static_cast<int>(num_classes),
                      std::move(name));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = read_file(path);
  if (!has_magic(bytes) && path.extension() == ".csv") return load_embeddings_csv(path);
  return decode_embeddings(bytes, path.filename().string());
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = encode_embeddings(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

EmbeddingSet load_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  Labels labels;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> values;
    bool first = true;
    long label = 0;
    while (std::getline(fields, cell, ',')) {
      try {
        std::size_t used = 0;
        if (first) {
          label = std::stol(cell, &used);
        } else {
          values.push_back(std::stod(cell, &used));
        }
        if (used != cell.size() && cell.find_first_not_of(" \t", used) != std::string::npos) {
          throw std::invalid_argument(cell);
        }
      } catch (const std::logic_error&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad field '" + cell + "'");
      }
      first = false;
    }
    if (values.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": no feature values");
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": inconsistent width");
    }
    if (label < 0) {
      throw LabelRangeError(path.string() + ":" + std::to_string(line_no) + ": negative label");
    }
    max_label = std::max(max_label, static_cast<int>(label));
    labels.push_back(static_cast<int>(label));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError(path.string() + ": no rows");
  Matrix features(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) features(i, j) = rows[i][j];
  }
  return EmbeddingSet(std::move(features), std::move(labels), max_label + 1, path.filename().string());
}

void save_embeddings_csv(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(9);  // round-trips binary32
  const Matrix& f = set.features();
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    out << set.labels()[i];
    for (Eigen::Index j = 0; j < f.cols(); ++j) out << ',' << static_cast<float>(f(i, j));
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace fsi
