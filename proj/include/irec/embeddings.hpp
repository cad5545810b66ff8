#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace irec {

inline constexpr std::size_t kDefaultEmbeddingDim = 256;

// Dense embedding. Vectors produced by providers are unit-norm; vectors
// loaded from snapshots keep whatever values they were saved with.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}

  // Scales `values` to unit L2 norm. Throws InvalidArgument for a zero vector.
  static EmbeddingVector normalized(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double norm() const noexcept;
  bool is_unit(double tolerance = 1e-6) const noexcept;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

// Cosine similarity in [-1, 1]. Throws DimensionMismatch; a zero vector on
// either side yields 0.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const noexcept = 0;
  virtual std::string_view name() const noexcept = 0;
  // Throws EmptyText for blank input, ProviderUnavailable for remote failures.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

// Signed feature hashing of case-folded unigrams and adjacent bigrams,
// L2-normalized. Deterministic across processes and platforms.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dim = kDefaultEmbeddingDim);

  std::size_t dim() const noexcept override { return dim_; }
  std::string_view name() const noexcept override { return "hashing"; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

// Remote provider speaking a minimal JSON protocol:
//   POST <endpoint> {"input": str, "model": str}
//   -> {"embedding": [..]} or {"data": [{"embedding": [..]}]}
class HttpEmbedder final : public EmbeddingProvider {
 public:
  HttpEmbedder(std::string endpoint, std::string model, std::size_t dim,
               std::chrono::milliseconds timeout);

  std::size_t dim() const noexcept override { return dim_; }
  std::string_view name() const noexcept override { return "external"; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::string endpoint_;
  std::string model_;
  std::size_t dim_;
  std::chrono::milliseconds timeout_;
};

struct EmbeddingConfig {
  std::string provider = "hashing";
  std::size_t dim = kDefaultEmbeddingDim;
  std::string endpoint;
  std::string model;
  double timeout_s = 10.0;
};

std::shared_ptr<const EmbeddingProvider> make_embedding_provider(const EmbeddingConfig& config);

}  // namespace irec
