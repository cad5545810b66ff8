#include "irec/embeddings.hpp"

#include <httplib.h>

#include <cmath>
#include <json.hpp>

#include "http_util.hpp"
#include "irec/error.hpp"
#include "irec/simd/kernels.hpp"
#include "irec/text.hpp"

namespace irec {

EmbeddingVector EmbeddingVector::normalized(std::vector<double> values) {
  const double n = std::sqrt(simd::squared_norm(values));
  if (!(n > 0.0)) throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero vector");
  for (double& v : values) v /= n;
  return EmbeddingVector(std::move(values));
}

double EmbeddingVector::norm() const noexcept { return std::sqrt(simd::squared_norm(values_)); }

bool EmbeddingVector::is_unit(double tolerance) const noexcept {
  return std::abs(norm() - 1.0) <= tolerance;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  const double na = simd::squared_norm(a.values());
  const double nb = simd::squared_norm(b.values());
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = simd::dot(a.values(), b.values()) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidConfig, "embedding.dim must be positive");
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) const {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw Error(ErrorCode::EmptyText, "nothing to embed");

  std::vector<double> buckets(dim_, 0.0);
  auto add_feature = [&](std::string_view feature) {
    const std::uint64_t h = fnv1a64(feature);
    const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
    buckets[(h & 0x7fffffffffffffffULL) % dim_] += sign;
  };

  const auto tokens = tokenize(text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add_feature(tokens[i]);
    if (i + 1 < tokens.size()) add_feature(tokens[i] + ' ' + tokens[i + 1]);
  }
  if (tokens.empty()) add_feature(text);

  // Colliding features can cancel out; fall back to the raw text.
  if (simd::squared_norm(buckets) == 0.0) {
    buckets[(fnv1a64(text) & 0x7fffffffffffffffULL) % dim_] = 1.0;
  }
  return EmbeddingVector::normalized(std::move(buckets));
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::string model, std::size_t dim,
                           std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), dim_(dim), timeout_(timeout) {}

EmbeddingVector HttpEmbedder::embed(std::string_view text) const {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw Error(ErrorCode::EmptyText, "nothing to embed");
  }
  const auto url = detail::split_url(endpoint_);
  httplib::Client client(url.origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);

  const nlohmann::json body = {{"input", std::string(text)}, {"model", model_}};
  auto res = client.Post(url.path, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::ProviderUnavailable, httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::ProviderUnavailable, "HTTP " + std::to_string(res->status));
  }
  std::vector<double> values;
  try {
    const auto parsed = nlohmann::json::parse(res->body);
    const auto& arr = parsed.contains("embedding") ? parsed.at("embedding")
                                                   : parsed.at("data").at(0).at("embedding");
    values = arr.get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProviderUnavailable, std::string("bad embedding payload: ") + e.what());
  }
  if (values.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "provider returned " + std::to_string(values.size()) + " values");
  }
  return EmbeddingVector::normalized(std::move(values));
}

std::shared_ptr<const EmbeddingProvider> make_embedding_provider(const EmbeddingConfig& config) {
  if (config.provider == "hashing") return std::make_shared<HashingEmbedder>(config.dim);
  if (config.provider == "external") {
    return std::make_shared<HttpEmbedder>(
        config.endpoint, config.model, config.dim,
        std::chrono::milliseconds(static_cast<long>(config.timeout_s * 1000)));
  }
  throw Error(ErrorCode::InvalidConfig, "unknown embedding.provider: " + config.provider);
}

}  // namespace irec
