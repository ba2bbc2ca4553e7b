#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace taxoria {

using Vector = std::vector<double>;

enum class EmbeddingKind { StaticWordVectors, ContextualEndpoint };

struct TermVector {
  std::string term;
  Vector vector;
  // Fraction of the term's tokens found in the vocabulary.
  double coverage = 0.0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingKind kind() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Throws OutOfVocabulary (static) or EndpointUnreachable (contextual).
  virtual TermVector embed(std::string_view term) const = 0;
};

/// Word vectors loaded from the plain text format: optional
/// `<count> <dimension>` header, then `token v1 v2 ... vd` per line.
class StaticWordVectors final : public EmbeddingProvider {
 public:
  StaticWordVectors(std::size_t dimension, std::unordered_map<std::string, Vector> vocab);

  EmbeddingKind kind() const override { return EmbeddingKind::StaticWordVectors; }
  std::size_t dimension() const override { return dimension_; }
  std::size_t vocabulary_size() const { return vocab_.size(); }
  TermVector embed(std::string_view term) const override;
  const Vector* lookup(std::string_view token) const;

 private:
  std::size_t dimension_;
  std::unordered_map<std::string, Vector> vocab_;
};

StaticWordVectors load_static_vectors(const std::filesystem::path& path,
                                      std::optional<std::size_t> limit = std::nullopt);

/// Splits a term into lowercase tokens on whitespace, hyphens, underscores
/// and lower-to-upper camel-case boundaries ("OnlineStore" -> online, store).
std::vector<std::string> tokenize_term(std::string_view term);

/// POST {base_url}/api/embeddings with {"model", "prompt"}.
class ContextualEmbeddingClient final : public EmbeddingProvider {
 public:
  ContextualEmbeddingClient(std::string base_url, std::string model_id,
                            std::chrono::milliseconds timeout = std::chrono::seconds(60));

  EmbeddingKind kind() const override { return EmbeddingKind::ContextualEndpoint; }
  // Zero until the first successful call.
  std::size_t dimension() const override { return dimension_; }
  TermVector embed(std::string_view term) const override;

 private:
  std::string base_url_;
  std::string model_id_;
  std::chrono::milliseconds timeout_;
  mutable std::atomic<std::size_t> dimension_{0};
};

TermVector embed_term(const EmbeddingProvider& p, std::string_view term);

/// Throws ZeroVector or DimensionMismatch.
double cosine(std::span<const double> u, std::span<const double> v);

}  // namespace taxoria
