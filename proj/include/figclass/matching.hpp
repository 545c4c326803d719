#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "figclass/prompts.hpp"
#include "figclass/taxonomy.hpp"

namespace figclass {

class Backend;

/// u.v / (|u||v|), clamped to [-1, 1]. Throws ZeroVector or DimensionMismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// Thread-safe embedding cache keyed by (backend id, text). Persists as JSONL
/// of {backend_id, text, vector}.
class EmbeddingCache {
 public:
  std::optional<Embedding> get(std::string_view backend_id, std::string_view text) const;
  void put(std::string_view backend_id, std::string_view text, Embedding vector);
  std::size_t size() const;

  /// Merges entries from `path`; a missing file is not an error.
  void load(const std::filesystem::path& path);
  /// Writes all entries sorted by key so the file content is reproducible.
  void save(const std::filesystem::path& path) const;

 private:
  static std::string key(std::string_view backend_id, std::string_view text);

  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::pair<std::string, Embedding>> entries_;
};

struct ConceptMatch {
  Concept matched;
  double score = 0.0;
};

/// Maps text to concepts through an embedding backend, caching every
/// embedding it fetches.
class Matcher {
 public:
  explicit Matcher(Backend& embedder, std::shared_ptr<EmbeddingCache> cache = std::make_shared<EmbeddingCache>());

  std::vector<Embedding> embeddings(const std::vector<std::string>& texts);
  Embedding embedding(const std::string& text);

  /// argmax over the set of cosine(embed(text), embed(label)); ties resolve to
  /// the earlier concept in canonical order.
  ConceptMatch nearest_concept(std::string_view text, const ConceptSet& concepts);

  /// The `size` concepts most similar to `concept` (itself excluded), by
  /// descending cosine with ties in canonical order.
  std::vector<Concept> similar_pool(const Concept& target, const ConceptSet& concepts,
                                    std::size_t size = kSimilarPoolSize);

  EmbedFn embed_fn();
  EmbeddingCache& cache() noexcept { return *cache_; }

 private:
  Backend& embedder_;
  std::shared_ptr<EmbeddingCache> cache_;
};

}  // namespace figclass
