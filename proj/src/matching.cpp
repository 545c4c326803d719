#include "figclass/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>

#include "figclass/backend.hpp"
#include "figclass/error.hpp"
#include "figclass/text.hpp"

namespace figclass {

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "dimensions " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error(ErrorKind::ZeroVector, "cosine of a zero or non-finite vector");
  const double s = dot / (std::sqrt(nu) * std::sqrt(nv));
  if (std::isnan(s)) throw Error(ErrorKind::ZeroVector, "cosine is NaN");
  return std::clamp(s, -1.0, 1.0);
}

std::string EmbeddingCache::key(std::string_view backend_id, std::string_view text) {
  std::string k(backend_id);
  k.push_back('\x1f');
  k.append(text);
  return k;
}

std::optional<Embedding> EmbeddingCache::get(std::string_view backend_id, std::string_view text) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key(backend_id, text));
  if (it == entries_.end()) return std::nullopt;
  return it->second.second;
}

void EmbeddingCache::put(std::string_view backend_id, std::string_view text, Embedding vector) {
  std::unique_lock lock(mutex_);
  entries_[key(backend_id, text)] = {std::string(backend_id), std::move(vector)};
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

void EmbeddingCache::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  for (const auto& row : read_jsonl(path)) {
    put(row.at("backend_id").get<std::string>(), row.at("text").get<std::string>(),
        row.at("vector").get<Embedding>());
  }
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::map<std::string, const std::pair<std::string, Embedding>*> sorted;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [k, v] : entries_) sorted.emplace(k, &v);
  }
  std::string out;
  for (const auto& [k, v] : sorted) {
    const auto text = k.substr(v->first.size() + 1);
    out += nlohmann::json{{"backend_id", v->first}, {"text", text}, {"vector", v->second}}.dump();
    out += '\n';
  }
  write_file(path, out);
}

Matcher::Matcher(Backend& embedder, std::shared_ptr<EmbeddingCache> cache)
    : embedder_(embedder), cache_(std::move(cache)) {}

std::vector<Embedding> Matcher::embeddings(const std::vector<std::string>& texts) {
  const std::string backend_id = embedder_.id();
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_->get(backend_id, texts[i])) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(texts[i]);
      missing_at.push_back(i);
    }
  }
  if (!missing.empty()) {
    auto fetched = embedder_.embed(missing);
    for (std::size_t m = 0; m < missing.size(); ++m) {
      cache_->put(backend_id, missing[m], fetched[m]);
      out[missing_at[m]] = std::move(fetched[m]);
    }
  }
  return out;
}

Embedding Matcher::embedding(const std::string& text) { return std::move(embeddings({text}).front()); }

namespace {

std::vector<std::string> labels_of(const ConceptSet& concepts) {
  std::vector<std::string> labels;
  labels.reserve(concepts.size());
  for (const auto& c : concepts) labels.push_back(c.label);
  return labels;
}

}  // namespace

ConceptMatch Matcher::nearest_concept(std::string_view text, const ConceptSet& concepts) {
  if (concepts.empty()) throw Error(ErrorKind::EmptyConceptSet, "nearest_concept over an empty set");
  const Embedding query = embedding(std::string(trim(text)));
  const auto vectors = embeddings(labels_of(concepts));
  std::size_t best = 0;
  double best_score = cosine(query, vectors[0]);
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    const double s = cosine(query, vectors[i]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return ConceptMatch{concepts[best], best_score};
}

std::vector<Concept> Matcher::similar_pool(const Concept& target, const ConceptSet& concepts, std::size_t size) {
  const auto self = concepts.index_of(target.id);
  if (!self) throw Error(ErrorKind::ConceptNotInSet, "concept '" + target.id + "' is not in the set");
  const auto vectors = embeddings(labels_of(concepts));

  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (i != *self) ranked.emplace_back(cosine(vectors[*self], vectors[i]), i);
  }
  const auto keep = std::min(size, ranked.size());
  auto by_score = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), by_score);

  std::vector<Concept> pool;
  pool.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) pool.push_back(concepts[ranked[i].second]);
  return pool;
}

EmbedFn Matcher::embed_fn() {
  return [this](const std::vector<std::string>& texts) { return embeddings(texts); };
}

}  // namespace figclass
