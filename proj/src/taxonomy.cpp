#include "figclass/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "figclass/error.hpp"
#include "figclass/matching.hpp"
#include "figclass/text.hpp"

namespace figclass {

std::string concept_id_from_label(std::string_view label) {
  std::string id = normalize_label(label);
  std::replace(id.begin(), id.end(), ' ', '_');
  return id;
}

ConceptSet::ConceptSet(Aspect aspect, std::vector<Concept> concepts)
    : aspect_(std::move(aspect)), concepts_(std::move(concepts)) {
  std::sort(concepts_.begin(), concepts_.end(),
            [](const Concept& a, const Concept& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (!index_.emplace(concepts_[i].id, i).second) {
      throw Error(ErrorKind::DuplicateConcept, "concept id '" + concepts_[i].id + "' appears twice");
    }
  }
}

const Concept* ConceptSet::find(std::string_view id) const {
  auto idx = index_of(id);
  return idx ? &concepts_[*idx] : nullptr;
}

std::optional<std::size_t> ConceptSet::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ConceptSet ConceptSet::subset(std::span<const std::string> ids) const {
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<Concept> kept;
  for (const auto& c : concepts_) {
    if (wanted.count(c.id)) kept.push_back(c);
  }
  return ConceptSet(aspect_, std::move(kept));
}

ConceptSet load_concepts(std::span<const ConceptRecord> records,
                         std::span<const std::string> stop_list) {
  if (records.empty()) throw Error(ErrorKind::EmptyConceptSet, "no concept records");

  std::set<std::string> stopped;
  for (const auto& s : stop_list) stopped.insert(normalize_label(s));

  const std::string aspect = normalize_label(records.front().aspect);
  std::map<std::string, std::string> label_by_id;
  std::set<std::string> seen_labels;
  std::vector<Concept> concepts;
  for (const auto& r : records) {
    if (normalize_label(r.aspect) != aspect) {
      throw Error(ErrorKind::MixedAspects,
                  "records mix aspects '" + aspect + "' and '" + normalize_label(r.aspect) + "'");
    }
    const std::string label = normalize_label(r.label);
    if (label.empty() || stopped.count(label)) continue;
    if (!seen_labels.insert(label).second) continue;
    std::string id = r.id.empty() ? concept_id_from_label(label) : std::string(trim(r.id));
    auto [it, inserted] = label_by_id.emplace(id, label);
    if (!inserted) {
      throw Error(ErrorKind::DuplicateConcept,
                  "id '" + id + "' used for '" + it->second + "' and '" + label + "'");
    }
    concepts.push_back(Concept{std::move(id), label, aspect});
  }
  if (concepts.empty()) throw Error(ErrorKind::EmptyConceptSet, "all records were filtered out");
  return ConceptSet(Aspect{aspect, {}}, std::move(concepts));
}

std::map<std::string, ConceptSet> load_concept_sets(std::span<const ConceptRecord> records,
                                                    std::span<const std::string> stop_list) {
  std::map<std::string, std::vector<ConceptRecord>> grouped;
  for (const auto& r : records) grouped[normalize_label(r.aspect)].push_back(r);
  std::map<std::string, ConceptSet> sets;
  for (const auto& [aspect, rs] : grouped) sets.emplace(aspect, load_concepts(rs, stop_list));
  if (sets.empty()) throw Error(ErrorKind::EmptyConceptSet, "no concept records");
  return sets;
}

ConceptRecord concept_record_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("aspect") || !j.contains("label")) {
    throw Error(ErrorKind::InvalidRequest, "concept record needs \"aspect\" and \"label\"");
  }
  return ConceptRecord{j["aspect"].get<std::string>(), j.value("id", std::string{}),
                       j["label"].get<std::string>()};
}

std::vector<ConceptRecord> read_concept_records(const std::filesystem::path& path) {
  std::vector<ConceptRecord> records;
  for (const auto& row : read_jsonl(path)) records.push_back(concept_record_from_json(row));
  return records;
}

nlohmann::json to_json(const Concept& c) {
  return {{"aspect", c.aspect}, {"id", c.id}, {"label", c.label}};
}

std::vector<KeywordRule> parse_keyword_rules(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorKind::InvalidConfig, "keyword rules must be a JSON array");
  std::vector<KeywordRule> rules;
  for (const auto& item : j) {
    KeywordRule rule;
    for (const auto& kw : item.at("keywords")) {
      auto phrase = normalize_label(kw.get<std::string>());
      if (!phrase.empty()) rule.keywords.push_back(std::move(phrase));
    }
    if (rule.keywords.empty()) throw Error(ErrorKind::InvalidConfig, "keyword rule without keywords");
    rule.target = item.at("target").get<std::string>();
    rule.priority = item.value("priority", 0);
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<KeywordRule> read_keyword_rules(const std::filesystem::path& path) {
  return parse_keyword_rules(read_json(path));
}

std::vector<KeywordRule> default_projection_rules() {
  struct Group {
    const char* target;
    int priority;
    std::vector<const char*> phrases;
  };
  // More specific views outrank the generic orientation words, so
  // "left perspective" is a perspective and "partial front view" is partial.
  const std::vector<Group> groups = {
      {"exploded", 100, {"exploded"}},
      {"sectional", 90, {"section", "cutaway", "cut-away", "cut away"}},
      {"detail", 80, {"detail", "enlarged", "close-up", "closeup", "magnified"}},
      {"partial", 70, {"partial", "fragmentary", "broken away", "broken-away"}},
      {"perspective", 60, {"perspective", "isometric", "three-dimensional"}},
      {"plan", 50, {"plan", "top", "bottom", "overhead"}},
      {"elevation", 40, {"elevation", "front", "rear", "back", "side", "left", "right"}},
  };
  std::vector<KeywordRule> rules;
  for (const auto& g : groups) {
    for (const char* phrase : g.phrases) rules.push_back(KeywordRule{{phrase}, g.target, g.priority});
  }
  return rules;
}

namespace {

ConceptSet concepts_from_labels(std::string_view aspect, std::initializer_list<const char*> labels) {
  std::vector<ConceptRecord> records;
  for (const char* l : labels) records.push_back(ConceptRecord{std::string(aspect), {}, l});
  return load_concepts(records);
}

}  // namespace

ConceptSet default_projection_concepts() {
  return concepts_from_labels("projection", {"perspective", "elevation", "plan", "sectional",
                                             "detail", "exploded", "partial"});
}

ConceptSet default_type_concepts() {
  return concepts_from_labels("type", {"drawing", "graph", "flowchart", "gene sequence",
                                       "program listing", "symbol", "chemical structure", "table",
                                       "mathematics", "block or circuit"});
}

std::optional<std::string> map_projection(std::string_view raw_label,
                                          std::span<const KeywordRule> rules) {
  const std::string text = to_lower(raw_label);
  const KeywordRule* best = nullptr;
  for (const auto& rule : rules) {
    if (best && rule.priority <= best->priority) continue;
    const bool fires = !rule.keywords.empty() &&
                       std::all_of(rule.keywords.begin(), rule.keywords.end(), [&](const auto& kw) {
                         return text.find(kw) != std::string::npos;
                       });
    if (fires) best = &rule;
  }
  if (!best) return std::nullopt;
  return best->target;
}

std::map<std::string, Concept> cluster_object_concepts(std::span<const std::string> labels,
                                                       const EmbedFn& embed,
                                                       double distance_threshold,
                                                       std::string_view aspect) {
  if (labels.empty()) throw Error(ErrorKind::EmptyConceptSet, "no labels to cluster");

  std::set<std::string> unique;
  for (const auto& l : labels) {
    auto n = normalize_label(l);
    if (n.empty()) throw Error(ErrorKind::InvalidRequest, "empty label");
    unique.insert(std::move(n));
  }
  const std::vector<std::string> names(unique.begin(), unique.end());
  const std::size_t n = names.size();

  std::vector<Embedding> vectors;
  try {
    vectors = embed(names);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::EmbeddingBackendError, e.what());
  }
  if (vectors.size() != n) {
    throw Error(ErrorKind::EmbeddingBackendError, "embedder returned a wrong number of vectors");
  }
  for (const auto& v : vectors) {
    if (v.empty() || v.size() != vectors.front().size()) {
      throw Error(ErrorKind::EmbeddingBackendError, "embedder returned vectors of unequal length");
    }
  }

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i][j] = dist[j][i] = 1.0 - cosine(vectors[i], vectors[j]);
    }
  }

  std::vector<std::vector<std::size_t>> members(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  for (;;) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_a = n, best_b = n;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (active[b] && dist[a][b] < best) {
          best = dist[a][b];
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_a == n || best > distance_threshold) break;

    // Lance-Williams update for average linkage.
    const double wa = static_cast<double>(members[best_a].size());
    const double wb = static_cast<double>(members[best_b].size());
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == best_a || c == best_b) continue;
      const double d = (wa * dist[best_a][c] + wb * dist[best_b][c]) / (wa + wb);
      dist[best_a][c] = dist[c][best_a] = d;
    }
    members[best_a].insert(members[best_a].end(), members[best_b].begin(), members[best_b].end());
    members[best_b].clear();
    active[best_b] = false;
  }

  std::vector<std::string> representative(n);
  const std::size_t dim = vectors.front().size();
  for (std::size_t c = 0; c < n; ++c) {
    if (!active[c]) continue;
    Embedding centroid(dim, 0.0);
    for (std::size_t m : members[c]) {
      for (std::size_t d = 0; d < dim; ++d) centroid[d] += vectors[m][d];
    }
    double norm = 0.0;
    for (double x : centroid) norm += x * x;

    std::size_t rep = *std::min_element(members[c].begin(), members[c].end());
    if (norm > 0.0) {
      std::vector<double> scores;
      for (std::size_t m : members[c]) scores.push_back(cosine(vectors[m], centroid));
      const double top = *std::max_element(scores.begin(), scores.end());
      // names are sorted, so the smallest index among the top scorers is the
      // lexicographically smallest label
      rep = n;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] >= top - 1e-12) rep = std::min(rep, members[c][i]);
      }
    }
    for (std::size_t m : members[c]) representative[m] = names[rep];
  }

  std::map<std::string, Concept> mapping;
  for (const auto& raw : labels) {
    const auto idx = static_cast<std::size_t>(
        std::lower_bound(names.begin(), names.end(), normalize_label(raw)) - names.begin());
    const std::string& rep = representative[idx];
    mapping[raw] = Concept{concept_id_from_label(rep), rep, std::string(aspect)};
  }
  return mapping;
}

ConceptSet filter_min_support(std::span<const Figure> figures, const ConceptSet& concepts,
                              std::size_t min_count) {
  std::vector<std::size_t> counts(concepts.size(), 0);
  for (const auto& f : figures) {
    if (const auto* truth = f.truth_for(concepts.aspect().name)) {
      if (auto idx = concepts.index_of(*truth)) ++counts[*idx];
    }
  }
  std::vector<Concept> kept;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (counts[i] >= min_count) kept.push_back(concepts[i]);
  }
  return ConceptSet(concepts.aspect(), std::move(kept));
}

}  // namespace figclass
