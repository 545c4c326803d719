#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "figclass/figure.hpp"

namespace figclass {

/// A facet along which figures are classified (type, projection, uspc, object,
/// or anything user-defined).
struct Aspect {
  std::string name;
  std::string description;
};

struct Concept {
  std::string id;
  std::string label;
  std::string aspect;

  friend bool operator==(const Concept&, const Concept&) = default;
};

/// Canonical id for a label that arrives without one: the normalized label
/// with spaces replaced by underscores.
std::string concept_id_from_label(std::string_view label);

/// The concept set of one aspect, held in canonical order (sorted by id) so
/// that every seeded sampling step downstream is reproducible.
class ConceptSet {
 public:
  ConceptSet() = default;
  ConceptSet(Aspect aspect, std::vector<Concept> concepts);

  const Aspect& aspect() const noexcept { return aspect_; }
  std::span<const Concept> concepts() const noexcept { return concepts_; }
  std::size_t size() const noexcept { return concepts_.size(); }
  bool empty() const noexcept { return concepts_.empty(); }
  const Concept& operator[](std::size_t i) const { return concepts_[i]; }
  auto begin() const noexcept { return concepts_.begin(); }
  auto end() const noexcept { return concepts_.end(); }

  const Concept* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return index_of(id).has_value(); }

  /// Concepts whose ids are listed, in canonical order; unknown ids are ignored.
  ConceptSet subset(std::span<const std::string> ids) const;

 private:
  Aspect aspect_;
  std::vector<Concept> concepts_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ConceptRecord {
  std::string aspect;
  std::string id;  // optional; derived from the label when empty
  std::string label;
};

/// Builds the concept set for a single aspect. Labels are normalized and
/// case-folded duplicates collapse to the first occurrence; labels on the
/// stop list (e.g. the uninformative USPC "miscellaneous" class) are dropped.
ConceptSet load_concepts(std::span<const ConceptRecord> records,
                         std::span<const std::string> stop_list = {});

/// Groups records by aspect and builds one ConceptSet per aspect.
std::map<std::string, ConceptSet> load_concept_sets(std::span<const ConceptRecord> records,
                                                    std::span<const std::string> stop_list = {});

ConceptRecord concept_record_from_json(const nlohmann::json& j);
std::vector<ConceptRecord> read_concept_records(const std::filesystem::path& path);
nlohmann::json to_json(const Concept& c);

struct KeywordRule {
  std::vector<std::string> keywords;  // every phrase must occur
  std::string target;
  int priority = 0;
};

std::vector<KeywordRule> parse_keyword_rules(const nlohmann::json& j);
std::vector<KeywordRule> read_keyword_rules(const std::filesystem::path& path);

std::vector<KeywordRule> default_projection_rules();
ConceptSet default_projection_concepts();
ConceptSet default_type_concepts();

/// Target of the highest-priority rule whose keywords all occur in the
/// lower-cased label; equal priorities resolve to the earlier rule.
std::optional<std::string> map_projection(std::string_view raw_label,
                                          std::span<const KeywordRule> rules);

using Embedding = std::vector<double>;
using EmbedFn = std::function<std::vector<Embedding>(const std::vector<std::string>&)>;

inline constexpr double kDefaultMergeDistance = 0.15;

/// Average-linkage agglomerative clustering over cosine distance. Each raw
/// label maps to its cluster's representative: the member whose raw
/// embedding has the highest cosine to the normalized mean of the cluster
/// (ties to the lexicographically smallest label).
std::map<std::string, Concept> cluster_object_concepts(std::span<const std::string> labels,
                                                       const EmbedFn& embed,
                                                       double distance_threshold = kDefaultMergeDistance,
                                                       std::string_view aspect = "object");

inline constexpr std::size_t kMinSupport = 150;

ConceptSet filter_min_support(std::span<const Figure> figures, const ConceptSet& concepts,
                              std::size_t min_count = kMinSupport);

}  // namespace figclass
