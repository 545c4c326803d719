#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "figclass/figure.hpp"
#include "figclass/prompts.hpp"
#include "figclass/taxonomy.hpp"

namespace figclass {

struct ClsEntry {
  std::string figure_id;
  std::string concept_id;

  friend bool operator==(const ClsEntry&, const ClsEntry&) = default;
};

struct ClsDataset {
  std::string aspect;
  std::map<Split, std::vector<ClsEntry>> splits;
  std::vector<std::string> warnings;

  const std::vector<ClsEntry>& split(Split s) const;
  std::size_t size(Split s) const { return split(s).size(); }
};

struct ClsConfig {
  std::size_t train_per_concept = kMinSupport;
  std::size_t valid_target = 1000;
  std::size_t test_target = 1000;
  std::uint64_t seed = 0;
};

/// Train takes train_per_concept figures of every concept with enough
/// supply (others are dropped with a warning). Valid and test then each take
/// one remaining figure per concept, round-robin, and are topped up uniformly
/// at random from the leftovers until they reach their targets.
ClsDataset build_cls_splits(std::span<const Figure> corpus, const ConceptSet& concepts, const ClsConfig& config);

struct VqaRecord {
  std::string figure_id;
  std::string aspect;
  QuestionType qtype = QuestionType::binary;
  Question question;
  std::string answer;
  Split split = Split::train;
  std::string gold_concept_id;  // in memory only; not part of the file schema
};

using SimilarPools = std::map<std::string, std::vector<Concept>>;

struct VqaConfig {
  std::vector<std::size_t> k_choices{5, 10, 20};
  std::uint64_t seed = 0;
  const TemplateSet* templates = &default_templates();
  /// When set (object aspect), distractors for a gold concept come from its pool.
  const SimilarPools* similar_pools = nullptr;
};

/// Train figures are dealt per concept to binary / open-ended /
/// multiple-choice in turn (equal counts within one); binary targets
/// alternate positive and negative; multiple-choice K cycles through
/// k_choices. Valid and test figures yield one binary, one open-ended and
/// one multiple-choice record per K.
std::vector<VqaRecord> build_vqa(const ClsDataset& cls, const ConceptSet& concepts, const VqaConfig& config);

/// Keeps at most n train figures per concept. Each figure's rank is a seeded
/// hash of its id, so smaller n always selects a subset of larger n.
ClsDataset subsample_fewshot(const ClsDataset& cls, std::size_t n_per_concept, std::uint64_t seed);

struct Violation {
  std::string kind;
  std::size_t count = 0;
  std::string example;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  void add(const std::string& kind, const std::string& example);
  std::size_t count(const std::string& kind) const;
};

ValidationReport validate_dataset(const ClsDataset& ds, const ConceptSet& concepts,
                                  std::size_t train_cap = kMinSupport);
ValidationReport validate_vqa(std::span<const VqaRecord> records, const ConceptSet& concepts,
                              const TemplateSet& templates = default_templates());

// JSONL: {figure_id, aspect, concept_id, split}
std::string cls_to_jsonl(const ClsDataset& ds);
ClsDataset cls_from_jsonl(std::span<const nlohmann::json> rows);
// JSONL: {figure_id, aspect, qtype, question, options?, answer, split}
nlohmann::json to_json(const VqaRecord& record);
std::string vqa_to_jsonl(std::span<const VqaRecord> records);

}  // namespace figclass
