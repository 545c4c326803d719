#include "figclass/datasetgen.hpp"

#include <algorithm>
#include <deque>
#include <random>
#include <set>

#include "figclass/error.hpp"
#include "figclass/text.hpp"

namespace figclass {

const std::vector<ClsEntry>& ClsDataset::split(Split s) const {
  static const std::vector<ClsEntry> kEmpty;
  auto it = splits.find(s);
  return it == splits.end() ? kEmpty : it->second;
}

ClsDataset build_cls_splits(std::span<const Figure> corpus, const ConceptSet& concepts, const ClsConfig& config) {
  ClsDataset ds;
  ds.aspect = concepts.aspect().name;
  auto& train = ds.splits[Split::train];
  auto& valid = ds.splits[Split::valid];
  auto& test = ds.splits[Split::test];

  std::vector<std::vector<std::string>> supply(concepts.size());
  for (const auto& f : corpus) {
    if (const auto* truth = f.truth_for(ds.aspect)) {
      if (auto idx = concepts.index_of(*truth)) supply[*idx].push_back(f.id);
    }
  }

  std::vector<std::deque<std::string>> leftovers(concepts.size());
  std::vector<std::size_t> survivors;
  for (std::size_t c = 0; c < concepts.size(); ++c) {
    auto& ids = supply[c];
    if (ids.size() < config.train_per_concept) {
      ds.warnings.push_back("concept '" + concepts[c].id + "' dropped: " + std::to_string(ids.size()) +
                            " figures < " + std::to_string(config.train_per_concept));
      continue;
    }
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(mix_seed(config.seed, fnv1a64(concepts[c].id)));
    seeded_shuffle(ids, rng);
    survivors.push_back(c);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i < config.train_per_concept) {
        train.push_back(ClsEntry{ids[i], concepts[c].id});
      } else {
        leftovers[c].push_back(ids[i]);
      }
    }
  }

  for (auto* split : {&valid, &test}) {
    for (std::size_t c : survivors) {
      if (leftovers[c].empty()) continue;
      split->push_back(ClsEntry{leftovers[c].front(), concepts[c].id});
      leftovers[c].pop_front();
    }
  }

  std::vector<ClsEntry> pool;
  for (std::size_t c : survivors) {
    for (const auto& id : leftovers[c]) pool.push_back(ClsEntry{id, concepts[c].id});
  }
  std::mt19937_64 fill_rng(mix_seed(config.seed, fnv1a64("fill")));
  for (auto [split, target, name] : {std::tuple{&valid, config.valid_target, "valid"},
                                     std::tuple{&test, config.test_target, "test"}}) {
    while (split->size() < target && !pool.empty()) {
      const std::size_t pick = uniform_index(fill_rng, pool.size());
      split->push_back(std::move(pool[pick]));
      pool[pick] = std::move(pool.back());
      pool.pop_back();
    }
    if (split->size() < target) {
      ds.warnings.push_back("DatasetUnderfilled: " + std::string(name) + " has " + std::to_string(split->size()) +
                            " of " + std::to_string(target) + " figures");
    }
  }
  return ds;
}

namespace {

VqaRecord make_record(const ClsEntry& entry, const std::string& aspect, Split split, Question q, std::string answer) {
  VqaRecord r;
  r.figure_id = entry.figure_id;
  r.aspect = aspect;
  r.qtype = q.type;
  r.question = std::move(q);
  r.answer = std::move(answer);
  r.split = split;
  r.gold_concept_id = entry.concept_id;
  return r;
}

class VqaBuilder {
 public:
  VqaBuilder(const ConceptSet& concepts, const VqaConfig& config) : concepts_(concepts), config_(config) {
    if (config_.k_choices.empty()) throw Error(ErrorKind::InvalidConfig, "no multiple-choice sizes given");
  }

  VqaRecord binary(const ClsEntry& e, Split split, bool positive) const {
    const Concept& gold = gold_of(e);
    const Concept* target = &gold;
    if (!positive) {
      if (concepts_.size() < 2) throw Error(ErrorKind::InsufficientPool, "negative binary needs two concepts");
      std::mt19937_64 rng(mix_seed(config_.seed, fnv1a64(e.figure_id + "#neg")));
      std::size_t pick = uniform_index(rng, concepts_.size() - 1);
      if (pick >= *concepts_.index_of(gold.id)) ++pick;
      target = &concepts_[pick];
    }
    return make_record(e, aspect(), split, render_binary(concepts_.aspect(), *target, templates()),
                       positive ? "Yes" : "No");
  }

  VqaRecord open(const ClsEntry& e, Split split) const {
    return make_record(e, aspect(), split, render_open(concepts_.aspect(), templates()), gold_of(e).label);
  }

  VqaRecord choice(const ClsEntry& e, Split split, std::size_t k) const {
    const Concept& gold = gold_of(e);
    std::optional<std::span<const Concept>> similar;
    if (config_.similar_pools) {
      if (auto it = config_.similar_pools->find(gold.id); it != config_.similar_pools->end()) similar = it->second;
    }
    const auto seed = mix_seed(config_.seed, fnv1a64(e.figure_id + "#mc" + std::to_string(k)));
    const auto options = sample_options(gold, concepts_, k, seed, similar);
    const auto answer = options.bracketed(*options.index_of(gold.id));
    return make_record(e, aspect(), split, render_multiple_choice(concepts_.aspect(), options, templates()), answer);
  }

 private:
  const Concept& gold_of(const ClsEntry& e) const {
    const auto* c = concepts_.find(e.concept_id);
    if (!c) throw Error(ErrorKind::ConceptNotInSet, "dataset concept '" + e.concept_id + "' is not in the set");
    return *c;
  }
  const std::string& aspect() const { return concepts_.aspect().name; }
  const TemplateSet& templates() const { return *config_.templates; }

  const ConceptSet& concepts_;
  const VqaConfig& config_;
};

}  // namespace

std::vector<VqaRecord> build_vqa(const ClsDataset& cls, const ConceptSet& concepts, const VqaConfig& config) {
  const VqaBuilder builder(concepts, config);
  std::vector<VqaRecord> records;

  struct Counters {
    std::size_t dealt = 0, binary = 0, choice = 0;
  };
  std::map<std::string, Counters> per_concept;
  for (const auto& e : cls.split(Split::train)) {
    auto& n = per_concept[e.concept_id];
    switch (n.dealt++ % 3) {
      case 0: records.push_back(builder.binary(e, Split::train, n.binary++ % 2 == 0)); break;
      case 1: records.push_back(builder.open(e, Split::train)); break;
      default:
        records.push_back(builder.choice(e, Split::train, config.k_choices[n.choice++ % config.k_choices.size()]));
        break;
    }
  }

  for (Split split : {Split::valid, Split::test}) {
    const auto& entries = cls.split(split);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      records.push_back(builder.binary(entries[i], split, i % 2 == 0));
      records.push_back(builder.open(entries[i], split));
      for (std::size_t k : config.k_choices) records.push_back(builder.choice(entries[i], split, k));
    }
  }
  return records;
}

ClsDataset subsample_fewshot(const ClsDataset& cls, std::size_t n_per_concept, std::uint64_t seed) {
  if (n_per_concept < 1) throw Error(ErrorKind::InvalidConfig, "n_per_concept must be at least 1");
  std::map<std::string, std::vector<std::pair<std::uint64_t, std::string>>> ranked;
  for (const auto& e : cls.split(Split::train)) {
    ranked[e.concept_id].emplace_back(mix_seed(seed, fnv1a64(e.figure_id)), e.figure_id);
  }
  std::set<std::string> keep;
  for (auto& [concept_id, figures] : ranked) {
    std::sort(figures.begin(), figures.end());
    for (std::size_t i = 0; i < std::min(n_per_concept, figures.size()); ++i) keep.insert(figures[i].second);
  }

  ClsDataset out = cls;
  auto& train = out.splits[Split::train];
  train.clear();
  for (const auto& e : cls.split(Split::train)) {
    if (keep.count(e.figure_id)) train.push_back(e);
  }
  return out;
}

void ValidationReport::add(const std::string& kind, const std::string& example) {
  for (auto& v : violations) {
    if (v.kind == kind) {
      ++v.count;
      return;
    }
  }
  violations.push_back(Violation{kind, 1, example});
}

std::size_t ValidationReport::count(const std::string& kind) const {
  for (const auto& v : violations) {
    if (v.kind == kind) return v.count;
  }
  return 0;
}

ValidationReport validate_dataset(const ClsDataset& ds, const ConceptSet& concepts, std::size_t train_cap) {
  ValidationReport report;
  if (ds.aspect != concepts.aspect().name) report.add("aspect_mismatch", ds.aspect);

  std::map<std::string, Split> owner;
  for (const auto& [split, entries] : ds.splits) {
    std::set<std::string> seen;
    for (const auto& e : entries) {
      if (!concepts.contains(e.concept_id)) report.add("unknown_concept", e.concept_id);
      if (!seen.insert(e.figure_id).second) report.add("duplicate_in_split", e.figure_id);
      auto [it, inserted] = owner.emplace(e.figure_id, split);
      if (!inserted && it->second != split) report.add("split_overlap", e.figure_id);
    }
  }

  std::map<std::string, std::size_t> train_counts;
  for (const auto& e : ds.split(Split::train)) ++train_counts[e.concept_id];
  for (const auto& [concept_id, n] : train_counts) {
    if (n > train_cap) report.add("train_cap_exceeded", concept_id);
  }
  return report;
}

ValidationReport validate_vqa(std::span<const VqaRecord> records, const ConceptSet& concepts,
                              const TemplateSet& templates) {
  ValidationReport report;
  for (const auto& r : records) {
    const Concept* gold = concepts.find(r.gold_concept_id);
    if (!gold) {
      report.add("unknown_concept", r.gold_concept_id);
      continue;
    }
    if (!ends_with(r.question.text, templates.instruction(r.qtype))) report.add("instruction_suffix", r.figure_id);
    switch (r.qtype) {
      case QuestionType::binary:
        if (r.answer != "Yes" && r.answer != "No") {
          report.add("binary_answer", r.figure_id);
        } else if (!r.question.target) {
          report.add("binary_target_missing", r.figure_id);
        } else if ((r.question.target->id == gold->id) != (r.answer == "Yes")) {
          report.add("binary_answer_inconsistent", r.figure_id);
        }
        break;
      case QuestionType::multiple_choice: {
        const auto& opts = r.question.options;
        const auto hits = std::count_if(opts.concepts().begin(), opts.concepts().end(),
                                        [&](const Concept& c) { return c.id == gold->id; });
        if (opts.size() < 2) report.add("mc_options", r.figure_id);
        if (hits != 1) {
          report.add("gold_option", r.figure_id);
        } else if (r.answer != opts.bracketed(*opts.index_of(gold->id))) {
          report.add("mc_answer", r.figure_id);
        }
        break;
      }
      case QuestionType::open_ended:
        if (r.answer != gold->label) report.add("open_answer", r.figure_id);
        break;
    }
  }
  return report;
}

std::string cls_to_jsonl(const ClsDataset& ds) {
  std::string out;
  for (Split split : {Split::train, Split::valid, Split::test}) {
    for (const auto& e : ds.split(split)) {
      out += nlohmann::json{{"figure_id", e.figure_id}, {"aspect", ds.aspect}, {"concept_id", e.concept_id},
                            {"split", to_string(split)}}
                 .dump();
      out += '\n';
    }
  }
  return out;
}

ClsDataset cls_from_jsonl(std::span<const nlohmann::json> rows) {
  ClsDataset ds;
  for (const auto& row : rows) {
    const auto aspect = row.at("aspect").get<std::string>();
    if (ds.aspect.empty()) ds.aspect = aspect;
    if (aspect != ds.aspect) throw Error(ErrorKind::MixedAspects, "dataset mixes aspects");
    const auto split = parse_split(row.at("split").get<std::string>());
    if (!split) throw Error(ErrorKind::InvalidRequest, "unknown split in dataset");
    ds.splits[*split].push_back(ClsEntry{row.at("figure_id").get<std::string>(), row.at("concept_id").get<std::string>()});
  }
  return ds;
}

nlohmann::json to_json(const VqaRecord& record) {
  nlohmann::json j{{"figure_id", record.figure_id},
                   {"aspect", record.aspect},
                   {"qtype", to_string(record.qtype)},
                   {"question", record.question.text}};
  if (record.qtype == QuestionType::multiple_choice) {
    nlohmann::json options = nlohmann::json::array();
    const auto& opts = record.question.options;
    for (std::size_t i = 0; i < opts.size(); ++i) {
      options.push_back({{"numeral", opts.numeral(i)}, {"id", opts[i].id}, {"label", opts[i].label}});
    }
    j["options"] = std::move(options);
  }
  j["answer"] = record.answer;
  j["split"] = to_string(record.split);
  return j;
}

std::string vqa_to_jsonl(std::span<const VqaRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace figclass
