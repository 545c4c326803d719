#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "figclass/datasetgen.hpp"
#include "figclass/error.hpp"
#include "support/synthetic.hpp"

using namespace figclass;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::IoError;
}

bool has_warning(const ClsDataset& ds, const std::string& prefix) {
  return std::any_of(ds.warnings.begin(), ds.warnings.end(),
                     [&](const std::string& w) { return w.rfind(prefix, 0) == 0; });
}

}  // namespace

TEST_CASE("cls splits at full supply") {
  const auto set = testing::synthetic_concepts(32, "uspc");
  const auto corpus = testing::synthetic_corpus(set, 250);
  ClsConfig cfg;
  cfg.seed = 3;
  const auto ds = build_cls_splits(corpus, set, cfg);
  CHECK(ds.size(Split::train) == 4800);
  CHECK(ds.size(Split::valid) == 1000);
  CHECK(ds.size(Split::test) == 1000);
  CHECK(ds.warnings.empty());
  CHECK(validate_dataset(ds, set).ok());

  std::map<std::string, int> per;
  for (const auto& e : ds.split(Split::train)) ++per[e.concept_id];
  for (const auto& [id, n] : per) CHECK(n == 150);
  for (Split s : {Split::valid, Split::test}) {
    std::set<std::string> covered;
    for (const auto& e : ds.split(s)) covered.insert(e.concept_id);
    CHECK(covered.size() == 32);
  }

  const auto again = build_cls_splits(corpus, set, cfg);
  CHECK(cls_to_jsonl(ds) == cls_to_jsonl(again));
  cfg.seed = 4;
  CHECK(cls_to_jsonl(ds) != cls_to_jsonl(build_cls_splits(corpus, set, cfg)));
}

TEST_CASE("cls splits underfill at 200 per concept") {
  // 32 x 200 leaves 1600 figures after train: valid fills, test gets 600
  const auto set = testing::synthetic_concepts(32, "uspc");
  const auto ds = build_cls_splits(testing::synthetic_corpus(set, 200), set, {});
  CHECK(ds.size(Split::train) == 4800);
  CHECK(ds.size(Split::valid) == 1000);
  CHECK(ds.size(Split::test) == 600);
  CHECK(has_warning(ds, "DatasetUnderfilled: test has 600 of 1000"));
  CHECK(validate_dataset(ds, set).ok());
}

TEST_CASE("cls splits with no leftover supply") {
  const auto set = testing::synthetic_concepts(7, "projection");
  const auto ds = build_cls_splits(testing::synthetic_corpus(set, 150), set, {});
  CHECK(ds.size(Split::train) == 1050);
  CHECK(ds.size(Split::valid) == 0);
  CHECK(ds.size(Split::test) == 0);
  CHECK(has_warning(ds, "DatasetUnderfilled: valid"));
  CHECK(has_warning(ds, "DatasetUnderfilled: test"));
}

TEST_CASE("cls splits drop concepts below the support floor") {
  const auto set = testing::synthetic_concepts(4, "type");
  auto corpus = testing::synthetic_corpus(set, 160);
  std::erase_if(corpus, [&](const Figure& f) { return *f.truth_for("type") == set[1].id && f.id.back() == '1'; });
  const auto ds = build_cls_splits(corpus, set, {});
  CHECK(ds.size(Split::train) == 450);
  CHECK(has_warning(ds, "concept '" + set[1].id + "' dropped"));
  for (const auto& e : ds.split(Split::valid)) CHECK(e.concept_id != set[1].id);
}

TEST_CASE("object-style aspect yields one test figure per concept") {
  const auto set = testing::synthetic_concepts(1447);
  ClsConfig cfg;
  cfg.valid_target = 1447;
  cfg.test_target = 1447;
  const auto ds = build_cls_splits(testing::synthetic_corpus(set, 152), set, cfg);
  REQUIRE(ds.size(Split::test) == 1447);
  std::map<std::string, int> per;
  for (const auto& e : ds.split(Split::test)) ++per[e.concept_id];
  CHECK(per.size() == 1447);
  for (const auto& [id, n] : per) CHECK(n == 1);
}

TEST_CASE("vqa train balance and construction") {
  const auto set = testing::synthetic_concepts(10, "type");
  const auto ds = build_cls_splits(testing::synthetic_corpus(set, 152), set, {.valid_target = 10, .test_target = 10});
  VqaConfig cfg;
  cfg.seed = 5;
  cfg.k_choices = {5, 10};  // K=20 needs 20 concepts
  const auto records = build_vqa(ds, set, cfg);
  CHECK(validate_vqa(records, set).ok());

  std::map<std::string, std::map<QuestionType, int>> per;
  std::map<std::string, std::map<std::string, int>> polarity;
  std::map<std::size_t, int> ks;
  for (const auto& r : records) {
    if (r.split != Split::train) continue;
    ++per[r.gold_concept_id][r.qtype];
    if (r.qtype == QuestionType::binary) ++polarity[r.gold_concept_id][r.answer];
    if (r.qtype == QuestionType::multiple_choice) ++ks[r.question.options.size()];
  }
  for (const auto& [id, counts] : per) {
    CHECK(counts.at(QuestionType::binary) == 50);
    CHECK(counts.at(QuestionType::open_ended) == 50);
    CHECK(counts.at(QuestionType::multiple_choice) == 50);
    CHECK(polarity[id]["Yes"] == 25);
    CHECK(polarity[id]["No"] == 25);
  }
  CHECK(ks[5] == 250);
  CHECK(ks[10] == 250);
}

TEST_CASE("vqa valid/test figures get one record per type and K") {
  const auto set = testing::synthetic_concepts(25, "type");
  const auto ds = build_cls_splits(testing::synthetic_corpus(set, 152), set, {.valid_target = 25, .test_target = 25});
  const auto records = build_vqa(ds, set, {});
  std::map<std::string, std::vector<const VqaRecord*>> by_fig;
  for (const auto& r : records)
    if (r.split == Split::test) by_fig[r.figure_id].push_back(&r);
  REQUIRE(by_fig.size() == 25);
  for (const auto& [fig, rs] : by_fig) {
    REQUIRE(rs.size() == 5);
    CHECK(rs[0]->qtype == QuestionType::binary);
    CHECK(rs[1]->qtype == QuestionType::open_ended);
    CHECK(rs[2]->question.options.size() == 5);
    CHECK(rs[3]->question.options.size() == 10);
    CHECK(rs[4]->question.options.size() == 20);
  }
}

TEST_CASE("vqa binary record wording") {
  const auto set = default_type_concepts();
  ClsDataset ds;
  ds.aspect = "type";
  ds.splits[Split::train] = {{"f1", "graph"}, {"f2", "graph"}, {"f3", "graph"}, {"f4", "graph"}};
  const auto records = build_vqa(ds, set, {.k_choices = {5}});
  REQUIRE(records.size() == 4);
  CHECK(records[0].question.text == "Is the type of the figure graph? Answer 'Yes' or 'No'.");
  CHECK(records[0].answer == "Yes");
  CHECK(records[1].answer == "graph");
  CHECK(records[3].qtype == QuestionType::binary);
  CHECK(records[3].answer == "No");
  CHECK(records[3].question.target->id != "graph");
  const auto j = to_json(records[2]);
  CHECK(j.at("qtype") == "multiple_choice");
  CHECK(j.at("options").size() == 5);
  CHECK(j.at("answer").get<std::string>().front() == '(');
}

TEST_CASE("vqa similar pools constrain distractors") {
  const auto set = testing::synthetic_concepts(30);
  ClsDataset ds;
  ds.aspect = "object";
  for (int i = 0; i < 9; ++i) ds.splits[Split::train].push_back({"f" + std::to_string(i), set[0].id});
  SimilarPools pools;
  pools[set[0].id] = std::vector<Concept>(set.begin() + 1, set.begin() + 21);
  VqaConfig cfg;
  cfg.similar_pools = &pools;
  for (const auto& r : build_vqa(ds, set, cfg)) {
    if (r.qtype != QuestionType::multiple_choice) continue;
    for (const auto& c : r.question.options.concepts()) {
      CHECK((c.id == set[0].id || std::find(pools[set[0].id].begin(), pools[set[0].id].end(), c) != pools[set[0].id].end()));
    }
  }
}

TEST_CASE("vqa errors") {
  const auto set = testing::synthetic_concepts(3, "type");
  ClsDataset ds;
  ds.aspect = "type";
  ds.splits[Split::train] = {{"a", set[0].id}, {"b", set[0].id}, {"c", set[0].id}};
  CHECK(kind_of([&] { build_vqa(ds, set, {.k_choices = {5}}); }) == ErrorKind::InsufficientPool);
  ds.splits[Split::train] = {{"a", "nope"}};
  CHECK(kind_of([&] { build_vqa(ds, set, {.k_choices = {2}}); }) == ErrorKind::ConceptNotInSet);
}

TEST_CASE("fewshot subsampling") {
  const auto set = testing::synthetic_concepts(10, "type");
  const auto ds = build_cls_splits(testing::synthetic_corpus(set, 170), set, {.valid_target = 50, .test_target = 50});
  CHECK(cls_to_jsonl(subsample_fewshot(ds, 150, 1)) == cls_to_jsonl(ds));
  const auto nine = subsample_fewshot(ds, 9, 1);
  CHECK(nine.size(Split::train) == 90);
  CHECK(nine.size(Split::test) == ds.size(Split::test));
  std::set<std::string> prev;
  for (std::size_t n : {150, 80, 30, 9}) {
    std::set<std::string> cur;
    const auto sub = subsample_fewshot(ds, n, 1);
    for (const auto& e : sub.split(Split::train)) cur.insert(e.figure_id);
    if (!prev.empty()) CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    prev = cur;
  }
  CHECK(kind_of([&] { subsample_fewshot(ds, 0, 1); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("validation catches violations") {
  const auto set = testing::synthetic_concepts(10, "type");
  auto ds = build_cls_splits(testing::synthetic_corpus(set, 160), set, {.valid_target = 20, .test_target = 20});
  REQUIRE(validate_dataset(ds, set).ok());
  ds.splits[Split::test].push_back(ds.split(Split::train).front());
  const auto bad = validate_dataset(ds, set);
  CHECK(bad.count("split_overlap") == 1);
  ds.splits[Split::train].push_back({"extra", set[0].id});
  CHECK(validate_dataset(ds, set).count("train_cap_exceeded") == 1);

  auto records = build_vqa(ds, set, {.k_choices = {5}});
  auto it = std::find_if(records.begin(), records.end(), [](const auto& r) { return r.qtype == QuestionType::multiple_choice; });
  REQUIRE(it != records.end());
  std::vector<Concept> others;
  for (const auto& c : set)
    if (c.id != it->gold_concept_id && others.size() < 5) others.push_back(c);
  it->question.options = OptionList(others);
  const auto report = validate_vqa(records, set);
  CHECK(report.count("gold_option") == 1);
  CHECK(report.violations.size() == 1);
}

TEST_CASE("cls jsonl round trip") {
  const auto set = testing::synthetic_concepts(5, "type");
  const auto ds = build_cls_splits(testing::synthetic_corpus(set, 155), set, {.valid_target = 5, .test_target = 5});
  const auto text = cls_to_jsonl(ds);
  std::vector<nlohmann::json> rows;
  std::size_t start = 0;
  for (auto nl = text.find('\n'); nl != std::string::npos; start = nl + 1, nl = text.find('\n', start)) {
    rows.push_back(nlohmann::json::parse(text.substr(start, nl - start)));
  }
  const auto back = cls_from_jsonl(rows);
  CHECK(cls_to_jsonl(back) == text);
  CHECK(rows.front().at("split") == "train");
}
