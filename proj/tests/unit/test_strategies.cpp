#include <doctest.h>

#include <cmath>
#include <set>

#include "figclass/backend.hpp"
#include "figclass/error.hpp"
#include "figclass/strategies.hpp"
#include "figclass/text.hpp"
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

OptionList drawing_graph() {
  return OptionList({Concept{"drawing", "drawing", "type"}, Concept{"graph", "graph", "type"}});
}

// Scripted binary replies per concept label.
std::unique_ptr<ScriptedBackend> binary_script(const ConceptSet& set, const std::vector<ModelResponse>& replies) {
  auto b = std::make_unique<ScriptedBackend>();
  for (std::size_t i = 0; i < set.size(); ++i) b->add(render_binary(set.aspect(), set[i]).text, replies[i]);
  return b;
}

ConceptSet c123() {
  return ConceptSet(Aspect{"type", ""}, {{"c1", "alpha", "type"}, {"c2", "beta", "type"}, {"c3", "gamma", "type"}});
}

}  // namespace

TEST_CASE("parse_binary") {
  CHECK(parse_binary("Yes") == BinaryAnswer::affirmative);
  CHECK(parse_binary("no.") == BinaryAnswer::negative);
  CHECK(parse_binary("  YES, it is") == BinaryAnswer::affirmative);
  CHECK(parse_binary("The figure is a drawing") == BinaryAnswer::unparseable);
  CHECK(parse_binary("") == BinaryAnswer::unparseable);
  CHECK(parse_binary("nope") == BinaryAnswer::unparseable);
}

TEST_CASE("parse_choice ladder") {
  const auto o = drawing_graph();
  CHECK(parse_choice("(ii)", o) == 1u);
  CHECK(parse_choice("graph", o) == 1u);
  CHECK(parse_choice("could be several", o) == std::nullopt);
  CHECK(parse_choice("(iii)", o) == std::nullopt);
  CHECK(parse_choice("I think it is a graph", o) == 1u);
  CHECK(parse_choice("a drawing or a graph", o) == std::nullopt);
}

TEST_CASE("plan_tournament spot values") {
  auto p = plan_tournament(1447, 5);
  CHECK(p.rounds == 5);
  CHECK(p.queries_per_round == std::vector<std::size_t>{290, 58, 12, 3, 1});
  CHECK(p.total_queries == 364);
  p = plan_tournament(32, 10);
  CHECK(p.rounds == 2);
  CHECK(p.queries_per_round == std::vector<std::size_t>{4, 1});
  CHECK(p.total_queries == 5);
  p = plan_tournament(1, 5);
  CHECK(p.rounds == 0);
  CHECK(p.total_queries == 0);
  CHECK(plan_tournament(7, 5).total_queries == 3);
  CHECK(kind_of([] { plan_tournament(10, 1); }) == ErrorKind::InvalidK);
  CHECK(kind_of([] { plan_tournament(0, 5); }) == ErrorKind::EmptyConceptSet);
}

TEST_CASE("strategy names") {
  CHECK(to_string(Strategy::mc_ts) == "mc-ts");
  CHECK(parse_strategy("mc_ts") == Strategy::mc_ts);
  CHECK(parse_strategy("mc-ts") == Strategy::mc_ts);
  CHECK(parse_strategy("bc") == Strategy::bc);
  CHECK(parse_strategy("xx") == std::nullopt);
}

TEST_CASE("bc picks the highest-logprob affirmative") {
  const auto set = c123();
  auto b = binary_script(set, {make_response("No", -0.1), make_response("Yes", -0.2), make_response("Yes", -0.9)});
  Figure f{"f", {}, {}, {}};
  const auto r = classify_bc(f, set, *b);
  CHECK(r.predicted.id == "c2");
  CHECK(r.queries_used == 3);
  CHECK(b->answer_calls() == 3);
  CHECK(*r.score == doctest::Approx(-0.2));
}

TEST_CASE("bc with no affirmative takes the least-confident negative") {
  const auto set = c123();
  auto b = binary_script(set, {make_response("No", -0.1), make_response("No", -0.9), make_response("No", -0.3)});
  Figure f{"f", {}, {}, {}};
  CHECK(classify_bc(f, set, *b).predicted.id == "c2");
}

TEST_CASE("bc selection is invariant to a constant logprob shift") {
  const auto set = testing::synthetic_concepts(12, "type");
  Figure f{"f", {}, {}, {}};
  for (double shift : {0.0, -3.0, -50.0}) {
    std::vector<ModelResponse> replies;
    for (std::size_t i = 0; i < set.size(); ++i) {
      replies.push_back(make_response(i % 3 == 0 ? "Yes" : "No", -0.01 * double((i * 7 + 5) % 12) + shift));
    }
    auto b = binary_script(set, replies);
    CHECK(classify_bc(f, set, *b).predicted.id == set[3].id);
  }
}

TEST_CASE("bc without logprobs degrades or refuses") {
  const auto set = c123();
  auto b = binary_script(set, {make_response("No", std::nullopt), make_response("Yes", std::nullopt),
                               make_response("Yes", std::nullopt)});
  Figure f{"f", {}, {}, {}};
  CHECK(classify_bc(f, set, *b).predicted.id == "c2");
  StrategyOptions strict;
  strict.require_logprobs = true;
  CHECK(kind_of([&] { classify_bc(f, set, *b, strict); }) == ErrorKind::LogprobsUnavailable);

  auto junk = binary_script(set, {make_response("maybe"), make_response("dunno"), make_response("?")});
  CHECK(kind_of([&] { classify_bc(f, set, *junk); }) == ErrorKind::NoDecision);
}

TEST_CASE("bc with a perfect oracle, sequential and concurrent") {
  const auto set = testing::synthetic_concepts(40, "type");
  const auto figs = testing::synthetic_figures(set, 20);
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.0, 3);
  StrategyOptions par;
  par.max_concurrency = 8;
  for (const auto& f : figs) {
    const auto r = classify_bc(f, set, *oracle);
    CHECK(r.predicted.id == *f.truth_for("type"));
    CHECK(r.queries_used == set.size());
    CHECK(classify_bc(f, set, *oracle, par).predicted.id == r.predicted.id);
  }
}

TEST_CASE("oc maps the answer to the nearest concept") {
  const auto set = ConceptSet(Aspect{"object", ""}, {{"chair", "chair", "object"}, {"table", "table", "object"},
                                                     {"chainsaw", "chainsaw", "object"}});
  HashEmbeddingBackend emb(4);
  Matcher matcher(emb);
  ScriptedBackend b;
  Figure f{"f", {}, {}, {}};
  const auto q = render_open(set.aspect()).text;

  b.add("f", q, make_response("chainsaw", -0.3));
  auto r = classify_oc(f, set, b, matcher);
  CHECK(r.predicted.id == "chainsaw");
  CHECK(r.queries_used == 1);
  CHECK(*r.response_text == "chainsaw");

  b.add("f", q, make_response("office chair"));
  r = classify_oc(f, set, b, matcher);
  const auto qv = hash_embedding("office chair", 4);
  std::string best;
  double best_s = -2;
  for (const auto& c : set) {
    const auto cv = hash_embedding(c.label, 4);
    double d = 0;
    for (std::size_t i = 0; i < qv.size(); ++i) d += qv[i] * cv[i];
    if (d > best_s) {
      best_s = d;
      best = c.id;
    }
  }
  CHECK(r.predicted.id == best);

  b.add("f", q, make_response("   "));
  CHECK(kind_of([&] { classify_oc(f, set, b, matcher); }) == ErrorKind::NoDecision);
}

TEST_CASE("mc-ts with a perfect oracle") {
  const auto set = testing::synthetic_concepts(1447);
  const auto figs = testing::synthetic_figures(set, 3);
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.0, 1);
  for (const auto& f : figs) {
    const auto r = classify_mc_ts(f, set, *oracle, 5, 7);
    CHECK(r.predicted.id == *f.truth_for("object"));
    CHECK(r.queries_used == 364);
    REQUIRE(r.trace);
    CHECK(r.trace->rounds.size() == 5);
    CHECK(r.fallback_events == 0);
  }
}

TEST_CASE("mc-ts bracket shape for 7 concepts, k=5") {
  const auto set = testing::synthetic_concepts(7);
  const auto figs = testing::synthetic_figures(set, 1);
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.0, 1);
  const auto r = classify_mc_ts(figs[0], set, *oracle, 5, 11);
  REQUIRE(r.trace);
  const auto& t = *r.trace;
  REQUIRE(t.rounds.size() == 2);
  REQUIRE(t.rounds[0].matches.size() == 2);
  CHECK(t.rounds[0].matches[0].members.size() == 5);
  CHECK(t.rounds[0].matches[1].members.size() == 2);
  REQUIRE(t.rounds[1].matches.size() == 1);
  CHECK(t.rounds[1].matches[0].members == t.rounds[0].winners());
  CHECK(r.queries_used == 3);
  CHECK(oracle->answer_calls() == 3);
}

TEST_CASE("mc-ts walkovers skip the query") {
  // 6 concepts, k=5: round 1 = {5, 1}; the singleton advances unasked
  const auto set = testing::synthetic_concepts(6);
  const auto figs = testing::synthetic_figures(set, 1);
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.0, 1);
  const auto r = classify_mc_ts(figs[0], set, *oracle, 5, 2);
  const auto& m = r.trace->rounds[0].matches[1];
  CHECK(m.outcome == MatchOutcome::walkover);
  CHECK(m.prompt.empty());
  CHECK(r.queries_used == 2);
  CHECK(r.queries_used < plan_tournament(6, 5).total_queries);
  CHECK(oracle->answer_calls() == 2);
  CHECK(r.predicted.id == *figs[0].truth_for("object"));
}

TEST_CASE("mc-ts edge sizes") {
  const auto two = testing::synthetic_concepts(2);
  const auto figs = testing::synthetic_figures(two, 1);
  auto oracle = make_oracle_backend(truth_from_figures(figs, two), 0.0, 1);
  CHECK(classify_mc_ts(figs[0], two, *oracle, 5, 0).queries_used == 1);
  const auto one = testing::synthetic_concepts(1);
  ScriptedBackend none;
  const auto r = classify_mc_ts(figs[0], one, none, 5, 0);
  CHECK(r.queries_used == 0);
  CHECK(r.predicted == one[0]);
  CHECK(kind_of([&] { classify_mc_ts(figs[0], two, *oracle, 1, 0); }) == ErrorKind::InvalidK);
}

TEST_CASE("mc-ts unparseable answers fall back to the first option shown") {
  const auto set = testing::synthetic_concepts(9);
  ScriptedBackend b;
  b.set_default(make_response("no idea"));
  Figure f{"f", {}, {}, {}};
  const auto r = classify_mc_ts(f, set, b, 3, 5);
  CHECK(r.fallback_events == 4);
  CHECK(r.queries_used == 4);
  for (const auto& round : r.trace->rounds) {
    for (const auto& m : round.matches) {
      CHECK(m.outcome == MatchOutcome::fallback);
      CHECK(m.winner == m.option_order.front());
    }
  }
}

TEST_CASE("mc-ts is seed deterministic regardless of concurrency") {
  const auto set = testing::synthetic_concepts(200);
  const auto figs = testing::synthetic_figures(set, 5);
  auto truth = truth_from_figures(figs, set);
  StrategyOptions par;
  par.max_concurrency = 8;
  for (const auto& f : figs) {
    auto a = make_oracle_backend(truth, 0.3, 4);
    auto b = make_oracle_backend(truth, 0.3, 4);
    const auto ra = classify_mc_ts(f, set, *a, 10, 21);
    const auto rb = classify_mc_ts(f, set, *b, 10, 21, par);
    CHECK(to_json(ra).dump() == to_json(rb).dump());
  }
  auto c = make_oracle_backend(truth, 0.0, 4);
  const auto s1 = classify_mc_ts(figs[0], set, *c, 10, 1);
  const auto s2 = classify_mc_ts(figs[0], set, *c, 10, 2);
  CHECK(s1.trace->rounds[0].matches[0].members != s2.trace->rounds[0].matches[0].members);
}

TEST_CASE("mc-ts surfaces backend failure with a partial trace") {
  const auto set = testing::synthetic_concepts(30);
  std::atomic<int> calls{0};
  ScriptedBackend b([&](const Figure*, std::string_view) -> std::optional<ModelResponse> {
    if (++calls > 7) throw Error(ErrorKind::BackendUnavailable, "gone");
    return make_response("(i)");
  });
  Figure f{"f", {}, {}, {}};
  try {
    classify_mc_ts(f, set, b, 3, 0);
    FAIL("expected TournamentError");
  } catch (const TournamentError& e) {
    CHECK(e.kind() == ErrorKind::BackendUnavailable);
    REQUIRE(e.partial_trace().rounds.size() == 1);
    CHECK(e.partial_trace().rounds[0].matches.size() == 7);
  }
}

TEST_CASE("mc single question") {
  const auto set = testing::synthetic_concepts(10);
  const auto figs = testing::synthetic_figures(set, 10);
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.0, 1);
  for (const auto& f : figs) {
    const auto r = classify_mc_single(f, set, *oracle);
    CHECK(r.predicted.id == *f.truth_for("object"));
    CHECK(r.queries_used == 1);
    CHECK(r.strategy == Strategy::mc);
  }
  const auto big = testing::synthetic_concepts(5000);
  CHECK(kind_of([&] { classify_mc_single(figs[0], big, *oracle); }) == ErrorKind::ContextCapExceeded);
  const auto one = testing::synthetic_concepts(1);
  CHECK(kind_of([&] { classify_mc_single(figs[0], one, *oracle); }) == ErrorKind::InvalidOptions);

  const auto two = testing::synthetic_concepts(2);
  const auto f2 = testing::synthetic_figures(two, 4);
  auto o2 = make_oracle_backend(truth_from_figures(f2, two), 0.0, 1);
  for (const auto& f : f2) {
    CHECK(classify_mc_single(f, two, *o2, 3).predicted == classify_mc_ts(f, two, *o2, 2, 3).predicted);
  }
}

TEST_CASE("result and trace JSON") {
  const auto set = testing::synthetic_concepts(6);
  const auto figs = testing::synthetic_figures(set, 1);
  auto oracle = make_oracle_backend(truth_from_figures(figs, set), 0.0, 1);
  const auto j = to_json(classify_mc_ts(figs[0], set, *oracle, 5, 2));
  CHECK(j.at("strategy") == "mc-ts");
  CHECK(j.at("queries_used") == 2);
  CHECK(j.at("predicted_id") == *figs[0].truth_for("object"));
  const auto& m0 = j.at("trace").at("rounds")[0].at("matches");
  CHECK(m0[0].contains("options"));
  CHECK(m0[1].at("outcome") == "walkover");
  CHECK_FALSE(m0[1].contains("options"));
}
