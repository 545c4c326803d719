#include "figclass/strategies.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include "figclass/concurrency.hpp"
#include "figclass/text.hpp"

namespace figclass {

namespace {

bool is_punct(unsigned char c) { return std::ispunct(c) != 0; }

std::string_view strip_punct(std::string_view s) {
  while (!s.empty() && is_punct(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_punct(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view leading_token(std::string_view s) {
  s = trim(s);
  const auto end = std::find_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
  return s.substr(0, static_cast<std::size_t>(end - s.begin()));
}

std::string clean_answer(std::string_view s) {
  std::string out = normalize_label(s);
  while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
  return out;
}

}  // namespace

BinaryAnswer parse_binary(std::string_view text) {
  const std::string token = to_lower(strip_punct(leading_token(text)));
  if (token == "yes") return BinaryAnswer::affirmative;
  if (token == "no") return BinaryAnswer::negative;
  return BinaryAnswer::unparseable;
}

std::optional<std::size_t> parse_choice(std::string_view text, const OptionList& options) {
  const std::string_view t = trim(text);
  auto in_range = [&](std::optional<int> n) -> std::optional<std::size_t> {
    if (n && *n >= 1 && static_cast<std::size_t>(*n) <= options.size()) return static_cast<std::size_t>(*n - 1);
    return std::nullopt;
  };

  // 1. numeral: "(ii)", "(ii) graph", "ii", "ii)", "ii.". A bare numeral
  //    must stand alone or carry punctuation, so "I think ..." is not (i).
  if (!t.empty() && t.front() == '(') {
    if (const auto close = t.find(')'); close != std::string_view::npos) {
      if (auto idx = in_range(try_parse_roman(t.substr(1, close - 1)))) return idx;
    }
  } else {
    const std::string_view token = leading_token(t);
    const std::string_view bare = strip_punct(token);
    const bool standalone = token.size() == t.size() || bare.size() != token.size();
    if (standalone) {
      if (auto idx = in_range(try_parse_roman(bare))) return idx;
    }
  }

  // 2. exact label
  const std::string answer = clean_answer(t);
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (answer == clean_answer(options[i].label)) return i;
  }

  // 3. exactly one label contained in the answer
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const std::string label = clean_answer(options[i].label);
    if (!label.empty() && answer.find(label) != std::string::npos) {
      if (found) return std::nullopt;
      found = i;
    }
  }
  return found;
}

TournamentPlan plan_tournament(std::size_t num_concepts, std::size_t k) {
  if (k < 2) throw Error(ErrorKind::InvalidK, "subset size k must be at least 2, got " + std::to_string(k));
  if (num_concepts < 1) throw Error(ErrorKind::EmptyConceptSet, "tournament over zero concepts");
  TournamentPlan plan;
  plan.total_concepts = num_concepts;
  plan.subset_max = k;
  // ceil(n / k^r) == ceil(ceil(n / k^(r-1)) / k), so the per-round counts
  // come from repeated ceiling division without forming k^r.
  std::size_t remaining = num_concepts;
  while (remaining > 1) {
    remaining = (remaining + k - 1) / k;
    plan.queries_per_round.push_back(remaining);
    plan.total_queries += remaining;
  }
  plan.rounds = plan.queries_per_round.size();
  return plan;
}

std::string_view to_string(Strategy strategy) noexcept {
  switch (strategy) {
    case Strategy::bc: return "bc";
    case Strategy::oc: return "oc";
    case Strategy::mc: return "mc";
    case Strategy::mc_ts: return "mc-ts";
  }
  return "bc";
}

std::optional<Strategy> parse_strategy(std::string_view text) noexcept {
  if (text == "bc") return Strategy::bc;
  if (text == "oc") return Strategy::oc;
  if (text == "mc") return Strategy::mc;
  if (text == "mc-ts" || text == "mc_ts") return Strategy::mc_ts;
  return std::nullopt;
}

std::string_view to_string(MatchOutcome outcome) noexcept {
  switch (outcome) {
    case MatchOutcome::answered: return "answered";
    case MatchOutcome::walkover: return "walkover";
    case MatchOutcome::fallback: return "fallback";
  }
  return "answered";
}

std::vector<std::string> RoundRecord::winners() const {
  std::vector<std::string> out;
  out.reserve(matches.size());
  for (const auto& m : matches) out.push_back(m.winner);
  return out;
}

std::size_t TournamentTrace::fallback_events() const {
  std::size_t n = 0;
  for (const auto& r : rounds) {
    n += static_cast<std::size_t>(std::count_if(r.matches.begin(), r.matches.end(),
                                                [](const auto& m) { return m.outcome == MatchOutcome::fallback; }));
  }
  return n;
}

std::size_t TournamentTrace::queries() const {
  std::size_t n = 0;
  for (const auto& r : rounds) {
    n += static_cast<std::size_t>(std::count_if(r.matches.begin(), r.matches.end(),
                                                [](const auto& m) { return m.outcome != MatchOutcome::walkover; }));
  }
  return n;
}

nlohmann::json to_json(const TournamentTrace& trace) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : trace.rounds) {
    nlohmann::json matches = nlohmann::json::array();
    for (const auto& m : r.matches) {
      nlohmann::json jm{{"members", m.members}, {"winner", m.winner}, {"outcome", to_string(m.outcome)}};
      if (m.outcome != MatchOutcome::walkover) {
        jm["options"] = m.option_order;
        jm["response"] = m.response;
      }
      matches.push_back(std::move(jm));
    }
    rounds.push_back(nlohmann::json{{"matches", std::move(matches)}});
  }
  return nlohmann::json{{"rounds", std::move(rounds)}};
}

nlohmann::json to_json(const ClassificationResult& result) {
  nlohmann::json j{{"figure_id", result.figure_id},
                   {"aspect", result.aspect},
                   {"strategy", to_string(result.strategy)},
                   {"predicted_id", result.predicted.id},
                   {"predicted_label", result.predicted.label},
                   {"queries_used", result.queries_used},
                   {"fallback_events", result.fallback_events}};
  if (result.score) j["score"] = *result.score;
  if (result.response_text) j["response_text"] = *result.response_text;
  if (result.trace) j["trace"] = to_json(*result.trace);
  return j;
}

ClassificationResult classify_bc(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                 const StrategyOptions& options) {
  if (concepts.empty()) throw Error(ErrorKind::EmptyConceptSet, "classify_bc over an empty set");
  std::vector<ModelResponse> responses(concepts.size());
  parallel_for(concepts.size(), options.max_concurrency, [&](std::size_t i) {
    const auto q = render_binary(concepts.aspect(), concepts[i], *options.templates);
    responses[i] = backend.answer(&figure, q.text, true);
  });

  std::vector<std::size_t> yes, no;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    switch (parse_binary(responses[i])) {
      case BinaryAnswer::affirmative: yes.push_back(i); break;
      case BinaryAnswer::negative: no.push_back(i); break;
      case BinaryAnswer::unparseable: break;
    }
  }

  // Strict comparisons keep the canonical-order candidate on ties.
  auto pick = [&](const std::vector<std::size_t>& candidates, bool prefer_high) -> std::size_t {
    if (candidates.size() == 1) return candidates.front();
    const bool all_scored = std::all_of(candidates.begin(), candidates.end(),
                                        [&](std::size_t i) { return responses[i].has_logprobs(); });
    if (!all_scored) {
      if (options.require_logprobs) {
        throw Error(ErrorKind::LogprobsUnavailable, "backend reported no logprobs for a binary tie-break");
      }
      return candidates.front();
    }
    std::size_t best = candidates.front();
    for (std::size_t i : candidates) {
      const double s = *responses[i].cumulative_logprob;
      const double b = *responses[best].cumulative_logprob;
      if (prefer_high ? s > b : s < b) best = i;
    }
    return best;
  };

  std::size_t chosen;
  if (!yes.empty()) {
    chosen = pick(yes, true);
  } else if (!no.empty()) {
    chosen = pick(no, false);
  } else {
    throw Error(ErrorKind::NoDecision, "no parseable binary answer for figure " + figure.id);
  }

  ClassificationResult result;
  result.figure_id = figure.id;
  result.aspect = concepts.aspect().name;
  result.predicted = concepts[chosen];
  result.strategy = Strategy::bc;
  result.queries_used = concepts.size();
  result.score = responses[chosen].cumulative_logprob;
  return result;
}

ClassificationResult classify_oc(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                 Matcher& matcher, const StrategyOptions& options) {
  if (concepts.empty()) throw Error(ErrorKind::EmptyConceptSet, "classify_oc over an empty set");
  const auto q = render_open(concepts.aspect(), *options.templates);
  const auto response = backend.answer(&figure, q.text, true);
  const std::string_view text = trim(response.text);
  if (text.empty()) throw Error(ErrorKind::NoDecision, "empty open-ended answer for figure " + figure.id);

  const auto match = matcher.nearest_concept(text, concepts);
  ClassificationResult result;
  result.figure_id = figure.id;
  result.aspect = concepts.aspect().name;
  result.predicted = match.matched;
  result.strategy = Strategy::oc;
  result.queries_used = 1;
  result.score = response.cumulative_logprob;
  result.response_text = std::string(text);
  return result;
}

namespace {

ClassificationResult run_tournament(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                    std::size_t k, std::uint64_t rng_seed, const StrategyOptions& options,
                                    Strategy strategy) {
  const std::uint64_t base = mix_seed(rng_seed, fnv1a64(figure.id));
  std::vector<std::size_t> current(concepts.size());
  for (std::size_t i = 0; i < current.size(); ++i) current[i] = i;
  {
    std::mt19937_64 rng(mix_seed(base, 0));
    seeded_shuffle(current, rng);
  }

  TournamentTrace trace;
  std::optional<double> last_score;
  for (std::uint64_t round = 1; current.size() > 1; ++round) {
    const std::size_t subsets = (current.size() + k - 1) / k;
    std::vector<std::optional<MatchRecord>> matches(subsets);
    std::vector<std::size_t> winners(subsets);
    std::vector<std::optional<double>> scores(subsets);

    try {
      parallel_for(subsets, options.max_concurrency, [&](std::size_t s) {
        const auto first = current.begin() + static_cast<std::ptrdiff_t>(s * k);
        const auto last = current.begin() + static_cast<std::ptrdiff_t>(std::min(current.size(), (s + 1) * k));
        std::vector<std::size_t> members(first, last);

        MatchRecord record;
        for (std::size_t m : members) record.members.push_back(concepts[m].id);
        if (members.size() == 1) {
          record.outcome = MatchOutcome::walkover;
          record.winner = concepts[members.front()].id;
          winners[s] = members.front();
          matches[s] = std::move(record);
          return;
        }

        std::vector<std::size_t> shown = members;
        std::mt19937_64 rng(mix_seed(mix_seed(base, round), s));
        seeded_shuffle(shown, rng);
        std::vector<Concept> option_concepts;
        for (std::size_t m : shown) {
          option_concepts.push_back(concepts[m]);
          record.option_order.push_back(concepts[m].id);
        }
        const OptionList option_list(std::move(option_concepts));
        const auto q = render_multiple_choice(concepts.aspect(), option_list, *options.templates);
        const auto response = backend.answer(&figure, q.text, true);
        record.prompt = q.text;
        record.response = response.text;
        if (auto choice = parse_choice(response, option_list)) {
          winners[s] = shown[*choice];
          record.outcome = MatchOutcome::answered;
        } else {
          winners[s] = shown.front();
          record.outcome = MatchOutcome::fallback;
        }
        record.winner = concepts[winners[s]].id;
        scores[s] = response.cumulative_logprob;
        matches[s] = std::move(record);
      });
    } catch (const Error& e) {
      RoundRecord partial;
      for (auto& m : matches) {
        if (m) partial.matches.push_back(std::move(*m));
      }
      trace.rounds.push_back(std::move(partial));
      throw TournamentError(e.kind(), e.what(), std::move(trace));
    }

    RoundRecord record;
    for (auto& m : matches) record.matches.push_back(std::move(*m));
    trace.rounds.push_back(std::move(record));
    if (subsets == 1) last_score = scores.front();
    current = std::move(winners);
  }

  ClassificationResult result;
  result.figure_id = figure.id;
  result.aspect = concepts.aspect().name;
  result.predicted = concepts[current.front()];
  result.strategy = strategy;
  result.queries_used = trace.queries();
  result.score = last_score;
  result.fallback_events = trace.fallback_events();
  result.trace = std::move(trace);
  return result;
}

}  // namespace

ClassificationResult classify_mc_ts(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                    std::size_t k, std::uint64_t rng_seed, const StrategyOptions& options) {
  if (k < 2) throw Error(ErrorKind::InvalidK, "subset size k must be at least 2, got " + std::to_string(k));
  if (concepts.empty()) throw Error(ErrorKind::EmptyConceptSet, "classify_mc_ts over an empty set");
  return run_tournament(figure, concepts, backend, k, rng_seed, options, Strategy::mc_ts);
}

ClassificationResult classify_mc_single(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                        std::uint64_t rng_seed, const StrategyOptions& options) {
  if (concepts.size() < 2) throw Error(ErrorKind::InvalidOptions, "a choice needs at least two concepts");
  if (concepts.size() > options.context_cap) {
    throw Error(ErrorKind::ContextCapExceeded, std::to_string(concepts.size()) + " concepts exceed the cap of " +
                                                   std::to_string(options.context_cap));
  }
  return run_tournament(figure, concepts, backend, concepts.size(), rng_seed, options, Strategy::mc);
}

}  // namespace figclass
