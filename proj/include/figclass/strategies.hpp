#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "figclass/backend.hpp"
#include "figclass/error.hpp"
#include "figclass/matching.hpp"
#include "figclass/prompts.hpp"
#include "figclass/taxonomy.hpp"

namespace figclass {

enum class BinaryAnswer { affirmative, negative, unparseable };

BinaryAnswer parse_binary(std::string_view text);
inline BinaryAnswer parse_binary(const ModelResponse& response) { return parse_binary(response.text); }

/// Index of the chosen option. Ladder: leading bracketed or bare roman
/// numeral, then exact case-insensitive label, then containment of exactly
/// one label; otherwise nullopt.
std::optional<std::size_t> parse_choice(std::string_view text, const OptionList& options);
inline std::optional<std::size_t> parse_choice(const ModelResponse& response, const OptionList& options) {
  return parse_choice(response.text, options);
}

/// Rounds and per-round query counts of a tournament over `total_concepts`
/// with subsets of at most `subset_max`. rounds = ceil(log_k n) and round r
/// poses ceil(n / k^r) questions; computed in integer arithmetic.
struct TournamentPlan {
  std::size_t total_concepts = 0;
  std::size_t subset_max = 0;
  std::size_t rounds = 0;
  std::vector<std::size_t> queries_per_round;
  std::size_t total_queries = 0;
};

TournamentPlan plan_tournament(std::size_t num_concepts, std::size_t k);

enum class Strategy { bc, oc, mc, mc_ts };

std::string_view to_string(Strategy strategy) noexcept;
/// Accepts "bc", "oc", "mc", "mc-ts" and "mc_ts".
std::optional<Strategy> parse_strategy(std::string_view text) noexcept;

enum class MatchOutcome { answered, walkover, fallback };

std::string_view to_string(MatchOutcome outcome) noexcept;

/// One subset of one tournament round.
struct MatchRecord {
  std::vector<std::string> members;       // concept ids, subset order
  std::vector<std::string> option_order;  // as shown in the question
  std::string prompt;
  std::string response;
  std::string winner;
  MatchOutcome outcome = MatchOutcome::answered;
};

struct RoundRecord {
  std::vector<MatchRecord> matches;

  std::vector<std::string> winners() const;
};

struct TournamentTrace {
  std::vector<RoundRecord> rounds;

  std::size_t fallback_events() const;
  std::size_t queries() const;
};

nlohmann::json to_json(const TournamentTrace& trace);

struct ClassificationResult {
  std::string figure_id;
  std::string aspect;
  Concept predicted;
  Strategy strategy = Strategy::bc;
  std::size_t queries_used = 0;
  std::optional<double> score;
  std::size_t fallback_events = 0;
  std::optional<std::string> response_text;  // oc
  std::optional<TournamentTrace> trace;      // mc, mc_ts
};

nlohmann::json to_json(const ClassificationResult& result);

/// A tournament aborted by a backend failure; carries the rounds completed
/// so far (the failing round is included with the matches that finished).
class TournamentError : public Error {
 public:
  TournamentError(ErrorKind kind, const std::string& message, TournamentTrace partial)
      : Error(kind, message), partial_trace_(std::move(partial)) {}

  const TournamentTrace& partial_trace() const noexcept { return partial_trace_; }

 private:
  TournamentTrace partial_trace_;
};

inline constexpr std::size_t kDefaultContextCap = 100;

struct StrategyOptions {
  const TemplateSet* templates = &default_templates();
  /// Independent queries (BC questions, subsets of one round) run on up to
  /// this many threads; results are assembled by index.
  std::size_t max_concurrency = 1;
  /// BC: fail with LogprobsUnavailable instead of degrading to the first
  /// affirmative when the backend reports no likelihoods.
  bool require_logprobs = false;
  std::size_t context_cap = kDefaultContextCap;
};

/// One yes/no question per concept. Highest-logprob affirmative wins; with no
/// affirmative, the negative with the lowest logprob wins.
ClassificationResult classify_bc(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                 const StrategyOptions& options = {});

/// One open-ended question, mapped to the nearest concept by embedding.
ClassificationResult classify_oc(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                 Matcher& matcher, const StrategyOptions& options = {});

/// Tournament of multiple-choice questions over subsets of at most k.
ClassificationResult classify_mc_ts(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                    std::size_t k, std::uint64_t rng_seed, const StrategyOptions& options = {});

/// A single multiple-choice question listing every concept.
ClassificationResult classify_mc_single(const Figure& figure, const ConceptSet& concepts, Backend& backend,
                                        std::uint64_t rng_seed = 0, const StrategyOptions& options = {});

}  // namespace figclass
