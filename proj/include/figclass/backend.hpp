#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "figclass/figure.hpp"
#include "figclass/prompts.hpp"
#include "figclass/taxonomy.hpp"

namespace figclass {

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

/// What the model said. `cumulative_logprob` is absent when the backend
/// cannot report likelihoods.
struct ModelResponse {
  std::string text;
  std::vector<TokenLogprob> token_logprobs;
  std::optional<double> cumulative_logprob;

  bool has_logprobs() const noexcept { return cumulative_logprob.has_value(); }
};

/// Single-token response carrying the given cumulative logprob.
ModelResponse make_response(std::string text, std::optional<double> cumulative_logprob = 0.0);

// Wire form: {"text", "token_logprobs": [[token, logprob], ...], "cumulative_logprob"}
nlohmann::json to_json(const ModelResponse& response);
/// Throws ProtocolError on a malformed body or broken logprob invariants.
ModelResponse response_from_json(const nlohmann::json& j);

inline constexpr const char* kBackendUrlEnv = "FIGCLASS_BACKEND_URL";

struct BackendConfig {
  std::string base_url;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::size_t max_in_flight = 8;
  std::chrono::milliseconds backoff_base{100};

  /// base_url from FIGCLASS_BACKEND_URL when set.
  static BackendConfig from_env();
  void validate() const;
};

/// The model behind the classifier. Implementations must be safe to call
/// from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  ModelResponse answer(const Figure* figure, std::string_view prompt, bool want_logprobs = true);
  std::vector<Embedding> embed(const std::vector<std::string>& texts);

  virtual std::string id() const = 0;

  std::size_t answer_calls() const noexcept { return answer_calls_.load(); }
  std::size_t embed_calls() const noexcept { return embed_calls_.load(); }

 protected:
  virtual ModelResponse do_answer(const Figure* figure, std::string_view prompt, bool want_logprobs) = 0;
  virtual std::vector<Embedding> do_embed(const std::vector<std::string>& texts);

 private:
  std::atomic<std::size_t> answer_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
};

/// Canned replies keyed by (figure id, prompt), falling back to prompt-only
/// keys, then a responder callback, then a default reply. A miss is a
/// ProtocolError, like an unknown fingerprint on a scripted server.
class ScriptedBackend : public Backend {
 public:
  using Responder = std::function<std::optional<ModelResponse>(const Figure*, std::string_view)>;

  ScriptedBackend() = default;
  explicit ScriptedBackend(Responder responder) : responder_(std::move(responder)) {}

  /// {"default"?: response, "entries": [{"prompt", "figure_id"?, "response"}]}
  static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& j);

  void add(std::string prompt, ModelResponse response);
  void add(std::string figure_id, std::string prompt, ModelResponse response);
  void set_default(ModelResponse response) { default_ = std::move(response); }

  std::string id() const override { return "scripted"; }

 protected:
  ModelResponse do_answer(const Figure* figure, std::string_view prompt, bool want_logprobs) override;

 private:
  std::map<std::pair<std::string, std::string>, ModelResponse, std::less<>> entries_;
  Responder responder_;
  std::optional<ModelResponse> default_;
};

inline constexpr std::size_t kHashEmbeddingDim = 64;

/// Deterministic embedding: SplitMix64 seeded with seed ^ fnv1a64(text),
/// `dim` draws mapped to [-1, 1), then L2-normalized.
Embedding hash_embedding(std::string_view text, std::uint64_t seed = 0, std::size_t dim = kHashEmbeddingDim);

class HashEmbeddingBackend : public Backend {
 public:
  explicit HashEmbeddingBackend(std::uint64_t seed = 0, std::size_t dim = kHashEmbeddingDim)
      : seed_(seed), dim_(dim) {}

  std::string id() const override;

 protected:
  ModelResponse do_answer(const Figure* figure, std::string_view prompt, bool want_logprobs) override;
  std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

/// (figure id, aspect) -> true concept.
using OracleTruth = std::map<std::pair<std::string, std::string>, Concept>;

/// Builds oracle truth from figures' ground truth, resolving ids in `concepts`.
OracleTruth truth_from_figures(std::span<const Figure> figures, const ConceptSet& concepts);

/// Simulated model that answers from ground truth, corrupted at `error_rate`.
///
/// Each query draws from SplitMix64(mix_seed(seed, fnv1a64(figure_id + '\x1f' + prompt) + occurrence)),
/// where occurrence counts earlier identical (figure, prompt) queries, so
/// decisions do not depend on the order in which concurrent queries arrive.
///  - binary: "Yes" iff the asked concept is the truth, flipped when the first
///    draw is below error_rate.
///  - multiple choice: the truth's numeral when listed, replaced by a uniform
///    wrong option when the first draw is below error_rate; a uniform option
///    when the truth is not listed.
///  - open-ended: the true label.
/// Truthful replies carry logprob log(1 - error_rate), corrupted ones
/// log(error_rate), floored at -1000.
class OracleBackend : public Backend {
 public:
  OracleBackend(OracleTruth truth, double error_rate, std::uint64_t seed,
                const TemplateSet& templates = default_templates());

  std::string id() const override { return "oracle"; }

 protected:
  ModelResponse do_answer(const Figure* figure, std::string_view prompt, bool want_logprobs) override;

 private:
  std::uint64_t draw_seed(std::string_view figure_id, std::string_view prompt);

  std::map<std::string, std::vector<std::pair<std::string, Concept>>> truth_by_figure_;
  double error_rate_;
  std::uint64_t seed_;
  const TemplateSet& templates_;
  std::mutex mutex_;
  std::map<std::uint64_t, std::uint64_t> occurrences_;
};

std::unique_ptr<Backend> make_oracle_backend(OracleTruth truth, double error_rate, std::uint64_t rng_seed,
                                             const TemplateSet& templates = default_templates());

}  // namespace figclass
