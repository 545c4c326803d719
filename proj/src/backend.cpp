#include "figclass/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "figclass/error.hpp"
#include "figclass/text.hpp"

namespace figclass {

ModelResponse make_response(std::string text, std::optional<double> cumulative_logprob) {
  ModelResponse r;
  r.text = std::move(text);
  if (cumulative_logprob) {
    r.token_logprobs.push_back(TokenLogprob{r.text, *cumulative_logprob});
    r.cumulative_logprob = cumulative_logprob;
  }
  return r;
}

nlohmann::json to_json(const ModelResponse& response) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : response.token_logprobs) tokens.push_back(nlohmann::json::array({t.token, t.logprob}));
  nlohmann::json j{{"text", response.text}, {"token_logprobs", tokens}};
  if (response.cumulative_logprob) j["cumulative_logprob"] = *response.cumulative_logprob;
  return j;
}

ModelResponse response_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw Error(ErrorKind::ProtocolError, "response lacks string field \"text\"");
  }
  ModelResponse r;
  r.text = j["text"].get<std::string>();
  if (j.contains("token_logprobs")) {
    if (!j["token_logprobs"].is_array()) throw Error(ErrorKind::ProtocolError, "\"token_logprobs\" must be an array");
    for (const auto& pair : j["token_logprobs"]) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_number()) {
        throw Error(ErrorKind::ProtocolError, "\"token_logprobs\" entries must be [token, logprob]");
      }
      const double lp = pair[1].get<double>();
      if (lp > 0.0) throw Error(ErrorKind::ProtocolError, "positive token logprob");
      r.token_logprobs.push_back(TokenLogprob{pair[0].get<std::string>(), lp});
    }
  }
  if (j.contains("cumulative_logprob") && !j["cumulative_logprob"].is_null()) {
    if (!j["cumulative_logprob"].is_number()) {
      throw Error(ErrorKind::ProtocolError, "\"cumulative_logprob\" must be a number");
    }
    const double cumulative = j["cumulative_logprob"].get<double>();
    if (cumulative > 0.0) throw Error(ErrorKind::ProtocolError, "positive cumulative logprob");
    if (!r.token_logprobs.empty()) {
      double sum = 0.0;
      for (const auto& t : r.token_logprobs) sum += t.logprob;
      if (std::abs(sum - cumulative) > 1e-9 * std::max(1.0, std::abs(cumulative))) {
        throw Error(ErrorKind::ProtocolError, "cumulative_logprob disagrees with token_logprobs");
      }
    }
    r.cumulative_logprob = cumulative;
  }
  return r;
}

BackendConfig BackendConfig::from_env() {
  BackendConfig config;
  if (const char* url = std::getenv(kBackendUrlEnv)) config.base_url = url;
  return config;
}

void BackendConfig::validate() const {
  if (max_in_flight < 1) throw Error(ErrorKind::InvalidConfig, "max_in_flight must be >= 1");
  if (max_retries < 0) throw Error(ErrorKind::InvalidConfig, "max_retries must be >= 0");
}

ModelResponse Backend::answer(const Figure* figure, std::string_view prompt, bool want_logprobs) {
  if (trim(prompt).empty()) throw Error(ErrorKind::InvalidRequest, "empty prompt");
  answer_calls_.fetch_add(1);
  return do_answer(figure, prompt, want_logprobs);
}

std::vector<Embedding> Backend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorKind::InvalidRequest, "embed needs at least one text");
  embed_calls_.fetch_add(1);
  auto vectors = do_embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorKind::ProtocolError, "embed returned " + std::to_string(vectors.size()) + " vectors for " +
                                              std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) throw Error(ErrorKind::ProtocolError, "embed vectors differ in dimension");
  }
  return vectors;
}

std::vector<Embedding> Backend::do_embed(const std::vector<std::string>&) {
  throw Error(ErrorKind::InvalidRequest, "backend '" + id() + "' does not embed");
}

// --- scripted ---------------------------------------------------------------

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& j) {
  auto backend = std::make_unique<ScriptedBackend>();
  if (j.contains("default")) backend->set_default(response_from_json(j["default"]));
  if (j.contains("entries")) {
    for (const auto& e : j["entries"]) {
      backend->add(e.value("figure_id", std::string{}), e.at("prompt").get<std::string>(),
                   response_from_json(e.at("response")));
    }
  }
  return backend;
}

void ScriptedBackend::add(std::string prompt, ModelResponse response) {
  entries_[{std::string{}, std::move(prompt)}] = std::move(response);
}

void ScriptedBackend::add(std::string figure_id, std::string prompt, ModelResponse response) {
  entries_[{std::move(figure_id), std::move(prompt)}] = std::move(response);
}

ModelResponse ScriptedBackend::do_answer(const Figure* figure, std::string_view prompt, bool) {
  const std::string p(prompt);
  if (figure) {
    if (auto it = entries_.find(std::pair{figure->id, p}); it != entries_.end()) return it->second;
  }
  if (auto it = entries_.find(std::pair{std::string{}, p}); it != entries_.end()) return it->second;
  if (responder_) {
    if (auto r = responder_(figure, prompt)) return *r;
  }
  if (default_) return *default_;
  throw Error(ErrorKind::ProtocolError, "no scripted reply for prompt: " + p);
}

// --- hash embedding ---------------------------------------------------------

Embedding hash_embedding(std::string_view text, std::uint64_t seed, std::size_t dim) {
  SplitMix64 rng(seed ^ fnv1a64(text));
  Embedding v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = 2.0 * rng.next_unit() - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::string HashEmbeddingBackend::id() const {
  return "hash-" + std::to_string(dim_) + "-" + std::to_string(seed_);
}

ModelResponse HashEmbeddingBackend::do_answer(const Figure*, std::string_view, bool) {
  throw Error(ErrorKind::InvalidRequest, "hash-embedding backend only embeds");
}

std::vector<Embedding> HashEmbeddingBackend::do_embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embedding(t, seed_, dim_));
  return out;
}

// --- oracle -----------------------------------------------------------------

OracleTruth truth_from_figures(std::span<const Figure> figures, const ConceptSet& concepts) {
  OracleTruth truth;
  for (const auto& f : figures) {
    if (const auto* id = f.truth_for(concepts.aspect().name)) {
      if (const auto* c = concepts.find(*id)) truth[{f.id, concepts.aspect().name}] = *c;
    }
  }
  return truth;
}

OracleBackend::OracleBackend(OracleTruth truth, double error_rate, std::uint64_t seed, const TemplateSet& templates)
    : error_rate_(error_rate), seed_(seed), templates_(templates) {
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "error_rate must lie in [0, 1]");
  }
  for (auto& [key, c] : truth) truth_by_figure_[key.first].emplace_back(key.second, std::move(c));
}

std::uint64_t OracleBackend::draw_seed(std::string_view figure_id, std::string_view prompt) {
  std::string key(figure_id);
  key.push_back('\x1f');
  key.append(prompt);
  const std::uint64_t h = fnv1a64(key);
  std::uint64_t occurrence;
  {
    std::lock_guard lock(mutex_);
    occurrence = occurrences_[h]++;
  }
  return mix_seed(seed_, h + occurrence);
}

ModelResponse OracleBackend::do_answer(const Figure* figure, std::string_view prompt, bool) {
  auto logp = [](double p) { return std::max(std::log(p), -1000.0); };
  const std::string figure_id = figure ? figure->id : std::string{};
  SplitMix64 rng(draw_seed(figure_id, prompt));
  const auto it = truth_by_figure_.find(figure_id);
  const auto type = classify_prompt(prompt, templates_);
  if (!type || it == truth_by_figure_.end()) return make_response("unknown", logp(0.5));

  switch (*type) {
    case QuestionType::binary: {
      bool truthful_yes = false;
      for (const auto& [aspect, truth] : it->second) {
        if (templates_.body(aspect, QuestionType::binary) &&
            render_binary(Aspect{aspect, {}}, truth, templates_).text == prompt) {
          truthful_yes = true;
        }
      }
      const bool flip = rng.next_unit() < error_rate_;
      const bool yes = truthful_yes != flip;
      return make_response(yes ? "Yes" : "No", flip ? logp(error_rate_) : logp(1.0 - error_rate_));
    }
    case QuestionType::multiple_choice: {
      for (const auto& [aspect, truth] : it->second) {
        const auto labels = extract_options(prompt, aspect, templates_);
        if (!labels) continue;
        const auto n = labels->size();
        const auto pos = std::find(labels->begin(), labels->end(), truth.label);
        if (pos == labels->end()) {
          const std::size_t pick = rng.next_index(n);
          return make_response("(" + to_roman(static_cast<int>(pick) + 1) + ")", -std::log(static_cast<double>(n)));
        }
        const auto truth_index = static_cast<std::size_t>(pos - labels->begin());
        if (n > 1 && rng.next_unit() < error_rate_) {
          std::size_t wrong = rng.next_index(n - 1);
          if (wrong >= truth_index) ++wrong;
          return make_response("(" + to_roman(static_cast<int>(wrong) + 1) + ")", logp(error_rate_));
        }
        return make_response("(" + to_roman(static_cast<int>(truth_index) + 1) + ")", logp(1.0 - error_rate_));
      }
      return make_response("unknown", logp(0.5));
    }
    case QuestionType::open_ended: {
      for (const auto& [aspect, truth] : it->second) {
        if (templates_.body(aspect, QuestionType::open_ended) &&
            render_open(Aspect{aspect, {}}, templates_).text == prompt) {
          return make_response(truth.label, logp(1.0 - error_rate_));
        }
      }
      return make_response("unknown", logp(0.5));
    }
  }
  return make_response("unknown", logp(0.5));
}

std::unique_ptr<Backend> make_oracle_backend(OracleTruth truth, double error_rate, std::uint64_t rng_seed,
                                             const TemplateSet& templates) {
  return std::make_unique<OracleBackend>(std::move(truth), error_rate, rng_seed, templates);
}

}  // namespace figclass
