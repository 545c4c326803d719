#pragma once

#include <atomic>
#include <memory>
#include <semaphore>
#include <string>

#include <nlohmann/json.hpp>

#include "figclass/backend.hpp"

namespace figclass {

/// Base64 of the figure's image, reading files for path and file:// URIs.
/// Returns an empty string for figures without an image.
std::string resolve_image_b64(const Figure& figure);

/// JSON-over-HTTP client for the model server:
///   POST /v1/answer {image_b64?, prompt, want_logprobs} -> {text, token_logprobs, cumulative_logprob}
///   POST /v1/embed  {texts}                             -> {vectors}
///   POST /v1/health                                      -> {status}
/// Transport failures and 5xx replies are retried with exponential backoff;
/// 4xx replies fail at once. At most max_in_flight requests are outstanding.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  ~HttpBackend() override;

  std::string id() const override { return "http:" + config_.base_url; }
  const BackendConfig& config() const noexcept { return config_; }

  nlohmann::json health();

  /// Raw POST with retry/limiter; exposed for the conformance checks.
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

 protected:
  ModelResponse do_answer(const Figure* figure, std::string_view prompt, bool want_logprobs) override;
  std::vector<Embedding> do_embed(const std::vector<std::string>& texts) override;

 private:
  BackendConfig config_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  std::atomic<std::uint64_t> next_correlation_{1};
  std::string correlation_prefix_;
};

inline constexpr const char* kCorrelationHeader = "X-Correlation-Id";

}  // namespace figclass
