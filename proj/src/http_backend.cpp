#include "figclass/http_backend.hpp"

#include <chrono>
#include <random>
#include <thread>

#include <httplib.h>

#include "figclass/error.hpp"
#include "figclass/text.hpp"

namespace figclass {

std::string resolve_image_b64(const Figure& figure) {
  if (const auto* b = std::get_if<ImageBase64>(&figure.image)) return b->data;
  if (const auto* p = std::get_if<ImagePath>(&figure.image)) return to_base64(read_file(p->path));
  if (const auto* u = std::get_if<ImageUri>(&figure.image)) {
    constexpr std::string_view kFile = "file://";
    if (u->uri.rfind(kFile, 0) == 0) return to_base64(read_file(u->uri.substr(kFile.size())));
    throw Error(ErrorKind::InvalidRequest, "cannot resolve image uri " + u->uri);
  }
  return {};
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.base_url.empty()) throw Error(ErrorKind::InvalidConfig, "backend base_url is empty");
  while (!config_.base_url.empty() && config_.base_url.back() == '/') config_.base_url.pop_back();
  in_flight_ = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(config_.max_in_flight));
  std::random_device rd;
  correlation_prefix_ = std::to_string(rd()) + "-";
}

HttpBackend::~HttpBackend() = default;

nlohmann::json HttpBackend::post(const std::string& path, const nlohmann::json& body) {
  const std::string payload = body.dump();
  const std::string correlation = correlation_prefix_ + std::to_string(next_correlation_.fetch_add(1));
  std::string last_failure;

  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 1)));

    httplib::Result res{nullptr, httplib::Error::Unknown};
    {
      in_flight_->acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{*in_flight_};
      httplib::Client client(config_.base_url);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      res = client.Post(path, httplib::Headers{{kCorrelationHeader, correlation}}, payload, "application/json");
    }

    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "server error " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorKind::ProtocolError, "HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body);
    }
    if (res->has_header(kCorrelationHeader) && res->get_header_value(kCorrelationHeader) != correlation) {
      throw Error(ErrorKind::ProtocolError, "correlation id mismatch on " + path);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ProtocolError, "invalid JSON from " + path + ": " + e.what());
    }
  }
  throw Error(ErrorKind::BackendUnavailable,
              config_.base_url + path + " failed after " + std::to_string(config_.max_retries + 1) +
                  " attempts (" + last_failure + ")");
}

nlohmann::json HttpBackend::health() {
  auto j = post("/v1/health", nlohmann::json::object());
  if (!j.is_object() || !j.contains("status")) throw Error(ErrorKind::ProtocolError, "health reply lacks \"status\"");
  return j;
}

ModelResponse HttpBackend::do_answer(const Figure* figure, std::string_view prompt, bool want_logprobs) {
  nlohmann::json body{{"prompt", std::string(prompt)}, {"want_logprobs", want_logprobs}};
  if (figure) {
    if (auto image = resolve_image_b64(*figure); !image.empty()) body["image_b64"] = std::move(image);
  }
  return response_from_json(post("/v1/answer", body));
}

std::vector<Embedding> HttpBackend::do_embed(const std::vector<std::string>& texts) {
  const auto j = post("/v1/embed", nlohmann::json{{"texts", texts}});
  if (!j.is_object() || !j.contains("vectors") || !j["vectors"].is_array()) {
    throw Error(ErrorKind::ProtocolError, "embed reply lacks array \"vectors\"");
  }
  std::vector<Embedding> out;
  for (const auto& v : j["vectors"]) {
    if (!v.is_array()) throw Error(ErrorKind::ProtocolError, "embed vectors must be arrays");
    out.push_back(v.get<Embedding>());
  }
  return out;
}

}  // namespace figclass
