#include "figclass/commands.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <set>
#include <ostream>
#include <sstream>

#include <httplib.h>

#include "figclass/concurrency.hpp"
#include "figclass/error.hpp"
#include "figclass/http_backend.hpp"
#include "figclass/matching.hpp"
#include "figclass/text.hpp"

namespace figclass {

namespace {

constexpr const char* kToolVersion = "0.1.0";

void require_file(const std::filesystem::path& path, std::string_view what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is required");
  if (!std::filesystem::exists(path)) throw UsageError(std::string(what) + " not found: " + path.string());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::map<std::string, std::string> parse_query(std::string_view query) {
  std::map<std::string, std::string> out;
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto part = query.substr(0, amp);
    const auto eq = part.find('=');
    if (eq == std::string_view::npos) {
      out[std::string(part)] = "";
    } else {
      out[std::string(part.substr(0, eq))] = std::string(part.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s, std::string_view what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "bad " + std::string(what) + " '" + s + "'");
  }
}

double parse_double(const std::string& s, std::string_view what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "bad " + std::string(what) + " '" + s + "'");
  }
}

bool is_http(std::string_view url) { return url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0; }

ConceptSet load_aspect(const std::filesystem::path& path, const std::string& aspect) {
  const auto records = read_concept_records(path);
  auto sets = load_concept_sets(records);
  auto it = sets.find(normalize_label(aspect));
  if (it == sets.end()) throw Error(ErrorKind::UnknownAspect, "no concepts for aspect '" + aspect + "' in " + path.string());
  return it->second;
}

nlohmann::json file_hash(const std::filesystem::path& path) { return git_blob_hash(read_file(path)); }

}  // namespace

void RunConfig::validate() const {
  if (strategy == Strategy::mc_ts && k < 2) throw UsageError("--k must be at least 2 for mc-ts");
  if (max_concurrency < 1) throw UsageError("--max-concurrency must be at least 1");
  if (aspect.empty()) throw UsageError("--aspect is required");
  if (backend_url.empty()) throw UsageError("no backend: pass --backend-url or set " + std::string(kBackendUrlEnv));
  if (out_dir.empty()) throw UsageError("--out is required");
  require_file(figures_path, "figures file");
  require_file(concepts_path, "concepts file");
  if (templates_path) require_file(*templates_path, "templates file");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j{{"backend_url", backend_url},
                   {"embed_url", embed_url},
                   {"aspect", aspect},
                   {"strategy", std::string(to_string(strategy))},
                   {"k", k},
                   {"seed", seed},
                   {"max_concurrency", max_concurrency},
                   {"figures", figures_path.string()},
                   {"concepts", concepts_path.string()},
                   {"out", out_dir.string()}};
  if (templates_path) j["templates"] = templates_path->string();
  if (split) j["split"] = std::string(to_string(*split));
  return j;
}

std::unique_ptr<Backend> make_backend(const std::string& url, const OracleTruth& truth, const TemplateSet& templates,
                                      std::size_t max_in_flight) {
  if (is_http(url)) {
    BackendConfig cfg;
    cfg.base_url = url;
    cfg.max_in_flight = max_in_flight;
    return std::make_unique<HttpBackend>(cfg);
  }
  constexpr std::string_view kMock = "mock://";
  if (url.rfind(kMock, 0) != 0) throw Error(ErrorKind::InvalidConfig, "unsupported backend url '" + url + "'");
  std::string_view rest(url);
  rest.remove_prefix(kMock.size());
  const auto q = rest.find('?');
  const std::string kind(rest.substr(0, q));
  const auto params = q == std::string_view::npos ? std::map<std::string, std::string>{} : parse_query(rest.substr(q + 1));
  auto param = [&params](const std::string& key) -> const std::string* {
    auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
  };
  const std::uint64_t seed = param("seed") ? parse_u64(*param("seed"), "seed") : 0;
  if (kind == "oracle") {
    const double e = param("error_rate") ? parse_double(*param("error_rate"), "error_rate") : 0.0;
    return make_oracle_backend(truth, e, seed, templates);
  }
  if (kind == "hash") {
    const std::size_t dim = param("dim") ? parse_u64(*param("dim"), "dim") : kHashEmbeddingDim;
    return std::make_unique<HashEmbeddingBackend>(seed, dim);
  }
  if (kind == "scripted") {
    if (!param("path")) throw Error(ErrorKind::InvalidConfig, "mock://scripted needs ?path=");
    return ScriptedBackend::from_json(read_json(*param("path")));
  }
  throw Error(ErrorKind::InvalidConfig, "unknown mock backend '" + kind + "'");
}

std::vector<ClassificationResult> run_classification(std::span<const Figure> figures, const ConceptSet& concepts,
                                                     Backend& backend, Matcher* matcher, Strategy strategy,
                                                     std::size_t k, std::uint64_t seed, std::size_t max_concurrency,
                                                     const TemplateSet& templates) {
  if (strategy == Strategy::oc && matcher == nullptr) {
    throw Error(ErrorKind::InvalidConfig, "oc needs an embedding backend");
  }
  StrategyOptions opts;
  opts.templates = &templates;
  opts.max_concurrency = 1;  // parallelism lives at the figure level
  std::vector<ClassificationResult> results(figures.size());
  parallel_for(figures.size(), max_concurrency, [&](std::size_t i) {
    const Figure& f = figures[i];
    switch (strategy) {
      case Strategy::bc: results[i] = classify_bc(f, concepts, backend, opts); break;
      case Strategy::oc: results[i] = classify_oc(f, concepts, backend, *matcher, opts); break;
      case Strategy::mc: results[i] = classify_mc_single(f, concepts, backend, seed, opts); break;
      case Strategy::mc_ts: results[i] = classify_mc_ts(f, concepts, backend, k, seed, opts); break;
    }
  });
  return results;
}

ClassificationResult result_from_json(const nlohmann::json& j) {
  try {
    ClassificationResult r;
    r.figure_id = j.at("figure_id").get<std::string>();
    r.aspect = j.at("aspect").get<std::string>();
    const auto strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (!strategy) throw Error(ErrorKind::ParseFailure, "unknown strategy in result for " + r.figure_id);
    r.strategy = *strategy;
    r.predicted.id = j.at("predicted_id").get<std::string>();
    r.predicted.label = j.value("predicted_label", r.predicted.id);
    r.predicted.aspect = r.aspect;
    r.queries_used = j.value("queries_used", std::size_t{0});
    r.fallback_events = j.value("fallback_events", std::size_t{0});
    if (j.contains("score") && !j["score"].is_null()) r.score = j["score"].get<double>();
    if (j.contains("response_text")) r.response_text = j["response_text"].get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseFailure, std::string("malformed result record: ") + e.what());
  }
}

std::vector<ClassificationResult> read_results(const std::filesystem::path& path) {
  std::vector<ClassificationResult> out;
  for (const auto& row : read_jsonl(path)) out.push_back(result_from_json(row));
  return out;
}

std::string results_to_jsonl(std::span<const ClassificationResult> results) {
  std::string out;
  for (const auto& r : results) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<ClassificationResult> cmd_classify(const RunConfig& config) {
  config.validate();
  const TemplateSet templates = config.templates_path ? TemplateSet::load(*config.templates_path) : default_templates();
  const ConceptSet concepts = load_aspect(config.concepts_path, config.aspect);
  auto figures = read_figures(config.figures_path);
  if (config.split) {
    std::erase_if(figures, [&](const Figure& f) { return f.split != config.split; });
  }
  if (figures.empty()) throw Error(ErrorKind::EmptyEvaluation, "no figures to classify");

  const OracleTruth truth = truth_from_figures(figures, concepts);
  auto backend = make_backend(config.backend_url, truth, templates, config.max_concurrency);

  std::unique_ptr<Backend> embed_backend;
  std::unique_ptr<Matcher> matcher;
  auto cache = std::make_shared<EmbeddingCache>();
  if (config.cache_path) cache->load(*config.cache_path);
  if (config.strategy == Strategy::oc) {
    Backend* embedder = backend.get();
    const std::string embed_url =
        !config.embed_url.empty() ? config.embed_url : (is_http(config.backend_url) ? "" : "mock://hash");
    if (!embed_url.empty()) {
      embed_backend = make_backend(embed_url, truth, templates, config.max_concurrency);
      embedder = embed_backend.get();
    }
    matcher = std::make_unique<Matcher>(*embedder, cache);
  }

  auto results = run_classification(figures, concepts, *backend, matcher.get(), config.strategy, config.k,
                                    config.seed, config.max_concurrency, templates);

  const std::string body = results_to_jsonl(results);
  write_file(config.out_dir / "results.jsonl", body);
  if (config.cache_path) cache->save(*config.cache_path);

  std::size_t queries = 0;
  for (const auto& r : results) queries += r.queries_used;
  nlohmann::json manifest{{"tool", "figclass"},
                          {"version", kToolVersion},
                          {"command", "classify"},
                          {"config", config.to_json()},
                          {"seed", config.seed},
                          {"backend_id", backend->id()},
                          {"figures", results.size()},
                          {"queries", queries},
                          {"hashes",
                           {{"results.jsonl", git_blob_hash(body)},
                            {"figures", file_hash(config.figures_path)},
                            {"concepts", file_hash(config.concepts_path)}}},
                          {"timestamp", utc_timestamp()}};
  write_file(config.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return results;
}

std::string cmd_plan(std::size_t num_concepts, std::size_t k) {
  const auto plan = plan_tournament(num_concepts, k);
  return "R=" + std::to_string(plan.rounds) + " N=" + std::to_string(plan.total_queries);
}

namespace {

GoldMap read_gold(const std::filesystem::path& path, const std::string& aspect) {
  GoldMap gold;
  for (const auto& row : read_jsonl(path)) {
    if (row.contains("concept_id")) {
      if (!aspect.empty() && row.value("aspect", aspect) != aspect) continue;
      gold[row.at("figure_id").get<std::string>()] = row["concept_id"].get<std::string>();
    } else {
      const Figure f = figure_from_json(row);
      if (const auto* t = f.truth_for(aspect)) gold[f.id] = *t;
    }
  }
  return gold;
}

}  // namespace

EvalReport cmd_eval(const EvalConfig& config) {
  if (config.out_dir.empty()) throw UsageError("--out is required");
  if (!config.vqa_path.empty()) {
    require_file(config.vqa_path, "VQA predictions file");
    std::vector<VqaPrediction> preds;
    std::string aspect;
    for (const auto& row : read_jsonl(config.vqa_path)) {
      try {
        preds.push_back({row.at("qtype").get<std::string>(), row.at("prediction").get<std::string>(),
                         row.at("answer").get<std::string>()});
        if (aspect.empty()) aspect = row.value("aspect", "");
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseFailure, std::string("malformed VQA prediction: ") + e.what());
      }
    }
    auto report = evaluate_vqa(preds, aspect);
    write_report(report, ReportFormat::json, config.out_dir / "report.json");
    write_report(report, ReportFormat::csv, config.out_dir / "report.csv");
    return report;
  }

  require_file(config.results_path, "results file");
  require_file(config.gold_path, "gold file");
  if (config.concepts_path) require_file(*config.concepts_path, "concepts file");
  const auto results = read_results(config.results_path);
  if (results.empty()) throw Error(ErrorKind::EmptyEvaluation, "results file is empty");
  const GoldMap gold = read_gold(config.gold_path, results.front().aspect);
  auto report = evaluate_results(results, gold);

  std::optional<ConceptSet> concepts;
  if (config.concepts_path) concepts = load_aspect(*config.concepts_path, results.front().aspect);

  if (!config.judge_url.empty()) {
    auto judge_backend = make_backend(config.judge_url);
    SemEqJudge judge(*judge_backend);
    std::size_t hits = 0;
    for (const auto& r : results) {
      const std::string& gold_id = gold.at(r.figure_id);
      std::string gold_label = gold_id;
      if (concepts) {
        if (const auto* c = concepts->find(gold_id)) gold_label = c->label;
      }
      const std::string predicted = r.response_text.value_or(r.predicted.label);
      if (judge.equivalent(predicted, gold_label, r.aspect)) ++hits;
    }
    report.semeq = static_cast<double>(hits) / static_cast<double>(results.size());
  }

  write_report(report, ReportFormat::json, config.out_dir / "report.json");
  write_report(report, ReportFormat::csv, config.out_dir / "report.csv");
  if (concepts) {
    std::vector<std::string> labels;
    for (const auto& c : *concepts) labels.push_back(c.id);
    write_file(config.out_dir / "confusion.csv", confusion_matrix(results, gold, labels).to_csv());
  }
  return report;
}

BuildOutput cmd_build_dataset(const BuildConfig& config) {
  require_file(config.corpus_path, "corpus file");
  require_file(config.concepts_path, "concepts file");
  if (config.aspect.empty()) throw UsageError("--aspect is required");
  if (config.out_dir.empty()) throw UsageError("--out is required");
  if (config.templates_path) require_file(*config.templates_path, "templates file");

  const TemplateSet templates = config.templates_path ? TemplateSet::load(*config.templates_path) : default_templates();
  const ConceptSet all = load_aspect(config.concepts_path, config.aspect);
  const auto corpus = read_figures(config.corpus_path);

  BuildOutput out;
  ClsConfig cls_cfg = config.cls;
  cls_cfg.seed = config.seed;
  out.cls = build_cls_splits(corpus, all, cls_cfg);

  // VQA and validation use only the concepts that survived the support filter.
  std::vector<std::string> kept_ids;
  {
    std::set<std::string> seen;
    for (const auto& e : out.cls.split(Split::train)) {
      if (seen.insert(e.concept_id).second) kept_ids.push_back(e.concept_id);
    }
  }
  const ConceptSet kept = all.subset(kept_ids);

  VqaConfig vqa_cfg;
  vqa_cfg.seed = config.seed;
  vqa_cfg.templates = &templates;
  vqa_cfg.k_choices.clear();
  for (auto k : config.k_choices) {
    if (k >= 2 && k <= kept.size()) vqa_cfg.k_choices.push_back(k);
  }
  if (vqa_cfg.k_choices.empty()) {
    throw Error(ErrorKind::InsufficientPool,
                "no multiple-choice size fits " + std::to_string(kept.size()) + " concepts");
  }

  SimilarPools pools;
  std::unique_ptr<Backend> embedder;
  if (!config.embed_url.empty()) {
    embedder = make_backend(config.embed_url);
    Matcher matcher(*embedder);
    for (const auto& c : kept) pools[c.id] = matcher.similar_pool(c, kept);
    vqa_cfg.similar_pools = &pools;
  }
  out.vqa = build_vqa(out.cls, kept, vqa_cfg);
  out.cls_report = validate_dataset(out.cls, all, cls_cfg.train_per_concept);
  out.vqa_report = validate_vqa(out.vqa, kept, templates);

  const std::string cls_body = cls_to_jsonl(out.cls);
  const std::string vqa_body = vqa_to_jsonl(out.vqa);
  write_file(config.out_dir / "cls.jsonl", cls_body);
  write_file(config.out_dir / "vqa.jsonl", vqa_body);

  auto violations = [](const ValidationReport& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : r.violations) arr.push_back({{"kind", v.kind}, {"count", v.count}, {"example", v.example}});
    return arr;
  };
  nlohmann::json manifest{
      {"tool", "figclass"},
      {"version", kToolVersion},
      {"command", "build-dataset"},
      {"config",
       {{"corpus", config.corpus_path.string()},
        {"concepts", config.concepts_path.string()},
        {"aspect", config.aspect},
        {"train_per_concept", cls_cfg.train_per_concept},
        {"valid_target", cls_cfg.valid_target},
        {"test_target", cls_cfg.test_target},
        {"k_choices", vqa_cfg.k_choices},
        {"embed_url", config.embed_url}}},
      {"seed", config.seed},
      {"sizes",
       {{"concepts", kept.size()},
        {"train", out.cls.size(Split::train)},
        {"valid", out.cls.size(Split::valid)},
        {"test", out.cls.size(Split::test)},
        {"vqa", out.vqa.size()}}},
      {"warnings", out.cls.warnings},
      {"violations", {{"cls", violations(out.cls_report)}, {"vqa", violations(out.vqa_report)}}},
      {"hashes",
       {{"cls.jsonl", git_blob_hash(cls_body)},
        {"vqa.jsonl", git_blob_hash(vqa_body)},
        {"corpus", file_hash(config.corpus_path)},
        {"concepts", file_hash(config.concepts_path)}}},
      {"timestamp", utc_timestamp()}};
  write_file(config.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

namespace {

struct RawReply {
  int status = 0;
  std::string body;
  std::string error;
};

RawReply raw_post(const std::string& base, const std::string& path, const std::string& body) {
  httplib::Client client(base);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(30, 0);
  auto res = client.Post(path, body, "application/json");
  if (!res) return {0, {}, httplib::to_string(res.error())};
  return {res->status, res->body, {}};
}

std::optional<nlohmann::json> parse_ok(const RawReply& r, std::string& detail) {
  if (!r.error.empty()) {
    detail = "transport error: " + r.error;
    return std::nullopt;
  }
  if (r.status != 200) {
    detail = "HTTP " + std::to_string(r.status);
    return std::nullopt;
  }
  try {
    return nlohmann::json::parse(r.body);
  } catch (const nlohmann::json::parse_error&) {
    detail = "body is not JSON";
    return std::nullopt;
  }
}

/// Field-by-field check of an answer reply; names the first broken field.
std::string answer_schema_problem(const nlohmann::json& j, bool expect_logprobs) {
  if (!j.is_object()) return "reply is not an object";
  if (!j.contains("text")) return "missing field \"text\"";
  if (!j["text"].is_string()) return "field \"text\" is not a string";
  if (!expect_logprobs) return {};
  if (!j.contains("token_logprobs")) return "missing field \"token_logprobs\"";
  if (!j.contains("cumulative_logprob")) return "missing field \"cumulative_logprob\"";
  if (!j["cumulative_logprob"].is_number()) return "field \"cumulative_logprob\" is not a number";
  if (!j["token_logprobs"].is_array()) return "field \"token_logprobs\" is not an array";
  double sum = 0.0;
  for (const auto& pair : j["token_logprobs"]) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_number()) {
      return "field \"token_logprobs\" entries must be [token, logprob]";
    }
    const double lp = pair[1].get<double>();
    if (lp > 0.0) return "field \"token_logprobs\" has a positive logprob";
    sum += lp;
  }
  if (std::abs(sum - j["cumulative_logprob"].get<double>()) > 1e-9) {
    return "field \"cumulative_logprob\" differs from the token sum";
  }
  return {};
}

}  // namespace

std::vector<ConformanceCheck> cmd_conformance(const std::string& backend_url) {
  if (!is_http(backend_url)) throw UsageError("conformance needs an http:// backend url");
  std::string base = backend_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  std::vector<ConformanceCheck> checks;
  auto record = [&checks](std::string name, std::string problem) {
    checks.push_back({std::move(name), problem.empty(), std::move(problem)});
  };

  {
    std::string detail;
    auto j = parse_ok(raw_post(base, "/v1/health", "{}"), detail);
    if (j && !(j->is_object() && j->contains("status"))) detail = "missing field \"status\"";
    record("health", detail);
  }

  const std::string prompt = render_binary(Aspect{"type", ""}, Concept{"drawing", "drawing", "type"}).text;
  {
    std::string detail;
    auto j = parse_ok(raw_post(base, "/v1/answer", nlohmann::json{{"prompt", prompt}, {"want_logprobs", true}}.dump()),
                      detail);
    if (j) detail = answer_schema_problem(*j, true);
    record("answer_with_logprobs", detail);
  }
  {
    std::string detail;
    auto j = parse_ok(raw_post(base, "/v1/answer", nlohmann::json{{"prompt", prompt}, {"want_logprobs", false}}.dump()),
                      detail);
    if (j) detail = answer_schema_problem(*j, false);
    record("answer_without_logprobs", detail);
  }
  {
    std::string detail;
    auto j = parse_ok(
        raw_post(base, "/v1/embed", nlohmann::json{{"texts", {"drawing", "drawing", "graph"}}}.dump()), detail);
    if (j) {
      if (!j->is_object() || !j->contains("vectors")) {
        detail = "missing field \"vectors\"";
      } else if (!(*j)["vectors"].is_array() || (*j)["vectors"].size() != 3) {
        detail = "field \"vectors\" must hold one vector per text";
      } else {
        const auto& v = (*j)["vectors"];
        if (!v[0].is_array() || v[0].empty()) {
          detail = "field \"vectors\" holds an empty vector";
        } else if (v[1].size() != v[0].size() || v[2].size() != v[0].size()) {
          detail = "field \"vectors\" has unequal dimensions";
        } else if (v[0] != v[1]) {
          detail = "identical texts embedded differently";
        }
      }
    }
    record("embed", detail);
  }
  {
    const auto r = raw_post(base, "/v1/answer", "{\"prompt\": ");
    std::string detail;
    if (!r.error.empty()) {
      detail = "transport error: " + r.error;
    } else if (r.status < 400 || r.status >= 500) {
      detail = "malformed JSON answered with HTTP " + std::to_string(r.status) + ", expected 4xx";
    }
    record("malformed_request_4xx", detail);
  }
  {
    const auto r = raw_post(base, "/v1/answer", nlohmann::json{{"prompt", ""}, {"want_logprobs", false}}.dump());
    std::string detail;
    if (!r.error.empty()) {
      detail = "transport error: " + r.error;
    } else if (r.status < 400 || r.status >= 500) {
      detail = "empty prompt answered with HTTP " + std::to_string(r.status) + ", expected 4xx";
    }
    record("empty_prompt_4xx", detail);
  }
  return checks;
}

bool all_passed(const std::vector<ConformanceCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

void print_checks(std::ostream& out, const std::vector<ConformanceCheck>& checks) {
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.passed) out << ": " << c.detail;
    out << '\n';
  }
}

}  // namespace figclass
