#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "figclass/backend.hpp"
#include "figclass/datasetgen.hpp"
#include "figclass/eval.hpp"
#include "figclass/strategies.hpp"

namespace figclass {

/// Bad invocation: missing input, invalid flag combination. Exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::string backend_url;
  std::string embed_url;  // empty: the backend itself for http, mock://hash otherwise
  std::string aspect;
  Strategy strategy = Strategy::mc_ts;
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::size_t max_concurrency = 8;
  std::filesystem::path figures_path;
  std::filesystem::path concepts_path;
  std::optional<std::filesystem::path> templates_path;
  std::optional<std::filesystem::path> cache_path;
  std::optional<Split> split;
  std::filesystem::path out_dir;

  /// Throws UsageError.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Backend from a URL:
///   http://host:port            HTTP client
///   mock://oracle?error_rate=E&seed=S   oracle over `truth`
///   mock://hash?seed=S          hash-embedding backend
///   mock://scripted?path=FILE   scripted replies from a JSON file
std::unique_ptr<Backend> make_backend(const std::string& url, const OracleTruth& truth = {},
                                      const TemplateSet& templates = default_templates(),
                                      std::size_t max_in_flight = 8);

/// Classifies every figure (in input order) with figure-level parallelism
/// bounded by max_concurrency.
std::vector<ClassificationResult> run_classification(std::span<const Figure> figures, const ConceptSet& concepts,
                                                     Backend& backend, Matcher* matcher, Strategy strategy,
                                                     std::size_t k, std::uint64_t seed, std::size_t max_concurrency,
                                                     const TemplateSet& templates = default_templates());

ClassificationResult result_from_json(const nlohmann::json& j);
std::vector<ClassificationResult> read_results(const std::filesystem::path& path);
std::string results_to_jsonl(std::span<const ClassificationResult> results);

/// Writes results.jsonl and manifest.json under out_dir.
std::vector<ClassificationResult> cmd_classify(const RunConfig& config);

/// "R=<rounds> N=<total queries>"
std::string cmd_plan(std::size_t num_concepts, std::size_t k);

struct EvalConfig {
  std::filesystem::path results_path;  // classification results; or
  std::filesystem::path vqa_path;      // VQA predictions {qtype, prediction, answer}
  std::filesystem::path gold_path;     // figures with ground_truth, or cls.jsonl
  std::optional<std::filesystem::path> concepts_path;
  std::string judge_url;  // enables SemEq when set
  std::filesystem::path out_dir;
};

/// Writes report.json and report.csv (plus confusion.csv when concepts are known).
EvalReport cmd_eval(const EvalConfig& config);

struct BuildConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path concepts_path;
  std::string aspect;
  std::uint64_t seed = 0;
  ClsConfig cls;
  std::vector<std::size_t> k_choices{5, 10, 20};
  std::string embed_url;  // object aspect: similar-concept distractor pools
  std::optional<std::filesystem::path> templates_path;
  std::filesystem::path out_dir;
};

struct BuildOutput {
  ClsDataset cls;
  std::vector<VqaRecord> vqa;
  ValidationReport cls_report;
  ValidationReport vqa_report;
};

/// Writes cls.jsonl, vqa.jsonl and manifest.json under out_dir.
BuildOutput cmd_build_dataset(const BuildConfig& config);

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<ConformanceCheck> cmd_conformance(const std::string& backend_url);
bool all_passed(const std::vector<ConformanceCheck>& checks);
void print_checks(std::ostream& out, const std::vector<ConformanceCheck>& checks);

}  // namespace figclass
