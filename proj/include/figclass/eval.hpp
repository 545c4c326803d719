#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "figclass/backend.hpp"
#include "figclass/strategies.hpp"

namespace figclass {

/// figure id -> gold concept id
using GoldMap = std::map<std::string, std::string>;

double top1_accuracy(std::span<const ClassificationResult> results, const GoldMap& gold);

/// Case-insensitive, whitespace-trimmed equality rate.
double exact_match_accuracy(std::span<const std::string> predictions, std::span<const std::string> golds);

inline constexpr const char* kDefaultJudgeTemplate =
    "Question: what is the {aspect} shown in the figure? Reference answer: '{gold}'. "
    "Candidate answer: '{predicted}'. Are the candidate and reference semantically equivalent? "
    "Answer 'Yes' or 'No'.";

/// LLM-as-judge semantic equivalence. Identical labels (after
/// normalization) short-circuit to true without a backend call.
class SemEqJudge {
 public:
  explicit SemEqJudge(Backend& backend, std::string prompt_template = kDefaultJudgeTemplate);

  std::string render_prompt(std::string_view predicted, std::string_view gold, std::string_view aspect) const;
  bool equivalent(std::string_view predicted, std::string_view gold, std::string_view aspect);

  std::size_t judge_calls() const noexcept { return calls_.load(); }
  std::size_t unparseable() const noexcept { return unparseable_.load(); }

 private:
  Backend& backend_;
  std::string template_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> unparseable_{0};
};

bool sem_eq(std::string_view predicted_label, std::string_view gold_label, SemEqJudge& judge,
            std::string_view aspect = "concept");

struct KappaResult {
  double kappa = 0.0;
  double observed_agreement = 0.0;  // p_o, reported as IAA
  double expected_agreement = 0.0;  // p_e
};

/// Cohen's kappa over categorical ratings. When p_e == 1 the raters are
/// constant and identical; kappa is then 1.0 (p_o == 1) or DegenerateMarginals.
KappaResult cohens_kappa(std::span<const std::string> rater_a, std::span<const std::string> rater_b);
KappaResult cohens_kappa(const std::vector<bool>& rater_a, const std::vector<bool>& rater_b);

/// Rows are gold, columns predicted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> labels);

  void add(std::string_view gold, std::string_view predicted);
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t at(std::size_t gold, std::size_t predicted) const { return counts_[gold * labels_.size() + predicted]; }
  std::size_t total() const noexcept { return total_; }
  std::size_t trace() const;
  std::size_t row_sum(std::size_t gold) const;
  std::string to_csv() const;

 private:
  std::size_t index(std::string_view label) const;

  std::vector<std::string> labels_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

ConfusionMatrix confusion_matrix(std::span<const ClassificationResult> results, const GoldMap& gold,
                                 std::vector<std::string> labels);

struct QtypeBreakdown {
  std::size_t n = 0;
  double exact_match = 0.0;
};

struct EvalReport {
  std::string strategy;
  std::string aspect;
  std::size_t n_samples = 0;
  std::optional<double> top1;
  std::optional<double> semeq;
  std::optional<double> exact_match;
  std::map<std::string, QtypeBreakdown> per_qtype;
  std::size_t fallback_events = 0;
  std::size_t total_queries = 0;

  void validate() const;
};

/// {strategy, aspect, n, top1, semeq, exact_match, per_qtype, queries, fallback_events}
nlohmann::json to_json(const EvalReport& report);
std::string csv_header();
std::string to_csv_row(const EvalReport& report);

enum class ReportFormat { json, csv };
void write_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

/// Top-1 plus query/fallback totals over classification results.
EvalReport evaluate_results(std::span<const ClassificationResult> results, const GoldMap& gold);

struct VqaPrediction {
  std::string qtype;
  std::string prediction;
  std::string answer;
};

/// Exact-match accuracy overall and per question type.
EvalReport evaluate_vqa(std::span<const VqaPrediction> predictions, std::string aspect);

}  // namespace figclass
