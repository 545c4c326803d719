#include "figclass/eval.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "figclass/error.hpp"
#include "figclass/text.hpp"

namespace figclass {

double top1_accuracy(std::span<const ClassificationResult> results, const GoldMap& gold) {
  if (results.empty()) throw Error(ErrorKind::EmptyEvaluation, "no results to evaluate");
  std::size_t correct = 0;
  for (const auto& r : results) {
    auto it = gold.find(r.figure_id);
    if (it == gold.end()) throw Error(ErrorKind::UnknownFigure, "no gold label for figure " + r.figure_id);
    if (it->second == r.predicted.id) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(results.size());
}

double exact_match_accuracy(std::span<const std::string> predictions, std::span<const std::string> golds) {
  if (predictions.size() != golds.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                               std::to_string(golds.size()) + " golds");
  }
  if (predictions.empty()) throw Error(ErrorKind::EmptyEvaluation, "no predictions to evaluate");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (iequals(trim(predictions[i]), trim(golds[i]))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

SemEqJudge::SemEqJudge(Backend& backend, std::string prompt_template)
    : backend_(backend), template_(std::move(prompt_template)) {}

std::string SemEqJudge::render_prompt(std::string_view predicted, std::string_view gold,
                                      std::string_view aspect) const {
  std::string out = template_;
  auto replace = [&out](std::string_view key, std::string_view value) {
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  };
  replace("{aspect}", aspect);
  replace("{gold}", gold);
  replace("{predicted}", predicted);
  return out;
}

bool SemEqJudge::equivalent(std::string_view predicted, std::string_view gold, std::string_view aspect) {
  if (normalize_label(predicted) == normalize_label(gold)) return true;
  calls_.fetch_add(1);
  const auto response = backend_.answer(nullptr, render_prompt(predicted, gold, aspect), false);
  switch (parse_binary(response)) {
    case BinaryAnswer::affirmative: return true;
    case BinaryAnswer::negative: return false;
    case BinaryAnswer::unparseable: unparseable_.fetch_add(1); return false;
  }
  return false;
}

bool sem_eq(std::string_view predicted_label, std::string_view gold_label, SemEqJudge& judge,
            std::string_view aspect) {
  return judge.equivalent(predicted_label, gold_label, aspect);
}

KappaResult cohens_kappa(std::span<const std::string> rater_a, std::span<const std::string> rater_b) {
  if (rater_a.size() != rater_b.size()) throw Error(ErrorKind::LengthMismatch, "raters rated different counts");
  if (rater_a.empty()) throw Error(ErrorKind::EmptyEvaluation, "no ratings");
  const double n = static_cast<double>(rater_a.size());
  std::map<std::string, std::pair<double, double>> marginals;
  double agree = 0.0;
  for (std::size_t i = 0; i < rater_a.size(); ++i) {
    marginals[rater_a[i]].first += 1.0;
    marginals[rater_b[i]].second += 1.0;
    if (rater_a[i] == rater_b[i]) agree += 1.0;
  }
  KappaResult r;
  r.observed_agreement = agree / n;
  for (const auto& [label, counts] : marginals) r.expected_agreement += (counts.first / n) * (counts.second / n);
  if (r.expected_agreement >= 1.0 - 1e-15) {
    if (r.observed_agreement >= 1.0 - 1e-15) {
      r.kappa = 1.0;
      return r;
    }
    throw Error(ErrorKind::DegenerateMarginals, "kappa undefined: expected agreement is 1");
  }
  r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
  return r;
}

KappaResult cohens_kappa(const std::vector<bool>& rater_a, const std::vector<bool>& rater_b) {
  auto labels = [](const std::vector<bool>& v) {
    std::vector<std::string> out;
    out.reserve(v.size());
    for (bool b : v) out.emplace_back(b ? "yes" : "no");
    return out;
  };
  const auto a = labels(rater_a);
  const auto b = labels(rater_b);
  return cohens_kappa(std::span<const std::string>(a), std::span<const std::string>(b));
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) throw Error(ErrorKind::InvalidConfig, "duplicate label " + labels_[i]);
  }
  counts_.assign(labels_.size() * labels_.size(), 0);
}

std::size_t ConfusionMatrix::index(std::string_view label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw Error(ErrorKind::UnknownLabel, "label '" + std::string(label) + "' not in matrix");
  return it->second;
}

void ConfusionMatrix::add(std::string_view gold, std::string_view predicted) {
  const std::size_t g = index(gold);
  const std::size_t p = index(predicted);
  ++counts_[g * labels_.size() + p];
  ++total_;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < labels_.size(); ++i) t += at(i, i);
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t gold) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < labels_.size(); ++j) s += at(gold, j);
  return s;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fraction(const std::optional<double>& v) {
  if (!v) return {};
  std::ostringstream ss;
  ss.precision(6);
  ss << std::fixed << *v;
  return ss.str();
}

}  // namespace

std::string ConfusionMatrix::to_csv() const {
  std::string out = "gold\\predicted";
  for (const auto& l : labels_) out += "," + csv_field(l);
  out += '\n';
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    out += csv_field(labels_[i]);
    for (std::size_t j = 0; j < labels_.size(); ++j) out += "," + std::to_string(at(i, j));
    out += '\n';
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const ClassificationResult> results, const GoldMap& gold,
                                 std::vector<std::string> labels) {
  ConfusionMatrix m(std::move(labels));
  for (const auto& r : results) {
    auto it = gold.find(r.figure_id);
    if (it == gold.end()) throw Error(ErrorKind::UnknownFigure, "no gold label for figure " + r.figure_id);
    m.add(it->second, r.predicted.id);
  }
  return m;
}

void EvalReport::validate() const {
  if (n_samples == 0) throw Error(ErrorKind::EmptyEvaluation, "report over zero samples");
  for (const auto& v : {top1, semeq, exact_match}) {
    if (v && !(*v >= 0.0 && *v <= 1.0)) throw Error(ErrorKind::InvalidConfig, "fraction outside [0, 1]");
  }
}

nlohmann::json to_json(const EvalReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json per_qtype = nlohmann::json::object();
  for (const auto& [qtype, b] : report.per_qtype) per_qtype[qtype] = {{"n", b.n}, {"exact_match", b.exact_match}};
  return nlohmann::json{{"strategy", report.strategy},
                        {"aspect", report.aspect},
                        {"n", report.n_samples},
                        {"top1", opt(report.top1)},
                        {"semeq", opt(report.semeq)},
                        {"exact_match", opt(report.exact_match)},
                        {"per_qtype", per_qtype},
                        {"queries", report.total_queries},
                        {"fallback_events", report.fallback_events}};
}

std::string csv_header() { return "approach,aspect,n,top1,semeq,exact_match,queries,fallback_events\n"; }

std::string to_csv_row(const EvalReport& report) {
  return csv_field(report.strategy) + "," + csv_field(report.aspect) + "," + std::to_string(report.n_samples) + "," +
         fraction(report.top1) + "," + fraction(report.semeq) + "," + fraction(report.exact_match) + "," +
         std::to_string(report.total_queries) + "," + std::to_string(report.fallback_events) + "\n";
}

void write_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  report.validate();
  if (format == ReportFormat::json) {
    write_file(path, to_json(report).dump(2) + "\n");
  } else {
    write_file(path, csv_header() + to_csv_row(report));
  }
}

EvalReport evaluate_results(std::span<const ClassificationResult> results, const GoldMap& gold) {
  EvalReport report;
  report.top1 = top1_accuracy(results, gold);
  report.n_samples = results.size();
  std::set<std::string> strategies, aspects;
  for (const auto& r : results) {
    strategies.insert(std::string(to_string(r.strategy)));
    aspects.insert(r.aspect);
    report.total_queries += r.queries_used;
    report.fallback_events += r.fallback_events;
  }
  auto join = [](const std::set<std::string>& s) {
    std::string out;
    for (const auto& x : s) out += (out.empty() ? "" : "+") + x;
    return out;
  };
  report.strategy = join(strategies);
  report.aspect = join(aspects);
  return report;
}

EvalReport evaluate_vqa(std::span<const VqaPrediction> predictions, std::string aspect) {
  if (predictions.empty()) throw Error(ErrorKind::EmptyEvaluation, "no VQA predictions");
  std::vector<std::string> preds, golds;
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> by_type;
  for (const auto& p : predictions) {
    preds.push_back(p.prediction);
    golds.push_back(p.answer);
    by_type[p.qtype].first.push_back(p.prediction);
    by_type[p.qtype].second.push_back(p.answer);
  }
  EvalReport report;
  report.strategy = "vqa";
  report.aspect = std::move(aspect);
  report.n_samples = predictions.size();
  report.exact_match = exact_match_accuracy(preds, golds);
  for (const auto& [qtype, pg] : by_type) {
    report.per_qtype[qtype] = QtypeBreakdown{pg.first.size(), exact_match_accuracy(pg.first, pg.second)};
  }
  return report;
}

}  // namespace figclass
