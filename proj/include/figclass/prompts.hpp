#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "figclass/taxonomy.hpp"

namespace figclass {

enum class QuestionType { binary, multiple_choice, open_ended };

std::string_view to_string(QuestionType type) noexcept;
std::optional<QuestionType> parse_question_type(std::string_view text) noexcept;

inline constexpr std::size_t kSimilarPoolSize = 100;
inline constexpr int kMaxRoman = 100;

/// Lower-case roman numeral for 1..100.
std::string to_roman(int n);
/// Accepts "ii", "(ii)", "II"; rejects non-canonical forms such as "iiii".
int parse_roman(std::string_view text);
std::optional<int> try_parse_roman(std::string_view text) noexcept;

/// Options of a multiple-choice question, enumerated (i), (ii), ... in order.
class OptionList {
 public:
  OptionList() = default;
  explicit OptionList(std::vector<Concept> options);

  std::size_t size() const noexcept { return options_.size(); }
  bool empty() const noexcept { return options_.empty(); }
  const Concept& operator[](std::size_t i) const { return options_[i]; }
  std::span<const Concept> concepts() const noexcept { return options_; }
  std::optional<std::size_t> index_of(std::string_view concept_id) const;

  std::string numeral(std::size_t i) const { return to_roman(static_cast<int>(i) + 1); }
  std::string bracketed(std::size_t i) const { return "(" + numeral(i) + ")"; }
  std::string render(std::string_view separator = " ") const;

 private:
  std::vector<Concept> options_;
};

struct Question {
  QuestionType type = QuestionType::open_ended;
  std::string text;
  std::string aspect;
  std::optional<Concept> target;  // binary only
  OptionList options;             // multiple-choice only
  std::string instruction;
};

/// Question templates per (aspect, question type). Bodies may use the
/// placeholders {aspect}, {concept} and {list_of_options}; the instruction
/// for the question type is appended after a single space. The aspect "*"
/// provides fallbacks.
///
/// File layout:
///   {"instructions": {"binary": "...", ...},
///    "templates": {"*": {"binary": "...", "multiple_choice": "..."},
///                  "object": {"open_ended": "..."}},
///    "option_separator": " "}
class TemplateSet {
 public:
  static TemplateSet from_json(const nlohmann::json& j);
  static TemplateSet load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::string& instruction(QuestionType type) const;
  /// Aspect-specific body, else the "*" fallback, else nullptr.
  const std::string* body(std::string_view aspect, QuestionType type) const;
  const std::string& option_separator() const noexcept { return separator_; }

 private:
  std::map<QuestionType, std::string> instructions_;
  std::map<std::string, std::map<QuestionType, std::string>, std::less<>> bodies_;
  std::string separator_ = " ";
};

const TemplateSet& default_templates();

Question render_binary(const Aspect& aspect, const Concept& target,
                       const TemplateSet& templates = default_templates());
Question render_multiple_choice(const Aspect& aspect, const OptionList& options,
                                const TemplateSet& templates = default_templates());
Question render_open(const Aspect& aspect, const TemplateSet& templates = default_templates());

/// Which question type a rendered prompt is, judged by its trailing instruction.
std::optional<QuestionType> classify_prompt(std::string_view prompt,
                                            const TemplateSet& templates = default_templates());

/// Recovers the option labels of a multiple-choice prompt rendered for
/// `aspect`; nullopt if the prompt does not fit the template.
std::optional<std::vector<std::string>> extract_options(std::string_view prompt,
                                                        std::string_view aspect,
                                                        const TemplateSet& templates = default_templates());

/// K distinct options including `correct` at a seeded-uniform position.
/// Distractors come from `similar_pool` when given, else from `pool`.
OptionList sample_options(const Concept& correct, const ConceptSet& pool, std::size_t k,
                          std::uint64_t rng_seed,
                          std::optional<std::span<const Concept>> similar_pool = std::nullopt);

}  // namespace figclass
