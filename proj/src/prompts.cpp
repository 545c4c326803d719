#include "figclass/prompts.hpp"

#include <array>
#include <random>
#include <set>

#include "figclass/error.hpp"
#include "figclass/text.hpp"

namespace figclass {

std::string_view to_string(QuestionType type) noexcept {
  switch (type) {
    case QuestionType::binary: return "binary";
    case QuestionType::multiple_choice: return "multiple_choice";
    case QuestionType::open_ended: return "open_ended";
  }
  return "binary";
}

std::optional<QuestionType> parse_question_type(std::string_view text) noexcept {
  if (text == "binary") return QuestionType::binary;
  if (text == "multiple_choice") return QuestionType::multiple_choice;
  if (text == "open_ended") return QuestionType::open_ended;
  return std::nullopt;
}

std::string to_roman(int n) {
  if (n < 1 || n > kMaxRoman) {
    throw Error(ErrorKind::RangeError, "roman numerals cover 1.." + std::to_string(kMaxRoman) +
                                           ", got " + std::to_string(n));
  }
  static constexpr std::array<std::pair<int, const char*>, 9> kTable{{
      {100, "c"}, {90, "xc"}, {50, "l"}, {40, "xl"}, {10, "x"}, {9, "ix"}, {5, "v"}, {4, "iv"}, {1, "i"}}};
  std::string out;
  for (const auto& [value, glyph] : kTable) {
    while (n >= value) {
      out += glyph;
      n -= value;
    }
  }
  return out;
}

std::optional<int> try_parse_roman(std::string_view text) noexcept {
  text = trim(text);
  if (text.size() >= 2 && text.front() == '(' && text.back() == ')') {
    text = trim(text.substr(1, text.size() - 2));
  }
  if (text.empty() || text.size() > 8) return std::nullopt;
  auto value_of = [](char c) {
    switch (c) {
      case 'i': case 'I': return 1;
      case 'v': case 'V': return 5;
      case 'x': case 'X': return 10;
      case 'l': case 'L': return 50;
      case 'c': case 'C': return 100;
      default: return 0;
    }
  };
  int total = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int v = value_of(text[i]);
    if (v == 0) return std::nullopt;
    const int next = i + 1 < text.size() ? value_of(text[i + 1]) : 0;
    total += next > v ? -v : v;
  }
  if (total < 1 || total > kMaxRoman) return std::nullopt;
  // Only the canonical spelling round-trips.
  if (to_roman(total) != to_lower(text)) return std::nullopt;
  return total;
}

int parse_roman(std::string_view text) {
  if (auto n = try_parse_roman(text)) return *n;
  throw Error(ErrorKind::ParseFailure, "not a roman numeral: '" + std::string(text) + "'");
}

OptionList::OptionList(std::vector<Concept> options) : options_(std::move(options)) {
  if (options_.size() > static_cast<std::size_t>(kMaxRoman)) {
    throw Error(ErrorKind::InvalidOptions, "at most " + std::to_string(kMaxRoman) + " options");
  }
  std::set<std::string> ids;
  for (const auto& c : options_) {
    if (!ids.insert(c.id).second) throw Error(ErrorKind::InvalidOptions, "duplicate option " + c.id);
  }
}

std::optional<std::size_t> OptionList::index_of(std::string_view concept_id) const {
  for (std::size_t i = 0; i < options_.size(); ++i) {
    if (options_[i].id == concept_id) return i;
  }
  return std::nullopt;
}

std::string OptionList::render(std::string_view separator) const {
  std::string out;
  for (std::size_t i = 0; i < options_.size(); ++i) {
    if (i) out += separator;
    out += bracketed(i);
    out += ' ';
    out += options_[i].label;
  }
  return out;
}

namespace {

std::string fill(std::string_view body, std::initializer_list<std::pair<std::string_view, std::string_view>> values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find('{', pos);
    if (open == std::string_view::npos) break;
    const auto close = body.find('}', open);
    if (close == std::string_view::npos) break;
    const auto key = body.substr(open + 1, close - open - 1);
    out.append(body.substr(pos, open - pos));
    bool replaced = false;
    for (const auto& [k, v] : values) {
      if (k == key) {
        out.append(v);
        replaced = true;
        break;
      }
    }
    if (!replaced) out.append(body.substr(open, close - open + 1));
    pos = close + 1;
  }
  out.append(body.substr(pos));
  return out;
}

const std::string& require_body(const TemplateSet& t, std::string_view aspect, QuestionType type) {
  const auto* body = t.body(aspect, type);
  if (!body) {
    throw Error(ErrorKind::UnknownAspect, "no " + std::string(to_string(type)) +
                                              " template for aspect '" + std::string(aspect) + "'");
  }
  return *body;
}

std::string with_instruction(const std::string& body, const std::string& instruction) {
  return instruction.empty() ? body : body + " " + instruction;
}

}  // namespace

namespace {

std::string_view default_instruction(QuestionType type) {
  switch (type) {
    case QuestionType::binary:
      return "Answer 'Yes' or 'No'.";
    case QuestionType::multiple_choice:
      return "Choose one option.";
    case QuestionType::open_ended:
      return "Provide a class label.";
  }
  return "";
}

}  // namespace

TemplateSet TemplateSet::from_json(const nlohmann::json& j) {
  TemplateSet t;
  for (const auto& [key, value] : j.at("instructions").items()) {
    auto type = parse_question_type(key);
    if (!type) throw Error(ErrorKind::InvalidConfig, "unknown question type '" + key + "'");
    t.instructions_[*type] = value.get<std::string>();
  }
  for (auto type : {QuestionType::binary, QuestionType::multiple_choice, QuestionType::open_ended}) {
    if (!t.instructions_.count(type)) t.instructions_[type] = std::string(default_instruction(type));
  }
  for (const auto& [aspect, per_type] : j.at("templates").items()) {
    for (const auto& [key, value] : per_type.items()) {
      auto type = parse_question_type(key);
      if (!type) throw Error(ErrorKind::InvalidConfig, "unknown question type '" + key + "'");
      t.bodies_[aspect == "*" ? aspect : normalize_label(aspect)][*type] = value.get<std::string>();
    }
  }
  t.separator_ = j.value("option_separator", std::string(" "));
  return t;
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) { return from_json(read_json(path)); }

nlohmann::json TemplateSet::to_json() const {
  nlohmann::json j;
  for (const auto& [type, text] : instructions_) j["instructions"][std::string(figclass::to_string(type))] = text;
  for (const auto& [aspect, per_type] : bodies_) {
    for (const auto& [type, text] : per_type) j["templates"][aspect][std::string(figclass::to_string(type))] = text;
  }
  j["option_separator"] = separator_;
  return j;
}

const std::string& TemplateSet::instruction(QuestionType type) const {
  return instructions_.at(type);
}

const std::string* TemplateSet::body(std::string_view aspect, QuestionType type) const {
  for (std::string_view key : {aspect, std::string_view("*")}) {
    auto it = bodies_.find(key);
    if (it == bodies_.end()) continue;
    auto jt = it->second.find(type);
    if (jt != it->second.end()) return &jt->second;
  }
  return nullptr;
}

const TemplateSet& default_templates() {
  static const TemplateSet templates = TemplateSet::from_json(nlohmann::json::parse(R"({
    "instructions": {
      "binary": "Answer 'Yes' or 'No'.",
      "multiple_choice": "Choose one option.",
      "open_ended": "Provide a class label."
    },
    "templates": {
      "*": {
        "binary": "Is the {aspect} of the figure {concept}?",
        "multiple_choice": "Which {aspect} does the figure show? Options: {list_of_options}"
      },
      "object": {"open_ended": "What object is depicted in the figure?"},
      "type": {"open_ended": "What is the type of the figure?"},
      "projection": {"open_ended": "What is the projection of the figure?"},
      "uspc": {"open_ended": "Which USPC class does the figure belong to?"}
    },
    "option_separator": " "
  })"));
  return templates;
}

Question render_binary(const Aspect& aspect, const Concept& target, const TemplateSet& templates) {
  if (target.aspect != aspect.name) {
    throw Error(ErrorKind::AspectMismatch,
                "concept '" + target.label + "' belongs to '" + target.aspect + "', not '" + aspect.name + "'");
  }
  Question q;
  q.type = QuestionType::binary;
  q.aspect = aspect.name;
  q.target = target;
  q.instruction = templates.instruction(QuestionType::binary);
  q.text = with_instruction(
      fill(require_body(templates, aspect.name, q.type), {{"aspect", aspect.name}, {"concept", target.label}}),
      q.instruction);
  return q;
}

Question render_multiple_choice(const Aspect& aspect, const OptionList& options, const TemplateSet& templates) {
  if (options.size() < 2) throw Error(ErrorKind::InvalidOptions, "a choice needs at least two options");
  for (const auto& c : options.concepts()) {
    if (c.aspect != aspect.name) {
      throw Error(ErrorKind::AspectMismatch, "option '" + c.label + "' belongs to '" + c.aspect + "'");
    }
  }
  Question q;
  q.type = QuestionType::multiple_choice;
  q.aspect = aspect.name;
  q.options = options;
  q.instruction = templates.instruction(q.type);
  const std::string list = options.render(templates.option_separator());
  q.text = with_instruction(
      fill(require_body(templates, aspect.name, q.type), {{"aspect", aspect.name}, {"list_of_options", list}}),
      q.instruction);
  return q;
}

Question render_open(const Aspect& aspect, const TemplateSet& templates) {
  Question q;
  q.type = QuestionType::open_ended;
  q.aspect = aspect.name;
  q.instruction = templates.instruction(q.type);
  q.text = with_instruction(fill(require_body(templates, aspect.name, q.type), {{"aspect", aspect.name}}),
                            q.instruction);
  return q;
}

std::optional<QuestionType> classify_prompt(std::string_view prompt, const TemplateSet& templates) {
  for (auto type : {QuestionType::binary, QuestionType::multiple_choice, QuestionType::open_ended}) {
    if (ends_with(prompt, templates.instruction(type))) return type;
  }
  return std::nullopt;
}

std::optional<std::vector<std::string>> extract_options(std::string_view prompt, std::string_view aspect,
                                                        const TemplateSet& templates) {
  const auto* body = templates.body(aspect, QuestionType::multiple_choice);
  if (!body) return std::nullopt;
  const std::string filled = fill(*body, {{"aspect", aspect}});
  const auto slot = filled.find("{list_of_options}");
  if (slot == std::string::npos) return std::nullopt;
  const std::string prefix = filled.substr(0, slot);
  const std::string suffix = with_instruction(filled.substr(slot + 17), templates.instruction(QuestionType::multiple_choice));
  if (prompt.size() < prefix.size() + suffix.size() || prompt.substr(0, prefix.size()) != prefix ||
      !ends_with(prompt, suffix)) {
    return std::nullopt;
  }
  std::string_view list = prompt.substr(prefix.size(), prompt.size() - prefix.size() - suffix.size());
  if (list.substr(0, 4) != "(i) ") return std::nullopt;

  std::vector<std::string> labels;
  std::size_t start = 4;
  for (int n = 2;; ++n) {
    if (n > kMaxRoman) {
      labels.emplace_back(list.substr(start));
      break;
    }
    const std::string marker = templates.option_separator() + "(" + to_roman(n) + ") ";
    const auto next = list.find(marker, start);
    if (next == std::string_view::npos) {
      labels.emplace_back(list.substr(start));
      break;
    }
    labels.emplace_back(list.substr(start, next - start));
    start = next + marker.size();
  }
  return labels;
}

OptionList sample_options(const Concept& correct, const ConceptSet& pool, std::size_t k,
                          std::uint64_t rng_seed, std::optional<std::span<const Concept>> similar_pool) {
  if (k < 2) throw Error(ErrorKind::InvalidOptions, "K must be at least 2");
  const std::span<const Concept> source = similar_pool ? *similar_pool : pool.concepts();

  std::vector<Concept> candidates;
  std::set<std::string> seen{correct.id};
  for (const auto& c : source) {
    if (seen.insert(c.id).second) candidates.push_back(c);
  }
  if (candidates.size() < k - 1) {
    throw Error(ErrorKind::InsufficientPool, "need " + std::to_string(k - 1) + " distractors, pool has " +
                                                 std::to_string(candidates.size()));
  }

  std::mt19937_64 rng(rng_seed);
  for (std::size_t i = 0; i < k - 1; ++i) {
    std::swap(candidates[i], candidates[i + uniform_index(rng, candidates.size() - i)]);
  }
  candidates.resize(k - 1);
  const std::size_t position = uniform_index(rng, k);
  candidates.insert(candidates.begin() + static_cast<std::ptrdiff_t>(position), correct);
  return OptionList(std::move(candidates));
}

}  // namespace figclass
