#include "figclass/figure.hpp"

#include <set>

#include "figclass/error.hpp"
#include "figclass/text.hpp"

namespace figclass {

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view text) noexcept {
  if (text == "train") return Split::train;
  if (text == "valid" || text == "validation") return Split::valid;
  if (text == "test") return Split::test;
  return std::nullopt;
}

const std::string* Figure::truth_for(std::string_view aspect) const {
  auto it = ground_truth.find(std::string(aspect));
  return it == ground_truth.end() ? nullptr : &it->second;
}

Figure figure_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
    throw Error(ErrorKind::InvalidRequest, "figure record needs a string \"id\"");
  }
  Figure f;
  f.id = j["id"].get<std::string>();
  int images = 0;
  if (j.contains("image")) {
    f.image = ImagePath{j["image"].get<std::string>()};
    ++images;
  }
  if (j.contains("image_uri")) {
    f.image = ImageUri{j["image_uri"].get<std::string>()};
    ++images;
  }
  if (j.contains("image_b64")) {
    f.image = ImageBase64{j["image_b64"].get<std::string>()};
    ++images;
  }
  if (images > 1) {
    throw Error(ErrorKind::InvalidRequest, "figure " + f.id + " has more than one image field");
  }
  if (j.contains("ground_truth")) {
    for (const auto& [aspect, concept_id] : j["ground_truth"].items()) {
      f.ground_truth[normalize_label(aspect)] = concept_id.get<std::string>();
    }
  }
  if (j.contains("split")) {
    auto s = parse_split(j["split"].get<std::string>());
    if (!s) throw Error(ErrorKind::InvalidRequest, "figure " + f.id + " has unknown split");
    f.split = *s;
  }
  return f;
}

nlohmann::json to_json(const Figure& figure) {
  nlohmann::json j{{"id", figure.id}};
  if (const auto* p = std::get_if<ImagePath>(&figure.image)) j["image"] = p->path.string();
  if (const auto* u = std::get_if<ImageUri>(&figure.image)) j["image_uri"] = u->uri;
  if (const auto* b = std::get_if<ImageBase64>(&figure.image)) j["image_b64"] = b->data;
  if (!figure.ground_truth.empty()) j["ground_truth"] = figure.ground_truth;
  if (figure.split) j["split"] = to_string(*figure.split);
  return j;
}

std::vector<Figure> read_figures(const std::filesystem::path& path) {
  std::vector<Figure> figures;
  std::set<std::string> seen;
  for (const auto& row : read_jsonl(path)) {
    figures.push_back(figure_from_json(row));
    if (!seen.insert(figures.back().id).second) {
      throw Error(ErrorKind::InvalidRequest, "duplicate figure id " + figures.back().id);
    }
  }
  return figures;
}

}  // namespace figclass
