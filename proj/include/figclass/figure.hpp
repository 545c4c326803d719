#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace figclass {

enum class Split { train, valid, test };

std::string_view to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view text) noexcept;

struct ImagePath {
  std::filesystem::path path;
};
struct ImageUri {
  std::string uri;
};
struct ImageBase64 {
  std::string data;
};
using ImageRef = std::variant<std::monostate, ImagePath, ImageUri, ImageBase64>;

/// A figure to classify: an image reference plus optional per-aspect ground
/// truth (aspect name -> concept id).
struct Figure {
  std::string id;
  ImageRef image;
  std::map<std::string, std::string> ground_truth;
  std::optional<Split> split;

  const std::string* truth_for(std::string_view aspect) const;
};

// JSONL record: {"id", "image"? | "image_uri"? | "image_b64"?, "ground_truth"?, "split"?}
Figure figure_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Figure& figure);
std::vector<Figure> read_figures(const std::filesystem::path& path);

}  // namespace figclass
