#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace figclass {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
/// Lower-case, trim, and collapse internal whitespace runs to one space.
std::string normalize_label(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool ends_with(std::string_view s, std::string_view suffix);

// 64-bit FNV-1a. Stable across platforms and languages; used wherever a
// decision must be reproducible by an out-of-process peer (oracle, hash
// embedding).
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 generator. Chosen over the std engines for the oracle and hash
/// embeddings because its output is trivial to mirror bit-for-bit in other
/// languages.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t operator()();
  /// Uniform double in [0, 1) from the top 53 bits.
  double next_unit();
  /// Uniform index in [0, n) by modulo; n must be non-zero.
  std::size_t next_index(std::size_t n);

  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

 private:
  std::uint64_t state_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// libstdc++'s distributions are implementation-defined; these keep seeded
// sampling identical across standard libraries.
template <class Urbg>
std::size_t uniform_index(Urbg& g, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % bound);
  std::uint64_t x;
  do {
    x = static_cast<std::uint64_t>(g());
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

template <class T, class Urbg>
void seeded_shuffle(std::vector<T>& items, Urbg& g) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(g, i)]);
  }
}

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Git blob object id: SHA-1 over "blob <size>\0<contents>".
std::string git_blob_hash(std::string_view contents);
std::string to_base64(std::string_view bytes);

}  // namespace figclass
