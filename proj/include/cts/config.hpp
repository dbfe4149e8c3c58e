#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cts/data.hpp"
#include "cts/policy.hpp"
#include "cts/segmenter.hpp"

namespace cts {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// `key=value` lines; blank lines and `#` comments skipped. Duplicate keys and
// lines without '=' raise ConfigError naming the line.
KeyValues parse_key_values(std::istream& in);

/// Everything one experiment needs, read from a `key=value` file.
/// Unknown keys are rejected.
struct ExperimentConfig {
  std::string name = "desk";
  std::filesystem::path data_root = "data/desk";
  std::filesystem::path out_dir = "runs";
  DatasetSpec data;
  std::size_t val_count = 50;
  ViTConfig vit;
  DecoderKind decoder = DecoderKind::Linear;
  std::size_t decoder_hidden = 32;
  PolicyNetConfig policy;
  SegTrainConfig seg;
  std::vector<std::size_t> schedule{0, 8, 10, 20, 26, 33, 39, 48, 56, 64};
  std::uint64_t seed = 0;

  static ExperimentConfig parse(std::istream& in);
  static ExperimentConfig from_file(const std::filesystem::path& path);

  /// Resolved configuration in the same `key=value` syntax parse() accepts.
  std::string to_text() const;

  SegConfig seg_config() const;
  // Derived fields (patch grid, policy patch size) follow data/vit settings.
  void finalize();
};

std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace cts
