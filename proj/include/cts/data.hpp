#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "cts/image.hpp"

namespace cts {

/// Everything that determines one synthetic scene.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  int num_classes = 5;
  int num_shapes = 6;
  double noise_amplitude = 0.05;
  std::size_t patch_size = 4;
};

/// Renders background class 0 plus `num_shapes` rectangles/ellipses of classes
/// 1..C-1. Pixel colors are a fixed per-class base color plus uniform noise.
/// Pure function of `spec`.
std::pair<Image, SegMask> generate_scene(const SceneSpec& spec);

// Base color of a class; identical across scenes.
std::array<double, 3> class_color(int class_id);

inline constexpr std::size_t kHistogramBins = 20;  // 5% wide

struct SuperpatchHistogram {
  std::array<std::size_t, kHistogramBins> counts{};
  std::vector<double> percentages;  // per image, in [0, 100]

  std::size_t total() const;
};

// Number of single-class superpatches and total superpatches of one mask.
std::pair<std::size_t, std::size_t> count_single_class(const SegMask& mask, std::size_t patch_size);

/// Histogram over images of the percentage of single-class superpatches.
/// Bin b covers [5b, 5b+5) percent; 100% falls in the last bin.
SuperpatchHistogram superpatch_stats(std::span<const SegMask> masks, std::size_t patch_size);

std::size_t histogram_bin(std::size_t single, std::size_t total);

/// Seeded collection of scenes; scene i uses seed `mix_seed(base_seed, i)`
/// and a shape count drawn from [min_shapes, max_shapes].
struct DatasetSpec {
  std::size_t count = 200;
  std::uint64_t base_seed = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  int num_classes = 5;
  int min_shapes = 1;
  int max_shapes = 8;
  double noise_amplitude = 0.05;
  std::size_t patch_size = 4;

  SceneSpec scene(std::size_t index) const;
};

struct Dataset {
  std::vector<SceneSpec> scenes;
  std::vector<Image> images;
  std::vector<SegMask> masks;

  std::size_t size() const { return images.size(); }
  int num_classes() const { return scenes.empty() ? 0 : scenes.front().num_classes; }
  std::size_t patch_size() const { return scenes.empty() ? 0 : scenes.front().patch_size; }
  Dataset slice(std::size_t begin, std::size_t end) const;
};

Dataset synthesize(const DatasetSpec& spec);

// Writes img_<i>.ctsf, mask_<i>.ctsm and manifest.txt under `root`.
void write_dataset(const std::filesystem::path& root, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& root);

}  // namespace cts
