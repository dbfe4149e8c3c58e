#include "cts/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cts/errors.hpp"
#include "cts/io.hpp"
#include "cts/rng.hpp"

namespace cts {
namespace {

void validate(const SceneSpec& spec) {
  if (spec.num_classes < 2 || spec.num_classes > 65535) {
    throw ConfigError("num_classes must be in [2, 65535], got " + std::to_string(spec.num_classes));
  }
  if (spec.patch_size == 0) throw ConfigError("patch_size must be >= 1");
  const std::size_t sp = 2 * spec.patch_size;
  if (spec.height == 0 || spec.width == 0 || spec.height % sp != 0 || spec.width % sp != 0) {
    throw ConfigError("image " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                      " is not a multiple of the superpatch size " + std::to_string(sp));
  }
  if (spec.num_shapes < 0) throw ConfigError("num_shapes must be >= 0");
  if (!(spec.noise_amplitude >= 0.0)) throw ConfigError("noise_amplitude must be >= 0");
}

}  // namespace

std::array<double, 3> class_color(int class_id) {
  static constexpr std::array<std::array<double, 3>, 8> kPalette{{
      {0.55, 0.55, 0.55},
      {0.90, 0.20, 0.15},
      {0.15, 0.70, 0.25},
      {0.20, 0.30, 0.90},
      {0.95, 0.85, 0.20},
      {0.75, 0.25, 0.80},
      {0.15, 0.85, 0.85},
      {0.10, 0.10, 0.10},
  }};
  if (class_id >= 0 && class_id < static_cast<int>(kPalette.size())) return kPalette[class_id];
  Rng rng(mix_seed(0xC0105ull, static_cast<std::uint64_t>(class_id)));
  return {rng.uniform(), rng.uniform(), rng.uniform()};
}

std::pair<Image, SegMask> generate_scene(const SceneSpec& spec) {
  validate(spec);
  const std::size_t h = spec.height, w = spec.width;
  Rng rng(spec.seed);
  SegMask mask(h, w, 0);

  const double min_half = static_cast<double>(std::min(h, w)) / 16.0;
  const double max_half = static_cast<double>(std::min(h, w)) / 4.0;
  for (int s = 0; s < spec.num_shapes; ++s) {
    const auto cls = static_cast<std::uint16_t>(1 + rng.below(spec.num_classes - 1));
    const bool ellipse = rng.below(2) == 1;
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double ry = rng.uniform(min_half, max_half);
    const double rx = rng.uniform(min_half, max_half);
    for (std::size_t y = 0; y < h; ++y) {
      const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) mask.at(y, x) = cls;
      }
    }
  }

  Tensor pixels({3, h, w});
  auto px = pixels.mutable_data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto base = class_color(mask.at(y, x));
      for (std::size_t c = 0; c < 3; ++c) {
        const double noise = rng.uniform(-spec.noise_amplitude, spec.noise_amplitude);
        px[(c * h + y) * w + x] = std::clamp(base[c] + noise, 0.0, 1.0);
      }
    }
  }
  return {Image{std::move(pixels)}, std::move(mask)};
}

std::size_t SuperpatchHistogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::pair<std::size_t, std::size_t> count_single_class(const SegMask& mask,
                                                       std::size_t patch_size) {
  const std::size_t sp = 2 * patch_size;
  if (patch_size == 0 || mask.height % sp != 0 || mask.width % sp != 0 || mask.height == 0 ||
      mask.width == 0) {
    throw ConfigError("mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                      " is not divisible into " + std::to_string(sp) + "px superpatches");
  }
  std::size_t single = 0, total = 0;
  for (std::size_t by = 0; by < mask.height; by += sp) {
    for (std::size_t bx = 0; bx < mask.width; bx += sp) {
      const auto first = mask.at(by, bx);
      bool uniform = true;
      for (std::size_t y = by; y < by + sp && uniform; ++y)
        for (std::size_t x = bx; x < bx + sp; ++x)
          if (mask.at(y, x) != first) {
            uniform = false;
            break;
          }
      single += uniform ? 1 : 0;
      ++total;
    }
  }
  return {single, total};
}

std::size_t histogram_bin(std::size_t single, std::size_t total) {
  return std::min(kHistogramBins * single / total, kHistogramBins - 1);
}

SuperpatchHistogram superpatch_stats(std::span<const SegMask> masks, std::size_t patch_size) {
  SuperpatchHistogram hist;
  for (const auto& m : masks) {
    const auto [single, total] = count_single_class(m, patch_size);
    hist.counts[histogram_bin(single, total)] += 1;
    hist.percentages.push_back(100.0 * static_cast<double>(single) / static_cast<double>(total));
  }
  return hist;
}

SceneSpec DatasetSpec::scene(std::size_t index) const {
  SceneSpec s;
  s.seed = mix_seed(base_seed, index);
  s.height = height;
  s.width = width;
  s.num_classes = num_classes;
  Rng shapes(mix_seed(s.seed, 0x5A5Eull));
  s.num_shapes = min_shapes + static_cast<int>(shapes.below(
                                  static_cast<std::uint64_t>(max_shapes - min_shapes + 1)));
  s.noise_amplitude = noise_amplitude;
  s.patch_size = patch_size;
  return s;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw UsageError("dataset slice out of range");
  Dataset out;
  out.scenes.assign(scenes.begin() + begin, scenes.begin() + end);
  out.images.assign(images.begin() + begin, images.begin() + end);
  out.masks.assign(masks.begin() + begin, masks.begin() + end);
  return out;
}

Dataset synthesize(const DatasetSpec& spec) {
  if (spec.count == 0) throw ConfigError("dataset count must be >= 1");
  if (spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes) {
    throw ConfigError("shape range must satisfy 0 <= min_shapes <= max_shapes");
  }
  Dataset ds;
  for (std::size_t i = 0; i < spec.count; ++i) {
    ds.scenes.push_back(spec.scene(i));
    auto [img, mask] = generate_scene(ds.scenes.back());
    ds.images.push_back(std::move(img));
    ds.masks.push_back(std::move(mask));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& root, const Dataset& dataset) {
  if (dataset.size() == 0) throw ConfigError("refusing to write an empty dataset");
  std::filesystem::create_directories(root);
  const auto& first = dataset.scenes.front();
  std::ostringstream manifest;
  manifest.precision(17);
  manifest << "count=" << dataset.size() << '\n'
           << "height=" << first.height << '\n'
           << "width=" << first.width << '\n'
           << "num_classes=" << first.num_classes << '\n'
           << "noise_amplitude=" << first.noise_amplitude << '\n'
           << "patch_size=" << first.patch_size << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    manifest << "seed." << i << '=' << dataset.scenes[i].seed << '\n'
             << "num_shapes." << i << '=' << dataset.scenes[i].num_shapes << '\n';
    io::write_image(root / ("img_" + std::to_string(i) + ".ctsf"), dataset.images[i]);
    io::write_mask(root / ("mask_" + std::to_string(i) + ".ctsm"), dataset.masks[i]);
  }
  std::ofstream out(root / "manifest.txt", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest under " + root.string());
  out << manifest.str();
}

Dataset read_dataset(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.txt");
  if (!in) throw ConfigError("no manifest.txt under " + root.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("manifest missing key " + key);
    return it->second;
  };
  try {
    const std::size_t count = std::stoull(need("count"));
    SceneSpec common;
    common.height = std::stoull(need("height"));
    common.width = std::stoull(need("width"));
    common.num_classes = std::stoi(need("num_classes"));
    common.noise_amplitude = std::stod(need("noise_amplitude"));
    common.patch_size = std::stoull(need("patch_size"));

    Dataset ds;
    for (std::size_t i = 0; i < count; ++i) {
      SceneSpec s = common;
      s.seed = std::stoull(need("seed." + std::to_string(i)));
      s.num_shapes = std::stoi(need("num_shapes." + std::to_string(i)));
      ds.scenes.push_back(s);
      Image img = io::read_image(root / ("img_" + std::to_string(i) + ".ctsf"));
      SegMask mask = io::read_mask(root / ("mask_" + std::to_string(i) + ".ctsm"));
      if (img.height() != s.height || img.width() != s.width || mask.height != s.height ||
          mask.width != s.width) {
        throw ConfigError("scene " + std::to_string(i) + " does not match manifest dimensions");
      }
      for (auto v : mask.labels) {
        if (v >= s.num_classes) {
          throw ConfigError("scene " + std::to_string(i) + " has class id " + std::to_string(v) +
                            " >= num_classes");
        }
      }
      ds.images.push_back(std::move(img));
      ds.masks.push_back(std::move(mask));
    }
    return ds;
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw;
    throw ConfigError(std::string("malformed manifest value: ") + e.what());
  }
}

}  // namespace cts
