#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "cts/data.hpp"
#include "cts/errors.hpp"
#include "cts/rng.hpp"

namespace cts {
namespace {

namespace fs = std::filesystem;

// Distinct-label count over every superpatch, written independently of the
// library's scan.
std::pair<std::size_t, std::size_t> brute_single_class(const SegMask& m, std::size_t p) {
  const std::size_t sp = 2 * p;
  std::size_t single = 0, total = 0;
  for (std::size_t y0 = 0; y0 < m.height; y0 += sp)
    for (std::size_t x0 = 0; x0 < m.width; x0 += sp) {
      std::set<std::uint16_t> seen;
      for (std::size_t y = y0; y < y0 + sp; ++y)
        for (std::size_t x = x0; x < x0 + sp; ++x) seen.insert(m.labels[y * m.width + x]);
      single += seen.size() == 1;
      ++total;
    }
  return {single, total};
}

TEST(Scene, ZeroShapesIsAllBackground) {
  SceneSpec s;
  s.num_shapes = 0;
  auto [img, mask] = generate_scene(s);
  for (auto l : mask.labels) EXPECT_EQ(l, 0);
  auto [single, total] = count_single_class(mask, s.patch_size);
  EXPECT_EQ(single, total);
  EXPECT_EQ(total, 64u);
}

TEST(Scene, DeterministicInSeed) {
  SceneSpec s;
  s.seed = 42;
  auto [a_img, a_mask] = generate_scene(s);
  auto [b_img, b_mask] = generate_scene(s);
  EXPECT_EQ(a_mask, b_mask);
  for (std::size_t i = 0; i < a_img.pixels.numel(); ++i) ASSERT_EQ(a_img.pixels[i], b_img.pixels[i]);
  s.seed = 43;
  auto [c_img, c_mask] = generate_scene(s);
  EXPECT_FALSE(c_mask == a_mask);
}

TEST(Scene, FrozenSingleClassFractionSeed7) {
  SceneSpec s;
  s.seed = 7;
  s.num_shapes = 6;
  auto [img, mask] = generate_scene(s);
  auto [single, total] = brute_single_class(mask, 4);
  EXPECT_EQ(single, 36u);
  EXPECT_EQ(total, 64u);
  EXPECT_EQ(count_single_class(mask, 4), std::make_pair(single, total));
}

TEST(Scene, PixelsInRangeAndLabelsValid) {
  SceneSpec s;
  s.seed = 3;
  s.num_classes = 3;
  auto [img, mask] = generate_scene(s);
  EXPECT_EQ(img.pixels.shape(), (Shape{3, 64, 64}));
  for (auto v : img.pixels.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (auto l : mask.labels) EXPECT_LT(l, 3);
}

TEST(Scene, ColorFollowsClassWithinNoise) {
  SceneSpec s;
  s.seed = 9;
  s.noise_amplitude = 0.05;
  auto [img, mask] = generate_scene(s);
  const std::size_t hw = 64 * 64;
  for (std::size_t i = 0; i < hw; ++i) {
    auto base = class_color(mask.labels[i]);
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_LE(std::abs(img.pixels[c * hw + i] - base[c]), 0.05 + 1e-12);
    }
  }
}

TEST(Scene, InvalidDimsAreConfigErrors) {
  SceneSpec s;
  s.height = 60;  // not a multiple of 2P = 8
  EXPECT_THROW(generate_scene(s), ConfigError);
  s = SceneSpec{};
  s.num_classes = 1;
  EXPECT_THROW(generate_scene(s), ConfigError);
  s = SceneSpec{};
  s.num_shapes = -1;
  EXPECT_THROW(generate_scene(s), ConfigError);
}

TEST(Stats, AllZeroMaskLandsInTopBin) {
  SegMask m(16, 16);
  std::vector<SegMask> masks{m};
  auto h = superpatch_stats(masks, 4);
  EXPECT_EQ(h.counts[kHistogramBins - 1], 1u);
  EXPECT_EQ(h.total(), 1u);
  EXPECT_EQ(h.percentages[0], 100.0);
}

TEST(Stats, BoundaryAlignedHalfPlanesAreAllSingle) {
  SegMask m(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 16; x < 32; ++x) m.labels[y * 32 + x] = 1;
  auto [single, total] = count_single_class(m, 4);
  EXPECT_EQ(single, total);
  // Off by one pixel: the column of superpatches at the seam becomes mixed.
  for (std::size_t y = 0; y < 32; ++y) m.labels[y * 32 + 15] = 1;
  EXPECT_EQ(count_single_class(m, 4).first, total - 4);
}

TEST(Stats, BinEdges) {
  EXPECT_EQ(histogram_bin(0, 64), 0u);
  EXPECT_EQ(histogram_bin(3, 64), 0u);   // 4.69%
  EXPECT_EQ(histogram_bin(4, 64), 1u);   // 6.25%
  EXPECT_EQ(histogram_bin(16, 64), 5u);  // exactly 25%
  EXPECT_EQ(histogram_bin(63, 64), 19u);
  EXPECT_EQ(histogram_bin(64, 64), 19u);
}

TEST(Stats, HistogramMatchesBruteScanOn50Scenes) {
  DatasetSpec spec;
  spec.count = 50;
  spec.base_seed = 77;
  Dataset d = synthesize(spec);
  auto h = superpatch_stats(d.masks, 4);
  std::array<std::size_t, kHistogramBins> want{};
  for (const auto& m : d.masks) {
    auto [single, total] = brute_single_class(m, 4);
    const double pct = 100.0 * static_cast<double>(single) / static_cast<double>(total);
    std::size_t bin = 0;
    while (bin + 1 < kHistogramBins && pct >= 5.0 * static_cast<double>(bin + 1)) ++bin;
    ++want[bin];
  }
  EXPECT_EQ(h.counts, want);
  EXPECT_EQ(h.total(), 50u);
}

TEST(Stats, IndivisibleMaskIsConfigError) {
  SegMask m(12, 16);
  EXPECT_THROW(count_single_class(m, 4), ConfigError);
}

TEST(DatasetTest, SeedsAndShapeCounts) {
  DatasetSpec spec;
  spec.count = 30;
  Dataset d = synthesize(spec);
  ASSERT_EQ(d.size(), 30u);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.scenes[i].seed, mix_seed(spec.base_seed, i));
    EXPECT_GE(d.scenes[i].num_shapes, spec.min_shapes);
    EXPECT_LE(d.scenes[i].num_shapes, spec.max_shapes);
    seeds.insert(d.scenes[i].seed);
  }
  EXPECT_EQ(seeds.size(), 30u);
  Dataset tail = d.slice(25, 30);
  EXPECT_EQ(tail.size(), 5u);
  EXPECT_EQ(tail.masks[0], d.masks[25]);
}

TEST(DatasetTest, WriteReadRoundTrip) {
  DatasetSpec spec;
  spec.count = 4;
  spec.noise_amplitude = 0.1;
  Dataset d = synthesize(spec);
  fs::path root = fs::temp_directory_path() / "cts_test_dataset";
  fs::remove_all(root);
  write_dataset(root, d);
  EXPECT_TRUE(fs::exists(root / "manifest.txt"));
  Dataset back = read_dataset(root);
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back.masks[i], d.masks[i]);
    EXPECT_EQ(back.scenes[i].seed, d.scenes[i].seed);
    EXPECT_EQ(back.scenes[i].noise_amplitude, d.scenes[i].noise_amplitude);
    for (std::size_t j = 0; j < d.images[i].pixels.numel(); ++j)
      ASSERT_EQ(back.images[i].pixels[j], d.images[i].pixels[j]);
  }
}

TEST(DatasetTest, MissingRootFails) {
  EXPECT_ANY_THROW(read_dataset("/nonexistent/cts/data"));
}

}  // namespace
}  // namespace cts
