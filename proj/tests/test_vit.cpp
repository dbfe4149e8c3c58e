#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cts/errors.hpp"
#include "cts/ops.hpp"
#include "cts/vit.hpp"
#include "support/gradcheck.hpp"

namespace cts {
namespace {

using testing::random_tensor;

ViTConfig small_config() {
  ViTConfig c;
  c.depth = 2;
  c.heads = 2;
  c.embed_dim = 16;
  c.mlp_ratio = 2;
  c.grid_h = 4;
  c.grid_w = 4;
  return c;
}

TEST(ViTConfigTest, Validation) {
  ViTConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.grid_h = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(ViTConfig{}.num_patches(), 256u);
  EXPECT_EQ(ViTConfig{}.head_dim(), 16u);
}

TEST(Init, SeededAndScaled) {
  ViTConfig c = small_config();
  ParamStore a = init_vit_params(c, 3), b = init_vit_params(c, 3), d = init_vit_params(c, 4);
  EXPECT_EQ(a.size(), 5u + 12 * c.depth);  // embed.w/b, pos, norm.g/b + per block
  bool differs = false;
  for (const auto& [name, t] : a) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      ASSERT_EQ(t[i], b.get(name)[i]);
      differs |= t[i] != d.get(name)[i];
    }
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.get("vit.block1.ln2.g")[3], 1.0);
  EXPECT_EQ(a.get("vit.block1.fc1.b")[0], 0.0);
  const Tensor& w = a.get("vit.block0.fc1.w");
  double ss = 0.0;
  for (auto v : w.data()) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(w.numel())), 0.02, 0.004);
}

TEST(Forward, PreservesTokenCountAndStaysFinite) {
  ViTConfig c = small_config();
  ParamStore p = init_vit_params(c, 1);
  Rng rng(2);
  for (std::size_t m : {1, 4, 7, 16}) {
    Tensor x = random_tensor({m, 16}, rng);
    // Unit-norm rows.
    auto d = x.mutable_data();
    for (std::size_t r = 0; r < m; ++r) {
      double n = 0.0;
      for (std::size_t e = 0; e < 16; ++e) n += d[r * 16 + e] * d[r * 16 + e];
      for (std::size_t e = 0; e < 16; ++e) d[r * 16 + e] /= std::sqrt(n);
    }
    Tensor y = vit_encode(x, p, c);
    EXPECT_EQ(y.shape(), (Shape{m, 16}));
    for (auto v : y.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Forward, AttentionRowsSumToOne) {
  ViTConfig c = small_config();
  ParamStore p = init_vit_params(c, 5);
  Rng rng(6);
  AttentionTrace trace;
  vit_encode(random_tensor({9, 16}, rng), p, c, &trace);
  ASSERT_EQ(trace.maps.size(), c.depth * c.heads);
  for (const auto& a : trace.maps) {
    ASSERT_EQ(a.shape(), (Shape{9, 9}));
    for (std::size_t r = 0; r < 9; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 9; ++j) s += a[r * 9 + j];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Forward, PermutationEquivariantWithoutPositions) {
  ViTConfig c = small_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParamStore p = init_vit_params(c, seed);
    Rng rng(mix_seed(seed, 9));
    // Larger weights than init so the check is not trivially near-linear.
    for (auto& [name, t] : p)
      if (name.find(".w") != std::string::npos)
        for (auto& v : t.mutable_data()) v *= 10.0;
    const std::size_t m = 11;
    Tensor x = random_tensor({m, 16}, rng);
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = m - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    Tensor y = vit_encode(x, p, c);
    Tensor yp = vit_encode(gather_rows(x, perm), p, c);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t e = 0; e < 16; ++e)
        EXPECT_NEAR(yp[r * 16 + e], y[perm[r] * 16 + e], 1e-10);
  }
}

TEST(Forward, DimensionMismatch) {
  ViTConfig c = small_config();
  ParamStore p = init_vit_params(c, 1);
  EXPECT_THROW(vit_encode(Tensor({3, 8}), p, c), DimensionError);
  TokenSet t;
  t.tokens = Tensor({3, 8});
  t.pos_embeds = Tensor({3, 8});
  EXPECT_THROW(vit_forward(t, p, c), DimensionError);
}

TEST(EmbedTokens, UsesSharedLayout) {
  ViTConfig c = small_config();
  ParamStore p = init_vit_params(c, 1);
  Rng rng(3);
  Image img{random_tensor({3, 16, 16}, rng, 0.0, 1.0)};
  std::vector<std::size_t> shared{0, 3};
  TokenSet t = embed_tokens(img, SharingPolicy::from_indices(2, 2, shared), p, c);
  EXPECT_EQ(t.size(), 16u - 6);
  Image wrong{Tensor({3, 32, 16})};
  EXPECT_THROW(embed_tokens(wrong, SharingPolicy::none(4, 2), p, c), DimensionError);
}

TEST(BlockGradient, CentralDifferenceTenSeeds) {
  auto c = testing::vit_block_case();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(seed, 0xb10c));
    auto r = testing::grad_check(c.fn, c.inputs(rng), rng);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " at " << r.worst;
  }
}

}  // namespace
}  // namespace cts
