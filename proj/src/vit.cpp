#include "cts/vit.hpp"

#include <cmath>
#include <string>

#include "cts/errors.hpp"
#include "cts/ops.hpp"
#include "cts/rng.hpp"

namespace cts {
namespace {

std::string block_key(std::size_t block, const char* leaf) {
  return "vit.block" + std::to_string(block) + "." + leaf;
}

Tensor linear(const Tensor& x, const ParamStore& params, const std::string& prefix) {
  return add_bias(matmul(x, params.get(prefix + ".w")), params.get(prefix + ".b"));
}

}  // namespace

void ViTConfig::validate() const {
  if (depth == 0 || heads == 0 || embed_dim == 0 || mlp_ratio == 0 || patch_size == 0) {
    throw ConfigError("ViT config values must be >= 1");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (grid_h % 2 != 0 || grid_w % 2 != 0 || grid_h == 0 || grid_w == 0) {
    throw ConfigError("patch grid must have even, non-zero sides");
  }
}

ParamStore init_vit_params(const ViTConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x717ull));
  const std::size_t e = config.embed_dim, hidden = config.mlp_ratio * e;
  const std::size_t patch_dim = 3 * config.patch_size * config.patch_size;
  auto normal = [&](Shape shape) {
    Tensor t(std::move(shape), true);
    for (auto& v : t.mutable_data()) v = 0.02 * rng.normal();
    return t;
  };
  ParamStore p;
  p.add("vit.embed.w", normal({patch_dim, e}));
  p.add("vit.embed.b", Tensor::zeros({e}, true));
  p.add("vit.pos", normal({config.num_patches(), e}));
  for (std::size_t b = 0; b < config.depth; ++b) {
    p.add(block_key(b, "ln1.g"), Tensor::full({e}, 1.0, true));
    p.add(block_key(b, "ln1.b"), Tensor::zeros({e}, true));
    p.add(block_key(b, "qkv.w"), normal({e, 3 * e}));
    p.add(block_key(b, "qkv.b"), Tensor::zeros({3 * e}, true));
    p.add(block_key(b, "proj.w"), normal({e, e}));
    p.add(block_key(b, "proj.b"), Tensor::zeros({e}, true));
    p.add(block_key(b, "ln2.g"), Tensor::full({e}, 1.0, true));
    p.add(block_key(b, "ln2.b"), Tensor::zeros({e}, true));
    p.add(block_key(b, "fc1.w"), normal({e, hidden}));
    p.add(block_key(b, "fc1.b"), Tensor::zeros({hidden}, true));
    p.add(block_key(b, "fc2.w"), normal({hidden, e}));
    p.add(block_key(b, "fc2.b"), Tensor::zeros({e}, true));
  }
  p.add("vit.norm.g", Tensor::full({e}, 1.0, true));
  p.add("vit.norm.b", Tensor::zeros({e}, true));
  return p;
}

Tensor vit_block(const Tensor& x, const ParamStore& params, const ViTConfig& config,
                 std::size_t block, AttentionTrace* trace) {
  const std::size_t e = config.embed_dim, d = config.head_dim();
  if (x.rank() != 2 || x.dim(1) != e) {
    throw DimensionError("ViT block expects [M, " + std::to_string(e) + "] tokens, got " +
                         shape_str(x.shape()));
  }
  const auto key = [&](const char* leaf) { return block_key(block, leaf); };

  Tensor h = layernorm(x, params.get(key("ln1.g")), params.get(key("ln1.b")));
  Tensor qkv = linear(h, params, block_key(block, "qkv"));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Tensor> heads;
  heads.reserve(config.heads);
  for (std::size_t i = 0; i < config.heads; ++i) {
    Tensor q = slice_cols(qkv, i * d, d);
    Tensor k = slice_cols(qkv, e + i * d, d);
    Tensor v = slice_cols(qkv, 2 * e + i * d, d);
    Tensor attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt_d), 1);
    if (trace != nullptr) trace->maps.push_back(attn);
    heads.push_back(matmul(attn, v));
  }
  Tensor attended = concat_cols(heads);
  Tensor y = add(x, linear(attended, params, block_key(block, "proj")));

  Tensor m = layernorm(y, params.get(key("ln2.g")), params.get(key("ln2.b")));
  m = gelu(linear(m, params, block_key(block, "fc1")));
  m = linear(m, params, block_key(block, "fc2"));
  return add(y, m);
}

Tensor vit_encode(const Tensor& x, const ParamStore& params, const ViTConfig& config,
                  AttentionTrace* trace) {
  Tensor h = x;
  for (std::size_t b = 0; b < config.depth; ++b) h = vit_block(h, params, config, b, trace);
  return layernorm(h, params.get("vit.norm.g"), params.get("vit.norm.b"));
}

Tensor vit_forward(const TokenSet& tokens, const ParamStore& params, const ViTConfig& config,
                   AttentionTrace* trace) {
  if (tokens.tokens.rank() != 2 || tokens.tokens.dim(1) != config.embed_dim) {
    throw DimensionError("token width " + shape_str(tokens.tokens.shape()) +
                         " does not match embed_dim " + std::to_string(config.embed_dim));
  }
  return vit_encode(add(tokens.tokens, tokens.pos_embeds), params, config, trace);
}

TokenSet embed_tokens(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                      const ViTConfig& config) {
  PatchGrid grid = partition(image, config.patch_size);
  if (grid.grid_h != config.grid_h || grid.grid_w != config.grid_w) {
    throw DimensionError("image patch grid " + std::to_string(grid.grid_h) + "x" +
                         std::to_string(grid.grid_w) + " does not match the model's " +
                         std::to_string(config.grid_h) + "x" + std::to_string(config.grid_w));
  }
  return share(grid, params.get("vit.pos"), policy, params.get("vit.embed.w"),
               params.get("vit.embed.b"));
}

}  // namespace cts
