#pragma once

#include <cstdint>
#include <vector>

#include "cts/params.hpp"
#include "cts/sharing.hpp"

namespace cts {

struct ViTConfig {
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t embed_dim = 64;
  std::size_t mlp_ratio = 2;
  std::size_t patch_size = 4;
  // Patch grid of the input resolution; sizes the position table.
  std::size_t grid_h = 16;
  std::size_t grid_w = 16;

  std::size_t num_patches() const { return grid_h * grid_w; }
  std::size_t head_dim() const { return embed_dim / heads; }
  void validate() const;
};

// Attention probabilities captured during a forward pass, one [M, M] tensor
// per (block, head) in that order.
struct AttentionTrace {
  std::vector<Tensor> maps;
};

/// Patch embedding, position table, pre-norm blocks and a final norm.
/// Weights ~ N(0, 0.02^2), biases zero, layer norms at identity.
ParamStore init_vit_params(const ViTConfig& config, std::uint64_t seed);

/// One pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.)).
Tensor vit_block(const Tensor& x, const ParamStore& params, const ViTConfig& config,
                 std::size_t block, AttentionTrace* trace = nullptr);

/// All blocks plus the final norm over an [M, E] token matrix.
Tensor vit_encode(const Tensor& x, const ParamStore& params, const ViTConfig& config,
                  AttentionTrace* trace = nullptr);

/// L' = f(T'): adds position embeddings and encodes. Returns [M, E].
Tensor vit_forward(const TokenSet& tokens, const ParamStore& params, const ViTConfig& config,
                   AttentionTrace* trace = nullptr);

/// Partition + t_s with this backbone's projection and position table.
TokenSet embed_tokens(const Image& image, const SharingPolicy& policy, const ParamStore& params,
                      const ViTConfig& config);

}  // namespace cts
