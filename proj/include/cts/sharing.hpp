#pragma once

#include <cstdint>
#include <vector>

#include "cts/image.hpp"
#include "cts/policy.hpp"
#include "cts/tensor.hpp"

namespace cts {

/// An image cut into N = (H/P)(W/P) patches, raster order. Each row of
/// `patches` holds one patch as [3, P, P] flattened.
struct PatchGrid {
  Tensor patches;  // [N, 3*P*P]
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t patch_size = 0;

  std::size_t count() const { return grid_h * grid_w; }
};

PatchGrid partition(const Image& image, std::size_t patch_size);
Image reassemble(const PatchGrid& grid);

/// Token bookkeeping for one policy: token t covers the patch slots in
/// `slots[t]` (4 for a shared superpatch, 1 otherwise). Tokens are numbered in
/// raster order of their first slot.
struct TokenLayout {
  std::vector<std::size_t> index_map;  // slot -> token, size N
  std::vector<std::uint8_t> shared_flags;
  std::vector<std::vector<std::size_t>> slots;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  std::size_t token_count() const { return slots.size(); }
  std::size_t slot_count() const { return index_map.size(); }
};

TokenLayout make_layout(const SharingPolicy& policy, std::size_t grid_h, std::size_t grid_w);

/// The reduced token set T' that enters the backbone.
struct TokenSet {
  Tensor tokens;      // [M, E]
  Tensor pos_embeds;  // [M, E]
  TokenLayout layout;

  std::size_t size() const { return layout.token_count(); }
};

/// Pixel rows for every token: unshared patches verbatim, shared superpatches
/// bilinearly downsampled from 2P x 2P to P x P. Shape [M, 3*P*P].
Tensor token_pixels(const PatchGrid& grid, const TokenLayout& layout);

/// t_s: projects every token's pixels with the one patch projection and gives
/// shared tokens the mean of their four slot position embeddings.
TokenSet share(const PatchGrid& grid, const Tensor& pos_table, const SharingPolicy& policy,
               const Tensor& proj_w, const Tensor& proj_b);

/// t_u for token features: shared rows are replicated to their four slots,
/// output in raster slot order, [N, D].
Tensor unshare_tokens(const Tensor& tokens_out, const TokenLayout& layout);

/// t_u for per-token class scores, [M, C] -> [N, C].
Tensor unshare_predictions(const Tensor& preds_out, const TokenLayout& layout);

/// Pixel-space t_u: shared rows are bilinearly upsampled back to 2P x 2P.
Image unshare_pixels(const Tensor& token_pixel_rows, const TokenLayout& layout,
                     std::size_t patch_size);

/// Raster reshape [N, E] -> [E, H_L, W_L].
Tensor to_spatial(const Tensor& tokens_full, std::size_t grid_h, std::size_t grid_w);

}  // namespace cts
