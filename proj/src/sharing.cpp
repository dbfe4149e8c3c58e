#include "cts/sharing.hpp"

#include <algorithm>

#include "cts/errors.hpp"
#include "cts/ops.hpp"

namespace cts {

PatchGrid partition(const Image& image, std::size_t patch_size) {
  const std::size_t h = image.height(), w = image.width(), p = patch_size;
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) +
                      " is not divisible by patch size " + std::to_string(p));
  }
  PatchGrid grid;
  grid.grid_h = h / p;
  grid.grid_w = w / p;
  grid.patch_size = p;
  const std::size_t row_len = 3 * p * p;
  grid.patches = Tensor({grid.count(), row_len});
  auto out = grid.patches.mutable_data();
  const auto px = image.pixels.data();
  for (std::size_t gy = 0; gy < grid.grid_h; ++gy)
    for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
      double* row = out.data() + (gy * grid.grid_w + gx) * row_len;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            row[(c * p + y) * p + x] = px[(c * h + gy * p + y) * w + gx * p + x];
    }
  return grid;
}

Image reassemble(const PatchGrid& grid) {
  const std::size_t p = grid.patch_size;
  const std::size_t h = grid.grid_h * p, w = grid.grid_w * p;
  if (grid.patches.shape() != Shape{grid.count(), 3 * p * p}) {
    throw DimensionError("patch matrix shape does not match grid geometry");
  }
  Tensor pixels({3, h, w});
  auto px = pixels.mutable_data();
  const auto in = grid.patches.data();
  for (std::size_t gy = 0; gy < grid.grid_h; ++gy)
    for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
      const double* row = in.data() + (gy * grid.grid_w + gx) * 3 * p * p;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            px[(c * h + gy * p + y) * w + gx * p + x] = row[(c * p + y) * p + x];
    }
  return Image{std::move(pixels)};
}

TokenLayout make_layout(const SharingPolicy& policy, std::size_t grid_h, std::size_t grid_w) {
  if (grid_h % 2 != 0 || grid_w % 2 != 0 || policy.rows != grid_h / 2 ||
      policy.cols != grid_w / 2 || policy.share_grid.size() != policy.rows * policy.cols) {
    throw DimensionError("policy grid " + std::to_string(policy.rows) + "x" +
                         std::to_string(policy.cols) + " does not match patch grid " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  TokenLayout layout;
  layout.grid_h = grid_h;
  layout.grid_w = grid_w;
  layout.index_map.assign(grid_h * grid_w, 0);
  std::vector<std::size_t> superpatch_token(policy.rows * policy.cols, 0);
  for (std::size_t gy = 0; gy < grid_h; ++gy) {
    for (std::size_t gx = 0; gx < grid_w; ++gx) {
      const std::size_t slot = gy * grid_w + gx;
      const std::size_t sp = (gy / 2) * policy.cols + gx / 2;
      if (policy.share_grid[sp]) {
        if (gy % 2 == 0 && gx % 2 == 0) {
          superpatch_token[sp] = layout.slots.size();
          layout.slots.push_back({slot, slot + 1, slot + grid_w, slot + grid_w + 1});
          layout.shared_flags.push_back(1);
        }
        layout.index_map[slot] = superpatch_token[sp];
      } else {
        layout.index_map[slot] = layout.slots.size();
        layout.slots.push_back({slot});
        layout.shared_flags.push_back(0);
      }
    }
  }
  return layout;
}

Tensor token_pixels(const PatchGrid& grid, const TokenLayout& layout) {
  if (layout.grid_h != grid.grid_h || layout.grid_w != grid.grid_w) {
    throw DimensionError("token layout does not match patch grid");
  }
  const std::size_t p = grid.patch_size;
  const std::size_t row_len = 3 * p * p;
  Tensor out({layout.token_count(), row_len});
  auto o = out.mutable_data();
  const auto in = grid.patches.data();
  for (std::size_t t = 0; t < layout.token_count(); ++t) {
    double* dst = o.data() + t * row_len;
    if (!layout.shared_flags[t]) {
      std::copy_n(in.data() + layout.slots[t][0] * row_len, row_len, dst);
      continue;
    }
    // Gather the 2P x 2P superpatch, then downsample it to one patch.
    Tensor block({3, 2 * p, 2 * p});
    auto b = block.mutable_data();
    for (std::size_t q = 0; q < 4; ++q) {
      const double* src = in.data() + layout.slots[t][q] * row_len;
      const std::size_t oy = (q / 2) * p, ox = (q % 2) * p;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            b[(c * 2 * p + oy + y) * 2 * p + ox + x] = src[(c * p + y) * p + x];
    }
    Tensor small = bilinear_resize(block, p, p);
    std::copy_n(small.data().data(), row_len, dst);
  }
  return out;
}

TokenSet share(const PatchGrid& grid, const Tensor& pos_table, const SharingPolicy& policy,
               const Tensor& proj_w, const Tensor& proj_b) {
  TokenLayout layout = make_layout(policy, grid.grid_h, grid.grid_w);
  if (pos_table.rank() != 2 || pos_table.dim(0) != grid.count()) {
    throw DimensionError("position table " + shape_str(pos_table.shape()) + " does not cover " +
                         std::to_string(grid.count()) + " patch slots");
  }
  if (proj_w.rank() != 2 || proj_w.dim(0) != grid.patches.dim(1) ||
      proj_w.dim(1) != pos_table.dim(1)) {
    throw DimensionError("projection " + shape_str(proj_w.shape()) +
                         " does not map patch rows to the embedding width");
  }
  Tensor pixels = token_pixels(grid, layout);
  TokenSet ts;
  ts.tokens = add_bias(matmul(pixels, proj_w), proj_b);
  ts.pos_embeds = pool_rows(pos_table, layout.slots);
  ts.layout = std::move(layout);
  return ts;
}

Tensor unshare_tokens(const Tensor& tokens_out, const TokenLayout& layout) {
  if (tokens_out.rank() != 2 || tokens_out.dim(0) != layout.token_count()) {
    throw DimensionError("expected " + std::to_string(layout.token_count()) +
                         " token rows, got shape " + shape_str(tokens_out.shape()));
  }
  return gather_rows(tokens_out, layout.index_map);
}

Tensor unshare_predictions(const Tensor& preds_out, const TokenLayout& layout) {
  return unshare_tokens(preds_out, layout);
}

Image unshare_pixels(const Tensor& token_pixel_rows, const TokenLayout& layout,
                     std::size_t patch_size) {
  const std::size_t p = patch_size, row_len = 3 * p * p;
  if (token_pixel_rows.shape() != Shape{layout.token_count(), row_len}) {
    throw DimensionError("token pixel rows " + shape_str(token_pixel_rows.shape()) +
                         " do not match the layout");
  }
  PatchGrid grid;
  grid.grid_h = layout.grid_h;
  grid.grid_w = layout.grid_w;
  grid.patch_size = p;
  grid.patches = Tensor({layout.slot_count(), row_len});
  auto out = grid.patches.mutable_data();
  const auto in = token_pixel_rows.data();
  for (std::size_t t = 0; t < layout.token_count(); ++t) {
    const double* src = in.data() + t * row_len;
    if (!layout.shared_flags[t]) {
      std::copy_n(src, row_len, out.data() + layout.slots[t][0] * row_len);
      continue;
    }
    Tensor small({3, p, p}, std::vector<double>(src, src + row_len));
    Tensor big = bilinear_resize(small, 2 * p, 2 * p);
    const auto b = big.data();
    for (std::size_t q = 0; q < 4; ++q) {
      double* dst = out.data() + layout.slots[t][q] * row_len;
      const std::size_t oy = (q / 2) * p, ox = (q % 2) * p;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            dst[(c * p + y) * p + x] = b[(c * 2 * p + oy + y) * 2 * p + ox + x];
    }
  }
  return reassemble(grid);
}

Tensor to_spatial(const Tensor& tokens_full, std::size_t grid_h, std::size_t grid_w) {
  if (tokens_full.rank() != 2 || tokens_full.dim(0) != grid_h * grid_w) {
    throw DimensionError("cannot arrange " + shape_str(tokens_full.shape()) + " on a " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  }
  return reshape(transpose(tokens_full), {tokens_full.dim(1), grid_h, grid_w});
}

}  // namespace cts
