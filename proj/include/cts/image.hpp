#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cts/tensor.hpp"

namespace cts {

/// RGB image stored as a [3, H, W] tensor with values in [0, 1].
struct Image {
  Tensor pixels;

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
};

/// Per-pixel class ids, row-major.
struct SegMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;

  SegMask() = default;
  SegMask(std::size_t h, std::size_t w, std::uint16_t fill = 0)
      : height(h), width(w), labels(h * w, fill) {}

  std::uint16_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  std::uint16_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }

  bool operator==(const SegMask&) const = default;
};

}  // namespace cts
