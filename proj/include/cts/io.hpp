#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cts/image.hpp"
#include "cts/tensor.hpp"

// Binary formats, all little-endian:
//
//   CTSF  "CTSF" | u32 version=1 | u32 rank | rank x u32 dims | numel x f64
//   CTSM  "CTSM" | u32 version=1 | u32 H | u32 W | H*W x u16 class ids
//
// Named checkpoints are a concatenation of CTSF records plus a sidecar
// `<path>.index` text file with one `name<TAB>offset` line per tensor.
namespace cts::io {

inline constexpr std::uint32_t kFormatVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t);
// `base_offset` is only used to report absolute positions in errors.
Tensor read_tensor(std::istream& is, std::size_t base_offset = 0);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

void write_mask(std::ostream& os, const SegMask& mask);
SegMask read_mask(std::istream& is);
void write_mask(const std::filesystem::path& path, const SegMask& mask);
SegMask read_mask(const std::filesystem::path& path);

void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_checkpoint(const std::filesystem::path& path);

}  // namespace cts::io
