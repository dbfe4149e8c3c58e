#include "cts/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cts/errors.hpp"

namespace cts::io {
namespace {

constexpr std::size_t kMaxElements = std::size_t{1} << 32;

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b.data(), b.size());
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFFu), static_cast<char>((v >> 8) & 0xFFu)};
  os.write(b, 2);
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  os.write(b.data(), b.size());
}

// Reads from a stream while tracking the absolute byte offset for diagnostics.
class Reader {
 public:
  Reader(std::istream& is, std::size_t base) : is_(is), offset_(base) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      throw FormatError(std::string("truncated input while reading ") + what + ": needed " +
                            std::to_string(n) + " bytes, got " + std::to_string(got),
                        offset_ + got);
    }
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
           std::uint32_t{b[3]} << 24;
  }

  std::uint16_t u16(const char* what) {
    unsigned char b[2];
    bytes(reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  double f64(const char* what) {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8, what);
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
    return std::bit_cast<double>(bits);
  }

  void magic(const char (&expected)[5]) {
    const std::size_t at = offset_;
    char got[4];
    bytes(got, 4, "magic");
    if (std::memcmp(got, expected, 4) != 0) {
      throw FormatError(std::string("bad magic: expected '") + expected + "', found '" +
                            printable(got) + "'",
                        at);
    }
  }

  void version() {
    const std::size_t at = offset_;
    const auto v = u32("version");
    if (v != kFormatVersion) {
      throw FormatError("unsupported format version " + std::to_string(v) + " (expected " +
                            std::to_string(kFormatVersion) + ")",
                        at);
    }
  }

  std::size_t offset() const { return offset_; }

 private:
  static std::string printable(const char* b) {
    std::string s;
    for (int i = 0; i < 4; ++i) {
      const auto c = static_cast<unsigned char>(b[i]);
      s += (c >= 32 && c < 127) ? static_cast<char>(c) : '?';
    }
    return s;
  }

  std::istream& is_;
  std::size_t offset_;
};

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  return out;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("CTSF", 4);
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(os, v);
}

Tensor read_tensor(std::istream& is, std::size_t base_offset) {
  Reader r(is, base_offset);
  r.magic("CTSF");
  r.version();
  const std::size_t rank_at = r.offset();
  const auto rank = r.u32("rank");
  if (rank > 16) throw FormatError("implausible tensor rank " + std::to_string(rank), rank_at);
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    const std::size_t at = r.offset();
    d = r.u32("dimension");
    n *= d;
    if (n > kMaxElements) throw FormatError("tensor too large", at);
  }
  std::vector<double> data(n);
  for (auto& v : data) v = r.f64("tensor values");
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  auto out = open_out(path);
  write_tensor(out, t);
}

Tensor read_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tensor(in);
}

void write_mask(std::ostream& os, const SegMask& mask) {
  os.write("CTSM", 4);
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(mask.height));
  put_u32(os, static_cast<std::uint32_t>(mask.width));
  for (auto v : mask.labels) put_u16(os, v);
}

SegMask read_mask(std::istream& is) {
  Reader r(is, 0);
  r.magic("CTSM");
  r.version();
  const std::size_t at = r.offset();
  const auto h = r.u32("height");
  const auto w = r.u32("width");
  if (std::size_t{h} * w > kMaxElements) throw FormatError("mask too large", at);
  SegMask mask(h, w);
  for (auto& v : mask.labels) v = r.u16("class ids");
  return mask;
}

void write_mask(const std::filesystem::path& path, const SegMask& mask) {
  auto out = open_out(path);
  write_mask(out, mask);
}

SegMask read_mask(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_mask(in);
}

void write_image(const std::filesystem::path& path, const Image& image) {
  write_tensor(path, image.pixels);
}

Image read_image(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw FormatError("image tensor must have shape [3,H,W], got " + shape_str(t.shape()), 0);
  }
  return Image{std::move(t)};
}

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  auto out = open_out(path);
  std::ofstream index(path.string() + ".index", std::ios::trunc);
  if (!index) throw std::runtime_error("cannot create " + path.string() + ".index");
  for (const auto& [name, t] : tensors) {
    if (name.find_first_of("\t\n") != std::string::npos) {
      throw UsageError("checkpoint tensor name contains tab or newline: " + name);
    }
    index << name << '\t' << static_cast<std::size_t>(out.tellp()) << '\n';
    write_tensor(out, t);
  }
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ifstream index(path.string() + ".index");
  if (!index) throw std::runtime_error("cannot open " + path.string() + ".index");
  NamedTensors out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("index line " + std::to_string(line_no) + " lacks a tab", 0);
    }
    std::size_t offset = 0;
    try {
      offset = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw FormatError("index line " + std::to_string(line_no) + " has a bad offset", 0);
    }
    in.clear();
    in.seekg(static_cast<std::streamoff>(offset));
    out.emplace_back(line.substr(0, tab), read_tensor(in, offset));
  }
  return out;
}

}  // namespace cts::io
