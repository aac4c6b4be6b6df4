#include "la2/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace la2 {

namespace io {

namespace {

template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw FormatError("unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }

void write_f64(std::ostream& os, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double v : values) put_le(os, std::bit_cast<std::uint64_t>(v));
  }
}

std::uint32_t read_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get_le<std::uint64_t>(is); }

void read_f64(std::istream& is, std::span<double> out) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()))) {
      throw FormatError("unexpected end of file in value block");
    }
  } else {
    for (double& v : out) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
  }
}

void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4] = {};
  if (!is.read(buf, 4)) throw FormatError("file too short for magic bytes");
  if (std::memcmp(buf, magic, 4) != 0) throw FormatError(std::string("bad magic, expected ") + magic);
}

}  // namespace io

void write_tensor(const Tensor& t, std::ostream& os) {
  os.write("LA2T", 4);
  io::write_u32(os, kTensorFileVersion);
  io::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) io::write_u64(os, d);
  io::write_f64(os, t.data());
  if (!os) throw std::runtime_error("write_tensor: stream error");
}

Tensor read_tensor(std::istream& is) {
  io::expect_magic(is, "LA2T");
  const std::uint32_t version = io::read_u32(is);
  if (version != kTensorFileVersion) throw FormatError("LA2T: unsupported version " + std::to_string(version));
  const std::uint32_t rank = io::read_u32(is);
  if (rank > 16) throw FormatError("LA2T: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t total = 1;
  for (auto& d : shape) {
    d = io::read_u64(is);
    if (d != 0 && total > (std::size_t{1} << 40) / d) throw FormatError("LA2T: shape too large");
    total *= d;
  }
  std::vector<double> values(total);
  io::read_f64(is, values);
  return Tensor(std::move(shape), std::move(values));
}

void write_tensor_file(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_tensor(t, os);
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_tensor(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace la2
