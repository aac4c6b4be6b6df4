#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "la2/tensor.hpp"

namespace la2 {

/// Malformed or truncated binary file.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kTensorFileVersion = 1;

/// Portable tensor file: "LA2T", u32 version, u32 rank, rank x u64 dims,
/// then row-major little-endian float64 values.
void write_tensor(const Tensor& t, std::ostream& os);
Tensor read_tensor(std::istream& is);
void write_tensor_file(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor_file(const std::filesystem::path& path);

namespace io {

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, std::span<const double> values);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
void read_f64(std::istream& is, std::span<double> out);
void expect_magic(std::istream& is, const char (&magic)[5]);

}  // namespace io

}  // namespace la2
