#pragma once

// Binary kernel container (little-endian, layout in docs/formats.md):
//
//   "EVCK" | u32 version | u32 n | u32 order | u32 out_channels
//   | u64 length[order] | f64 weights (per channel, per order, FPM row order)
//   | f64 bias[out_channels]
//
// Further sections (e.g. the HLA parameters) may follow the container.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evc/kernels.hpp"

namespace evc {

inline constexpr std::uint32_t kKernelFormatVersion = 1;

void write_kernels(std::ostream& out, std::span<const UniqueKernel> kernels);
/// Throws FormatError on a bad magic, version, or truncated stream.
std::vector<UniqueKernel> read_kernels(std::istream& in);

void save_kernels(const std::string& path, std::span<const UniqueKernel> kernels);
std::vector<UniqueKernel> load_kernels(const std::string& path);

namespace io {

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64s(std::ostream& out, std::span<const double> v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
void read_f64s(std::istream& in, std::span<double> v);
void expect_magic(std::istream& in, const char (&magic)[5]);
void write_magic(std::ostream& out, const char (&magic)[5]);

}  // namespace io

}  // namespace evc
