#include "evc/kernel_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "evc/error.hpp"
#include "evc/index_gen.hpp"

namespace evc {

static_assert(std::endian::native == std::endian::little,
              "the kernel container is written in host byte order, which must be little-endian");

namespace io {
namespace {

void read_exact(std::istream& in, void* dst, std::size_t bytes) {
  const auto offset = static_cast<long long>(in.tellg());
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (!in) {
    throw FormatError("kernel container truncated at byte " + std::to_string(offset));
  }
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64s(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  read_exact(in, &v, sizeof v);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  read_exact(in, &v, sizeof v);
  return v;
}
void read_f64s(std::istream& in, std::span<double> v) {
  read_exact(in, v.data(), v.size() * sizeof(double));
}
void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }
void expect_magic(std::istream& in, const char (&magic)[5]) {
  char got[4] = {};
  read_exact(in, got, 4);
  if (std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("expected section magic '") + magic + "'");
  }
}

}  // namespace io

void write_kernels(std::ostream& out, std::span<const UniqueKernel> kernels) {
  if (kernels.empty()) throw std::invalid_argument("write_kernels: no kernels");
  const auto& first = kernels.front();
  for (const auto& k : kernels) {
    k.validate();
    if (k.n != first.n || k.order != first.order) {
      throw std::invalid_argument("write_kernels: kernels must share (n, order)");
    }
  }
  io::write_magic(out, "EVCK");
  io::write_u32(out, kKernelFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(first.n));
  io::write_u32(out, static_cast<std::uint32_t>(first.order));
  io::write_u32(out, static_cast<std::uint32_t>(kernels.size()));
  for (const auto& w : first.weights) io::write_u64(out, w.size());
  for (const auto& k : kernels) {
    for (const auto& w : k.weights) io::write_f64s(out, w);
  }
  for (const auto& k : kernels) io::write_f64s(out, std::span<const double>(&k.bias, 1));
  if (!out) throw std::runtime_error("write_kernels: stream write failed");
}

std::vector<UniqueKernel> read_kernels(std::istream& in) {
  io::expect_magic(in, "EVCK");
  const auto version = io::read_u32(in);
  if (version != kKernelFormatVersion) {
    throw FormatError("unsupported kernel container version " + std::to_string(version));
  }
  const auto n = static_cast<int>(io::read_u32(in));
  const auto order = static_cast<int>(io::read_u32(in));
  const auto channels = io::read_u32(in);
  if (n < 1 || order < 1 || channels < 1) throw FormatError("kernel container header is invalid");
  std::vector<std::uint64_t> lengths(static_cast<std::size_t>(order));
  for (int j = 1; j <= order; ++j) {
    lengths[static_cast<std::size_t>(j - 1)] = io::read_u64(in);
    if (lengths[static_cast<std::size_t>(j - 1)] != count_terms(n, j)) {
      throw FormatError("order-" + std::to_string(j) + " length does not equal the unique-term count");
    }
  }
  std::vector<UniqueKernel> kernels;
  for (std::uint32_t c = 0; c < channels; ++c) {
    auto k = UniqueKernel::zeros(n, order);
    for (auto& w : k.weights) io::read_f64s(in, w);
    kernels.push_back(std::move(k));
  }
  for (auto& k : kernels) io::read_f64s(in, std::span<double>(&k.bias, 1));
  return kernels;
}

void save_kernels(const std::string& path, std::span<const UniqueKernel> kernels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_kernels(out, kernels);
}

std::vector<UniqueKernel> load_kernels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_kernels(in);
}

}  // namespace evc
