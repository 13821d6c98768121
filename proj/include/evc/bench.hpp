#pragma once

// Speed and term-storage comparisons between the Kronecker (TVC) and
// unique-term (EVC) Volterra implementations. Each configuration filters
// batch * channels input vectors of length n = kernel_h * kernel_w with
// out_channels kernels.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "evc/kernels.hpp"

namespace evc {

struct BenchConfig {
  std::vector<int> orders{2, 3, 4};
  std::vector<std::pair<int, int>> kernel_sizes{{2, 2}, {3, 3}};
  int channels = 10;
  int batch = 10;
  int out_channels = 10;
  int repetitions = 5;
  int warmup = 1;
  int threads = 1;
  std::uint64_t seed = 0;
  /// Cap on doubles held by one implementation's terms plus weights.
  std::size_t element_budget = 50'000'000;

  void validate() const;
};

/// "3x3,5x5" -> {{3,3},{5,5}}; throws std::invalid_argument.
std::vector<std::pair<int, int>> parse_kernel_sizes(const std::string& text);

struct SpeedRow {
  std::string impl;   // tvc | evc
  std::string phase;  // forward | backward
  int order = 0;
  int n = 0;
  int batch = 0;
  int channels = 0;
  double median_ns = 0.0;
  std::uint64_t theory_ops = 0;
  int threads = 1;
  std::string status;  // ok | skipped: <reason>
};

struct SpaceRow {
  std::string impl;
  int order = 0;
  int n = 0;
  int batch = 0;
  int channels = 0;
  std::uint64_t order_terms = 0;  // per vector, order r only
  std::uint64_t total_terms = 0;  // per vector, orders 1..r
  std::size_t measured_order_bytes = 0;
  std::size_t measured_total_bytes = 0;
  std::size_t theory_bytes = 0;  // total_terms * 8 * batch * channels
  std::size_t index_bytes = 0;
  double ratio = 0.0;  // EVC measured total / TVC measured total
  std::string status;
};

/// Sum over j = 1..r of binomial(n + j - 1, j), or of n^j for the Kronecker form.
std::uint64_t theory_ops_unique(int n, int r);
std::uint64_t theory_ops_kronecker(int n, int r);

std::vector<SpeedRow> bench_speed(const BenchConfig& cfg);
std::vector<SpaceRow> bench_space(const BenchConfig& cfg);

void write_speed_csv(std::ostream& out, const std::vector<SpeedRow>& rows);
void write_space_csv(std::ostream& out, const std::vector<SpaceRow>& rows);

inline constexpr const char* kSpeedCsvHeader =
    "impl,phase,order,n,batch,channels,median_ns,theory_ops,threads,status";
inline constexpr const char* kSpaceCsvHeader =
    "impl,order,n,batch,channels,order_terms,total_terms,measured_order_bytes,"
    "measured_total_bytes,theory_bytes,index_bytes,ratio,status";

}  // namespace evc
