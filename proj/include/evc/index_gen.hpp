#pragma once

// Combinatorial index tables for unique-term Volterra filtering.
//
// All positions are 0-based. A term of order r is identified by a
// non-decreasing r-tuple of input positions; the tables below enumerate
// those tuples in one frozen order and describe how order-r terms are built
// from order-(r-1) terms with a single gathered multiplication.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace evc {

using Index = std::uint32_t;

/// Row-major integer matrix with a fixed column count.
class PositionMatrix {
 public:
  explicit PositionMatrix(std::size_t cols = 0) : cols_(cols) {}

  std::size_t rows() const { return cols_ == 0 ? 0 : data_.size() / cols_; }
  std::size_t cols() const { return cols_; }
  std::span<const Index> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  const std::vector<Index>& data() const { return data_; }

  void append(std::span<const Index> row);
  void reserve(std::size_t rows) { data_.reserve(rows * cols_); }

  friend bool operator==(const PositionMatrix&, const PositionMatrix&) = default;

 private:
  std::size_t cols_;
  std::vector<Index> data_;
};

/// Strictly increasing j-tuples over {0..n-1}.
struct NoIdenticalPositionMatrix {
  int order = 0;
  int n = 0;
  PositionMatrix rows;
};

using Composition = std::vector<int>;

/// Every ordered composition of `order`, grouped by ascending length.
struct TotalRepeatingMatrices {
  int order = 0;
  std::vector<Composition> parts;
};

/// Non-decreasing r-tuples over {0..n-1}; row k names the k-th unique term.
struct FullPositionMatrix {
  int order = 0;
  int n = 0;
  PositionMatrix rows;

  friend bool operator==(const FullPositionMatrix&, const FullPositionMatrix&) = default;
};

/// Pair table that peels one factor off every order-r term: term k equals
/// x[position[k]] times order-(r-1) term prev_row[k].
struct PcmTable {
  std::vector<Index> position;
  std::vector<Index> prev_row;

  std::size_t size() const { return position.size(); }
  friend bool operator==(const PcmTable&, const PcmTable&) = default;
};

/// `order` variants; variant t peels off column t of the full position matrix.
struct ProgressiveComputationMatrices {
  int order = 0;
  int n = 0;
  std::vector<PcmTable> variants;

  friend bool operator==(const ProgressiveComputationMatrices&,
                         const ProgressiveComputationMatrices&) = default;
};

NoIdenticalPositionMatrix build_npm(int n, int j);
TotalRepeatingMatrices build_trm(int r);
FullPositionMatrix build_fpm(int n, int r);

/// Requires fpm_cur.order >= 2 and fpm_prev.order == fpm_cur.order - 1.
/// For order 2 the result is FPM^2 itself plus its column swap.
ProgressiveComputationMatrices build_pcms(const FullPositionMatrix& fpm_prev,
                                          const FullPositionMatrix& fpm_cur);

/// binomial(n + r - 1, r); throws std::overflow_error instead of wrapping.
std::uint64_t count_terms(int n, int r);
/// binomial(n + r, r): all unique terms of orders 1..r plus the bias.
std::uint64_t count_params(int n, int r);
/// Exact binomial coefficient with overflow detection.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Everything needed to run an order-r filter over n inputs: FPM^1..r and
/// PCMs^2..r, plus the offsets of each order inside a concatenated term
/// buffer (order 1 first).
class IndexSet {
 public:
  IndexSet(int n, int order);

  int n() const { return n_; }
  int order() const { return order_; }

  const FullPositionMatrix& fpm(int j) const { return fpms_.at(static_cast<std::size_t>(j - 1)); }
  const std::vector<FullPositionMatrix>& fpms() const { return fpms_; }
  const ProgressiveComputationMatrices& pcms(int j) const {
    return pcms_.at(static_cast<std::size_t>(j - 2));
  }

  std::size_t term_count(int j) const { return fpm(j).rows.rows(); }
  std::size_t term_offset(int j) const { return offsets_.at(static_cast<std::size_t>(j - 1)); }
  std::size_t total_terms() const { return offsets_.back(); }

  /// Bytes held by the PCM tables, the only structures needed at run time.
  std::size_t pcm_bytes() const;

  /// Fault-injection hook for the self-check suite; never used otherwise.
  ProgressiveComputationMatrices& mutable_pcms(int j) {
    return pcms_.at(static_cast<std::size_t>(j - 2));
  }

 private:
  int n_;
  int order_;
  std::vector<FullPositionMatrix> fpms_;
  std::vector<ProgressiveComputationMatrices> pcms_;
  std::vector<std::size_t> offsets_;  // order_ + 1 entries
};

/// Process-wide cache keyed on (n, r). Thread-safe; returned sets are immutable.
std::shared_ptr<const IndexSet> cached_index_set(int n, int r);

}  // namespace evc
