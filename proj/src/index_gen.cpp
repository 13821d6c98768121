#include "evc/index_gen.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>

#include "evc/error.hpp"

namespace evc {
namespace {

void require_positive(int value, const char* what) {
  if (value <= 0) {
    throw std::invalid_argument(std::string(what) + " must be >= 1, got " + std::to_string(value));
  }
}

// Extends each strictly increasing row by one position: for shift s = 1, 2, ...
// append row.back() + s, dropping rows that run past n - 1.
NoIdenticalPositionMatrix extend_npm(const NoIdenticalPositionMatrix& prev) {
  NoIdenticalPositionMatrix next{prev.order + 1, prev.n,
                                 PositionMatrix(static_cast<std::size_t>(prev.order + 1))};
  std::vector<Index> row(static_cast<std::size_t>(next.order));
  const auto last_pos = static_cast<Index>(prev.n - 1);
  for (Index shift = 1; shift <= last_pos; ++shift) {
    for (std::size_t k = 0; k < prev.rows.rows(); ++k) {
      const auto src = prev.rows.row(k);
      if (src.back() + shift > last_pos) continue;
      std::copy(src.begin(), src.end(), row.begin());
      row.back() = src.back() + shift;
      next.rows.append(row);
    }
  }
  return next;
}

NoIdenticalPositionMatrix first_order_npm(int n) {
  NoIdenticalPositionMatrix npm{1, n, PositionMatrix(1)};
  npm.rows.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < static_cast<Index>(n); ++i) npm.rows.append(std::span<const Index>(&i, 1));
  return npm;
}

// NPM^1 .. NPM^max_order; orders above n come out empty.
std::vector<NoIdenticalPositionMatrix> npm_chain(int n, int max_order) {
  std::vector<NoIdenticalPositionMatrix> chain;
  chain.reserve(static_cast<std::size_t>(max_order));
  chain.push_back(first_order_npm(n));
  while (static_cast<int>(chain.size()) < max_order) chain.push_back(extend_npm(chain.back()));
  return chain;
}

void compositions(int remaining, Composition& prefix, std::vector<Composition>& out) {
  if (remaining == 0) {
    out.push_back(prefix);
    return;
  }
  for (int part = 1; part <= remaining; ++part) {
    prefix.push_back(part);
    compositions(remaining - part, prefix, out);
    prefix.pop_back();
  }
}

// Mixed-radix key of a tuple over {0..n-1}.
class TupleKey {
 public:
  TupleKey(int n, int width) : radix_(static_cast<std::uint64_t>(n)) {
    std::uint64_t span = 1;
    for (int i = 0; i < width; ++i) {
      if (__builtin_mul_overflow(span, radix_, &span)) {
        throw ResourceLimitError("position tuples of width " + std::to_string(width) +
                                 " over " + std::to_string(n) + " inputs exceed 64-bit keys");
      }
    }
  }

  std::uint64_t operator()(std::span<const Index> tuple) const {
    std::uint64_t key = 0;
    for (Index v : tuple) key = key * radix_ + v;
    return key;
  }

 private:
  std::uint64_t radix_;
};

}  // namespace

void PositionMatrix::append(std::span<const Index> row) {
  if (row.size() != cols_) throw std::invalid_argument("row width does not match matrix");
  data_.insert(data_.end(), row.begin(), row.end());
}

NoIdenticalPositionMatrix build_npm(int n, int j) {
  require_positive(n, "n");
  require_positive(j, "order");
  if (j > n) return {j, n, PositionMatrix(static_cast<std::size_t>(j))};
  return std::move(npm_chain(n, j).back());
}

TotalRepeatingMatrices build_trm(int r) {
  require_positive(r, "order");
  TotalRepeatingMatrices trm{r, {}};
  // Orders 3 and 4 use the published listings verbatim.
  if (r == 3) {
    trm.parts = {{3}, {1, 2}, {2, 1}, {1, 1, 1}};
    return trm;
  }
  if (r == 4) {
    trm.parts = {{4}, {1, 3}, {3, 1}, {2, 2}, {2, 1, 1}, {1, 2, 1}, {1, 1, 2}, {1, 1, 1, 1}};
    return trm;
  }
  Composition prefix;
  compositions(r, prefix, trm.parts);
  std::stable_sort(trm.parts.begin(), trm.parts.end(),
                   [](const Composition& a, const Composition& b) {
                     if (a.size() != b.size()) return a.size() < b.size();
                     return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
                   });
  return trm;
}

FullPositionMatrix build_fpm(int n, int r) {
  require_positive(n, "n");
  require_positive(r, "order");
  const auto trm = build_trm(r);
  const auto chain = npm_chain(n, r);

  FullPositionMatrix fpm{r, n, PositionMatrix(static_cast<std::size_t>(r))};
  fpm.rows.reserve(static_cast<std::size_t>(count_terms(n, r)));
  std::vector<Index> out(static_cast<std::size_t>(r));
  for (const Composition& part : trm.parts) {
    const auto& npm = chain[part.size() - 1].rows;
    for (std::size_t k = 0; k < npm.rows(); ++k) {
      const auto src = npm.row(k);
      auto dst = out.begin();
      for (std::size_t col = 0; col < part.size(); ++col) {
        dst = std::fill_n(dst, part[col], src[col]);
      }
      fpm.rows.append(out);
    }
  }
  return fpm;
}

ProgressiveComputationMatrices build_pcms(const FullPositionMatrix& fpm_prev,
                                          const FullPositionMatrix& fpm_cur) {
  if (fpm_cur.order < 2 || fpm_prev.order != fpm_cur.order - 1 || fpm_prev.n != fpm_cur.n) {
    throw std::invalid_argument("build_pcms needs FPMs of consecutive orders >= 1 over the same n");
  }
  const int r = fpm_cur.order;
  const auto width = static_cast<std::size_t>(r - 1);
  const TupleKey key(fpm_cur.n, r - 1);

  std::unordered_map<std::uint64_t, Index> lookup;
  lookup.reserve(fpm_prev.rows.rows());
  for (std::size_t k = 0; k < fpm_prev.rows.rows(); ++k) {
    lookup.emplace(key(fpm_prev.rows.row(k)), static_cast<Index>(k));
  }

  ProgressiveComputationMatrices pcms{r, fpm_cur.n, {}};
  pcms.variants.resize(static_cast<std::size_t>(r));
  std::vector<Index> rest(width);
  for (std::size_t t = 0; t < pcms.variants.size(); ++t) {
    PcmTable& table = pcms.variants[t];
    table.position.reserve(fpm_cur.rows.rows());
    table.prev_row.reserve(fpm_cur.rows.rows());
    for (std::size_t k = 0; k < fpm_cur.rows.rows(); ++k) {
      const auto row = fpm_cur.rows.row(k);
      auto dst = std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(t), rest.begin());
      std::copy(row.begin() + static_cast<std::ptrdiff_t>(t) + 1, row.end(), dst);
      std::sort(rest.begin(), rest.end());
      const auto hit = lookup.find(key(rest));
      if (hit == lookup.end()) {
        throw InternalError("PCM construction: row " + std::to_string(k) + " of order-" +
                            std::to_string(r) + " FPM has no order-" + std::to_string(r - 1) +
                            " counterpart after deleting column " + std::to_string(t));
      }
      table.position.push_back(row[t]);
      table.prev_row.push_back(hit->second);
    }
  }
  return pcms;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // C(n-k+i, i) = C(n-k+i-1, i-1) * (n-k+i) / i, exact at every step.
    result = result * (n - k + i) / i;
    if (result > std::numeric_limits<std::uint64_t>::max()) {
      throw std::overflow_error("binomial(" + std::to_string(n) + ", " + std::to_string(k) +
                                ") exceeds 64 bits");
    }
  }
  return static_cast<std::uint64_t>(result);
}

std::uint64_t count_terms(int n, int r) {
  require_positive(n, "n");
  require_positive(r, "order");
  return binomial(static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(r) - 1,
                  static_cast<std::uint64_t>(r));
}

std::uint64_t count_params(int n, int r) {
  require_positive(n, "n");
  require_positive(r, "order");
  return binomial(static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(r),
                  static_cast<std::uint64_t>(r));
}

IndexSet::IndexSet(int n, int order) : n_(n), order_(order) {
  require_positive(n, "n");
  require_positive(order, "order");
  fpms_.reserve(static_cast<std::size_t>(order));
  for (int j = 1; j <= order; ++j) fpms_.push_back(build_fpm(n, j));
  for (int j = 2; j <= order; ++j) {
    pcms_.push_back(build_pcms(fpms_[static_cast<std::size_t>(j - 2)],
                               fpms_[static_cast<std::size_t>(j - 1)]));
  }
  offsets_.push_back(0);
  for (const auto& fpm : fpms_) offsets_.push_back(offsets_.back() + fpm.rows.rows());
}

std::size_t IndexSet::pcm_bytes() const {
  std::size_t bytes = 0;
  for (const auto& pcm : pcms_) {
    for (const auto& v : pcm.variants) bytes += (v.position.size() + v.prev_row.size()) * sizeof(Index);
  }
  return bytes;
}

std::shared_ptr<const IndexSet> cached_index_set(int n, int r) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const IndexSet>> cache;
  {
    std::lock_guard lock(mutex);
    auto it = cache.find({n, r});
    if (it != cache.end()) return it->second;
  }
  // Build outside the lock; a racing builder produces an identical set.
  auto built = std::make_shared<const IndexSet>(n, r);
  std::lock_guard lock(mutex);
  return cache.emplace(std::make_pair(n, r), std::move(built)).first->second;
}

}  // namespace evc
