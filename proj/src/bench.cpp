#include "evc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "evc/error.hpp"
#include "evc/index_gen.hpp"
#include "evc/volterra_efficient.hpp"
#include "evc/volterra_naive.hpp"

namespace evc {
namespace {

struct Tracker {
  std::size_t current = 0;
  std::size_t peak = 0;
};

template <typename T>
struct TrackingAllocator {
  using value_type = T;
  Tracker* tracker;

  explicit TrackingAllocator(Tracker* t) : tracker(t) {}
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>& other) : tracker(other.tracker) {}

  T* allocate(std::size_t count) {
    tracker->current += count * sizeof(T);
    tracker->peak = std::max(tracker->peak, tracker->current);
    return std::allocator<T>{}.allocate(count);
  }
  void deallocate(T* p, std::size_t count) {
    tracker->current -= count * sizeof(T);
    std::allocator<T>{}.deallocate(p, count);
  }
  template <typename U>
  bool operator==(const TrackingAllocator<U>& other) const {
    return tracker == other.tracker;
  }
};

template <typename T>
using TrackedVector = std::vector<T, TrackingAllocator<T>>;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

template <typename F>
double time_median_ns(const BenchConfig& cfg, F&& run) {
  for (int i = 0; i < cfg.warmup; ++i) run();
  std::vector<double> samples;
  for (int i = 0; i < cfg.repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  return median(std::move(samples));
}

/// body(begin, end, worker) over contiguous slices of [0, count).
template <typename F>
void parallel_for(int threads, std::size_t count, F&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    body(std::size_t{0}, count, std::size_t{0});
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk, end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end, w] { body(begin, end, w); });
  }
}

/// Kernels and inputs shared by both implementations.
struct Workload {
  int n = 0;
  int order = 0;
  std::size_t vectors = 0;
  std::size_t out_channels = 0;
  std::vector<double> x;         // vectors x n
  std::vector<double> upstream;  // vectors x out_channels
  std::vector<UniqueKernel> kernels;
};

Workload make_workload(const BenchConfig& cfg, int n, int order) {
  Workload w;
  w.n = n;
  w.order = order;
  w.vectors = static_cast<std::size_t>(cfg.batch) * static_cast<std::size_t>(cfg.channels);
  w.out_channels = static_cast<std::size_t>(cfg.out_channels);
  std::mt19937_64 rng(cfg.seed ^ (static_cast<std::uint64_t>(n) << 32) ^ static_cast<std::uint64_t>(order));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  w.x.resize(w.vectors * static_cast<std::size_t>(n));
  for (double& v : w.x) v = dist(rng);
  w.upstream.resize(w.vectors * w.out_channels);
  for (double& v : w.upstream) v = dist(rng);
  for (std::size_t o = 0; o < w.out_channels; ++o) w.kernels.push_back(random_unique_kernel(n, order, rng));
  return w;
}

std::size_t kronecker_total(int n, int r, std::size_t budget) {
  std::size_t total = 0;
  for (int j = 1; j <= r; ++j) total += dense_term_count(n, j, budget);
  return total;
}

std::vector<double> flatten_weights(const std::vector<std::vector<double>>& weights) {
  std::vector<double> flat;
  for (const auto& w : weights) flat.insert(flat.end(), w.begin(), w.end());
  return flat;
}

void add_into(std::vector<std::vector<double>>& dst, const std::vector<std::vector<double>>& src) {
  for (std::size_t o = 0; o < dst.size(); ++o)
    for (std::size_t i = 0; i < dst[o].size(); ++i) dst[o][i] += src[o][i];
}

struct EvcTimes {
  double forward_ns;
  double backward_ns;
};

EvcTimes time_unique(const BenchConfig& cfg, const Workload& w) {
  const auto indices = cached_index_set(w.n, w.order);
  const std::size_t T = indices->total_terms();
  const auto n = static_cast<std::size_t>(w.n);
  const std::size_t O = w.out_channels;
  std::vector<std::vector<double>> weights;
  for (const auto& k : w.kernels) weights.push_back(flatten_weights(k.weights));
  std::vector<double> terms(w.vectors * T);
  std::vector<double> out(w.vectors * O);

  const auto forward = [&] {
    parallel_for(cfg.threads, w.vectors, [&](std::size_t begin, std::size_t end, std::size_t) {
      for (std::size_t v = begin; v < end; ++v) {
        const std::span<double> t(terms.data() + v * T, T);
        detail::fill_unique_terms({w.x.data() + v * n, n}, *indices, t);
        for (std::size_t o = 0; o < O; ++o) {
          out[v * O + o] = w.kernels[o].bias + std::inner_product(weights[o].begin(), weights[o].end(), t.begin(), 0.0);
        }
      }
    });
  };
  const double forward_ns = time_median_ns(cfg, forward);

  const auto workers = static_cast<std::size_t>(std::max(1, cfg.threads));
  std::vector<std::vector<std::vector<double>>> grad_w(workers, std::vector<std::vector<double>>(O, std::vector<double>(T)));
  std::vector<std::vector<double>> dterms(workers, std::vector<double>(T));
  std::vector<double> dx(w.vectors * n);
  const auto backward = [&] {
    for (auto& per_worker : grad_w)
      for (auto& g : per_worker) std::fill(g.begin(), g.end(), 0.0);
    std::fill(dx.begin(), dx.end(), 0.0);
    parallel_for(cfg.threads, w.vectors, [&](std::size_t begin, std::size_t end, std::size_t worker) {
      auto& gw = grad_w[worker];
      auto& dt = dterms[worker];
      for (std::size_t v = begin; v < end; ++v) {
        const double* t = terms.data() + v * T;
        std::fill(dt.begin(), dt.end(), 0.0);
        for (std::size_t o = 0; o < O; ++o) {
          const double u = w.upstream[v * O + o];
          const double* wo = weights[o].data();
          double* g = gw[o].data();
          for (std::size_t k = 0; k < T; ++k) {
            g[k] += u * t[k];
            dt[k] += u * wo[k];
          }
        }
        detail::scatter_term_gradients({t, T}, dt, *indices, {dx.data() + v * n, n});
      }
    });
    for (std::size_t k = 1; k < workers; ++k) add_into(grad_w[0], grad_w[k]);
  };
  return {forward_ns, time_median_ns(cfg, backward)};
}

EvcTimes time_kronecker(const BenchConfig& cfg, const Workload& w) {
  const auto n = static_cast<std::size_t>(w.n);
  const std::size_t O = w.out_channels;
  const std::size_t D = kronecker_total(w.n, w.order, cfg.element_budget);
  const auto indices = cached_index_set(w.n, w.order);
  std::vector<double> weights_flat;
  std::vector<std::vector<double>> weights;
  std::vector<TransposedWeights> transposed;
  for (const auto& k : w.kernels) {
    const auto dense = embed_unique_weights(k, indices->fpms());
    weights.push_back(flatten_weights(dense.weights));
    transposed.emplace_back(dense);
  }
  std::vector<double> terms(w.vectors * D);
  std::vector<double> out(w.vectors * O);

  const auto forward = [&] {
    parallel_for(cfg.threads, w.vectors, [&](std::size_t begin, std::size_t end, std::size_t) {
      for (std::size_t v = begin; v < end; ++v) {
        const std::span<double> t(terms.data() + v * D, D);
        fill_kronecker_terms({w.x.data() + v * n, n}, w.order, t);
        for (std::size_t o = 0; o < O; ++o) {
          out[v * O + o] = w.kernels[o].bias + std::inner_product(weights[o].begin(), weights[o].end(), t.begin(), 0.0);
        }
      }
    });
  };
  const double forward_ns = time_median_ns(cfg, forward);

  const auto workers = static_cast<std::size_t>(std::max(1, cfg.threads));
  std::vector<std::vector<std::vector<double>>> grad_w(workers, std::vector<std::vector<double>>(O, std::vector<double>(D)));
  std::vector<double> dx(w.vectors * n);
  const auto backward = [&] {
    for (auto& per_worker : grad_w)
      for (auto& g : per_worker) std::fill(g.begin(), g.end(), 0.0);
    std::fill(dx.begin(), dx.end(), 0.0);
    parallel_for(cfg.threads, w.vectors, [&](std::size_t begin, std::size_t end, std::size_t worker) {
      auto& gw = grad_w[worker];
      for (std::size_t v = begin; v < end; ++v) {
        const double* t = terms.data() + v * D;
        for (std::size_t o = 0; o < O; ++o) {
          const double u = w.upstream[v * O + o];
          double* g = gw[o].data();
          for (std::size_t k = 0; k < D; ++k) g[k] += u * t[k];
          transposed[o].accumulate_grad_input({t, D}, u, {dx.data() + v * n, n});
        }
      }
    });
    for (std::size_t k = 1; k < workers; ++k) add_into(grad_w[0], grad_w[k]);
  };
  return {forward_ns, time_median_ns(cfg, backward)};
}

/// Doubles one implementation needs: per-vector terms plus one weight copy
/// per output channel (and per worker for the weight gradients).
void check_budget(const BenchConfig& cfg, std::size_t per_vector, const char* what) {
  const auto vectors = static_cast<std::size_t>(cfg.batch) * static_cast<std::size_t>(cfg.channels);
  const auto copies = vectors + static_cast<std::size_t>(cfg.out_channels) *
                                    (1 + static_cast<std::size_t>(std::max(1, cfg.threads)));
  std::size_t total = 0;
  if (__builtin_mul_overflow(per_vector, copies, &total) || total > cfg.element_budget) {
    throw ResourceLimitError(std::string(what) + " needs more than " + std::to_string(cfg.element_budget) +
                             " elements");
  }
}

}  // namespace

void BenchConfig::validate() const {
  if (orders.empty() || kernel_sizes.empty()) throw std::invalid_argument("need at least one order and kernel size");
  for (int r : orders) {
    if (r < 1) throw std::invalid_argument("orders must be >= 1");
  }
  for (const auto& [kh, kw] : kernel_sizes) {
    if (kh < 1 || kw < 1) throw std::invalid_argument("kernel sizes must be >= 1x1");
  }
  if (channels < 1 || batch < 1 || out_channels < 1) {
    throw std::invalid_argument("batch, channels and out_channels must be >= 1");
  }
  if (repetitions < 3) throw std::invalid_argument("repetitions must be >= 3");
  if (warmup < 1) throw std::invalid_argument("warmup must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::vector<std::pair<int, int>> parse_kernel_sizes(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::istringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    const auto x = item.find('x');
    std::size_t used_h = 0, used_w = 0;
    int kh = 0, kw = 0;
    try {
      if (x == std::string::npos) throw std::invalid_argument("");
      kh = std::stoi(item.substr(0, x), &used_h);
      kw = std::stoi(item.substr(x + 1), &used_w);
    } catch (const std::exception&) {
      throw std::invalid_argument("kernel size '" + item + "' is not of the form KHxKW");
    }
    if (used_h != x || used_w != item.size() - x - 1 || kh < 1 || kw < 1) {
      throw std::invalid_argument("kernel size '" + item + "' is not of the form KHxKW");
    }
    out.emplace_back(kh, kw);
  }
  if (out.empty()) throw std::invalid_argument("no kernel sizes given");
  return out;
}

std::uint64_t theory_ops_unique(int n, int r) {
  std::uint64_t total = 0;
  for (int j = 1; j <= r; ++j) total += count_terms(n, j);
  return total;
}

std::uint64_t theory_ops_kronecker(int n, int r) {
  std::uint64_t total = 0, power = 1;
  for (int j = 1; j <= r; ++j) {
    if (__builtin_mul_overflow(power, static_cast<std::uint64_t>(n), &power) ||
        __builtin_add_overflow(total, power, &total)) {
      throw std::overflow_error("n^j overflows 64 bits");
    }
  }
  return total;
}

std::vector<SpeedRow> bench_speed(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<SpeedRow> rows;
  for (const auto& [kh, kw] : cfg.kernel_sizes) {
    const int n = kh * kw;
    for (int r : cfg.orders) {
      const auto w = make_workload(cfg, n, r);
      const auto emit = [&](const char* impl, std::uint64_t ops, const EvcTimes* t, const std::string& status) {
        for (const char* phase : {"forward", "backward"}) {
          SpeedRow row{impl, phase, r, n, cfg.batch, cfg.channels, 0.0, ops, cfg.threads, status};
          if (t) row.median_ns = std::string(phase) == "forward" ? t->forward_ns : t->backward_ns;
          rows.push_back(std::move(row));
        }
      };
      const auto run = [&](const char* impl, auto&& ops_fn, auto&& time_fn) {
        std::uint64_t ops = 0;
        try {
          ops = ops_fn();
          check_budget(cfg, static_cast<std::size_t>(ops), impl);
          const auto t = time_fn();
          emit(impl, ops, &t, "ok");
        } catch (const ResourceLimitError& e) {
          emit(impl, ops, nullptr, std::string("skipped: ") + e.what());
        } catch (const std::overflow_error& e) {
          emit(impl, ops, nullptr, std::string("skipped: ") + e.what());
        }
      };
      run("tvc", [&] { return theory_ops_kronecker(n, r); }, [&] { return time_kronecker(cfg, w); });
      run("evc", [&] { return theory_ops_unique(n, r); }, [&] { return time_unique(cfg, w); });
    }
  }
  return rows;
}

std::vector<SpaceRow> bench_space(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<SpaceRow> rows;
  const auto vectors = static_cast<std::size_t>(cfg.batch) * static_cast<std::size_t>(cfg.channels);
  for (const auto& [kh, kw] : cfg.kernel_sizes) {
    const int n = kh * kw;
    const auto nn = static_cast<std::size_t>(n);
    for (int r : cfg.orders) {
      const auto w = make_workload(cfg, n, r);
      SpaceRow tvc{"tvc", r, n, cfg.batch, cfg.channels, 0, 0, 0, 0, 0, 0, 0.0, "ok"};
      SpaceRow evc{"evc", r, n, cfg.batch, cfg.channels, 0, 0, 0, 0, 0, 0, 0.0, "ok"};

      // Unique terms, one tracked buffer per order covering every vector.
      try {
        const auto indices = cached_index_set(n, r);
        evc.order_terms = indices->term_count(r);
        evc.total_terms = indices->total_terms();
        if (vectors * evc.total_terms > cfg.element_budget) {
          throw ResourceLimitError("unique terms exceed the element budget");
        }
        evc.theory_bytes = evc.total_terms * sizeof(double) * vectors;
        evc.index_bytes = indices->pcm_bytes();
        Tracker all;
        Tracker last;
        std::vector<TrackedVector<double>> buffers;
        for (int j = 1; j <= r; ++j) {
          buffers.emplace_back(vectors * indices->term_count(j), 0.0,
                               TrackingAllocator<double>(j == r ? &last : &all));
        }
        std::vector<double> scratch(indices->total_terms());
        for (std::size_t v = 0; v < vectors; ++v) {
          detail::fill_unique_terms({w.x.data() + v * nn, nn}, *indices, scratch);
          for (int j = 1; j <= r; ++j) {
            const auto count = indices->term_count(j);
            const auto src = scratch.begin() + static_cast<std::ptrdiff_t>(indices->term_offset(j));
            std::copy(src, src + static_cast<std::ptrdiff_t>(count),
                      buffers[static_cast<std::size_t>(j - 1)].begin() + static_cast<std::ptrdiff_t>(v * count));
          }
        }
        evc.measured_order_bytes = last.peak;
        evc.measured_total_bytes = all.peak + last.peak;
      } catch (const ResourceLimitError& e) {
        evc.status = std::string("skipped: ") + e.what();
      }

      // Kronecker terms, same layout.
      try {
        tvc.order_terms = dense_term_count(n, r, cfg.element_budget);
        tvc.total_terms = kronecker_total(n, r, cfg.element_budget);
        if (vectors * tvc.total_terms > cfg.element_budget) {
          throw ResourceLimitError("Kronecker terms exceed the element budget");
        }
        tvc.theory_bytes = tvc.total_terms * sizeof(double) * vectors;
        Tracker all;
        Tracker last;
        std::vector<TrackedVector<double>> buffers;
        std::vector<std::size_t> counts, offsets;
        std::size_t offset = 0;
        for (int j = 1; j <= r; ++j) {
          counts.push_back(dense_term_count(n, j, cfg.element_budget));
          offsets.push_back(offset);
          offset += counts.back();
          buffers.emplace_back(vectors * counts.back(), 0.0, TrackingAllocator<double>(j == r ? &last : &all));
        }
        std::vector<double> scratch(tvc.total_terms);
        for (std::size_t v = 0; v < vectors; ++v) {
          fill_kronecker_terms({w.x.data() + v * nn, nn}, r, scratch);
          for (std::size_t j = 0; j < counts.size(); ++j) {
            const auto src = scratch.begin() + static_cast<std::ptrdiff_t>(offsets[j]);
            std::copy(src, src + static_cast<std::ptrdiff_t>(counts[j]),
                      buffers[j].begin() + static_cast<std::ptrdiff_t>(v * counts[j]));
          }
        }
        tvc.measured_order_bytes = last.peak;
        tvc.measured_total_bytes = all.peak + last.peak;
      } catch (const ResourceLimitError& e) {
        tvc.status = std::string("skipped: ") + e.what();
      }

      if (tvc.measured_total_bytes > 0 && evc.measured_total_bytes > 0) {
        evc.ratio = tvc.ratio = static_cast<double>(evc.measured_total_bytes) /
                                static_cast<double>(tvc.measured_total_bytes);
      } else {
        evc.ratio = tvc.ratio = std::nan("");
      }
      rows.push_back(std::move(tvc));
      rows.push_back(std::move(evc));
    }
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_speed_csv(std::ostream& out, const std::vector<SpeedRow>& rows) {
  out << kSpeedCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.impl << ',' << r.phase << ',' << r.order << ',' << r.n << ',' << r.batch << ',' << r.channels << ','
        << static_cast<std::uint64_t>(std::llround(r.median_ns)) << ',' << r.theory_ops << ',' << r.threads << ','
        << csv_field(r.status) << '\n';
  }
}

void write_space_csv(std::ostream& out, const std::vector<SpaceRow>& rows) {
  out << kSpaceCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.impl << ',' << r.order << ',' << r.n << ',' << r.batch << ',' << r.channels << ',' << r.order_terms
        << ',' << r.total_terms << ',' << r.measured_order_bytes << ',' << r.measured_total_bytes << ','
        << r.theory_bytes << ',' << r.index_bytes << ',';
    if (!std::isnan(r.ratio)) out << r.ratio;
    out << ',' << csv_field(r.status) << '\n';
  }
}

}  // namespace evc
