#include "evc/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "evc/grad_check.hpp"
#include "evc/hla.hpp"
#include "evc/index_gen.hpp"
#include "evc/index_io.hpp"
#include "evc/reference.hpp"
#include "evc/volterra_efficient.hpp"
#include "evc/volterra_naive.hpp"

namespace evc {
namespace {

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string tuple_string(std::span<const Index> t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? "," : "") + std::to_string(t[i]);
  return s + "]";
}

class Recorder {
 public:
  Recorder(SuiteResult& result, std::string name) : r_(result) { r_.name = std::move(name); }

  void begin_case() { ++r_.cases; }
  void fail(std::string case_name, std::string invariant, std::string observed, std::string expected) {
    // Keep reports readable when a systematic bug trips every case.
    if (r_.failures.size() < 50) {
      r_.failures.push_back({r_.name, std::move(case_name), std::move(invariant), std::move(observed),
                             std::move(expected)});
    } else if (r_.failures.size() == 50) {
      r_.failures.push_back({r_.name, "...", "further failures suppressed", "", ""});
    }
  }
  /// Records err and fails if it exceeds tol.
  void bound(const std::string& case_name, const std::string& invariant, double err, double tol) {
    r_.max_error = std::max(r_.max_error, std::isnan(err) ? INFINITY : err);
    if (!(err <= tol)) fail(case_name, invariant, num(err), "<= " + num(tol));
  }

 private:
  SuiteResult& r_;
};

template <typename F>
SuiteResult timed(F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult r = body();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string case_id(int n, int r, int trial = -1) {
  std::string s = "n=" + std::to_string(n) + " r=" + std::to_string(r);
  if (trial >= 0) s += " trial=" + std::to_string(trial);
  return s;
}

UniqueKernel uniform_kernel(int n, int order, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  UniqueKernel k = UniqueKernel::zeros(n, order);
  for (auto& w : k.weights)
    for (double& v : w) v = dist(rng);
  k.bias = dist(rng);
  return k;
}

std::vector<double> uniform_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  return x;
}

/// |a - b| / (1 + |b|), the same scale-aware metric the gradient checker uses.
double rel_error(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); }

double max_rel_error(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_error(a[i], b[i]));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void scale(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

}  // namespace

SuiteResult check_counting(int max_n, int max_order) {
  return timed([&] {
    SuiteResult result;
    Recorder rec(result, "counting");
    for (int n = 1; n <= max_n; ++n) {
      std::uint64_t sum = 1;
      for (int r = 1; r <= max_order; ++r) {
        rec.begin_case();
        const auto brute = reference::count_multisets(n, r);
        const auto formula = count_terms(n, r);
        if (brute != formula) {
          rec.fail(case_id(n, r), "term-count", std::to_string(formula), std::to_string(brute));
        }
        sum += brute;
        if (sum != count_params(n, r) || sum != binomial(static_cast<std::uint64_t>(n + r), static_cast<std::uint64_t>(r))) {
          rec.fail(case_id(n, r), "parameter-count", std::to_string(count_params(n, r)), std::to_string(sum));
        }
      }
    }
    return result;
  });
}

SuiteResult check_index_structures(int max_n, int max_order, bool corrupt_pcm) {
  return timed([&] {
    SuiteResult result;
    Recorder rec(result, "index-structures");
    bool corrupted = false;
    for (int n = 1; n <= max_n; ++n) {
      for (int r = 1; r <= max_order; ++r) {
        rec.begin_case();
        const auto id = case_id(n, r);
        IndexSet set(n, r);
        if (corrupt_pcm && !corrupted && r >= 2 && n >= 2) {
          auto& table = set.mutable_pcms(2).variants[0];
          table.position[0] = (table.position[0] + 1) % static_cast<Index>(n);
          corrupted = true;
        }
        for (int j = 1; j <= r; ++j) {
          const auto& rows = set.fpm(j).rows;
          std::set<reference::Tuple> seen;
          for (std::size_t k = 0; k < rows.rows(); ++k) {
            const auto row = rows.row(k);
            seen.emplace(row.begin(), row.end());
          }
          if (seen.size() != rows.rows()) {
            rec.fail(id + " j=" + std::to_string(j), "fpm-distinct-rows", std::to_string(seen.size()),
                     std::to_string(rows.rows()));
          }
          if (seen != reference::enumerate_multisets(n, j)) {
            rec.fail(id + " j=" + std::to_string(j), "fpm-set-equality", "row set differs",
                     "all non-decreasing tuples");
          }
          if (j < 2) continue;
          const auto& pcms = set.pcms(j);
          const auto& prev = set.fpm(j - 1).rows;
          if (pcms.variants.size() != static_cast<std::size_t>(j)) {
            rec.fail(id, "pcm-variant-count", std::to_string(pcms.variants.size()), std::to_string(j));
            continue;
          }
          for (std::size_t t = 0; t < pcms.variants.size(); ++t) {
            const auto& v = pcms.variants[t];
            if (v.size() != rows.rows()) {
              rec.fail(id, "pcm-reconstruction", "table length " + std::to_string(v.size()),
                       std::to_string(rows.rows()));
              continue;
            }
            for (std::size_t k = 0; k < v.size(); ++k) {
              const auto row = rows.row(k);
              const std::string where =
                  id + " j=" + std::to_string(j) + " variant=" + std::to_string(t) + " term=" + std::to_string(k);
              if (v.position[k] >= static_cast<Index>(n) || v.prev_row[k] >= prev.rows()) {
                rec.fail(where, "pcm-reconstruction", "entry out of range", "in range");
                continue;
              }
              reference::Tuple rebuilt(prev.row(v.prev_row[k]).begin(), prev.row(v.prev_row[k]).end());
              rebuilt.push_back(v.position[k]);
              std::sort(rebuilt.begin(), rebuilt.end());
              if (!std::equal(rebuilt.begin(), rebuilt.end(), row.begin(), row.end()) || v.position[k] != row[t]) {
                rec.fail(where, "pcm-reconstruction", tuple_string(rebuilt), tuple_string(row));
              }
            }
          }
        }
        const auto a = to_json(export_indices(IndexSet(n, r)));
        const auto b = to_json(export_indices(IndexSet(n, r)));
        if (a != b || a != to_json(export_indices(*cached_index_set(n, r)))) {
          rec.fail(id, "deterministic-export", "exports differ", "byte-identical");
        }
      }
    }
    return result;
  });
}

SuiteResult check_forward_equivalence(const EquivalenceGrid& grid) {
  return timed([&] {
    SuiteResult result;
    Recorder rec(result, "forward-equivalence");
    std::mt19937_64 rng(grid.seed);
    for (int n = grid.min_n; n <= grid.max_n; ++n) {
      for (int r = 1; r <= grid.max_order; ++r) {
        const auto indices = cached_index_set(n, r);
        for (int trial = 0; trial < grid.trials; ++trial) {
          rec.begin_case();
          const auto x = uniform_vector(static_cast<std::size_t>(n), rng);
          const auto k = uniform_kernel(n, r, rng);
          const auto dense = embed_unique_weights(k, indices->fpms());
          const double fast = evc_forward(x, k, *indices);
          const double kron = tvc_forward(x, dense);
          const double direct = reference::monomial_forward(x, k, *indices);
          const auto id = case_id(n, r, trial);
          rec.bound(id, "evc-vs-tvc-forward", rel_error(fast, kron), 1e-12);
          rec.bound(id, "evc-vs-monomial-forward", rel_error(fast, direct), 1e-12);
        }
      }
    }
    return result;
  });
}

SuiteResult check_backward_equivalence(const EquivalenceGrid& grid) {
  return timed([&] {
    SuiteResult result;
    result.gradient = true;
    Recorder rec(result, "backward-equivalence");
    std::mt19937_64 rng(grid.seed + 1);
    std::uniform_real_distribution<double> up_dist(-2.0, 2.0);
    for (int n = grid.min_n; n <= grid.max_n; ++n) {
      for (int r = 1; r <= grid.max_order; ++r) {
        const auto indices = cached_index_set(n, r);
        for (int trial = 0; trial < grid.trials; ++trial) {
          rec.begin_case();
          const auto id = case_id(n, r, trial);
          const auto x = uniform_vector(static_cast<std::size_t>(n), rng);
          const auto k = uniform_kernel(n, r, rng);
          const double u = up_dist(rng);
          const auto dense = embed_unique_weights(k, indices->fpms());
          const auto cache = build_terms_progressive(x, *indices);
          const auto fast = evc_grad_input(cache, k, *indices, u);
          const auto kron = tvc_grad_input(x, dense, u);
          auto power = reference::monomial_grad_input(x, k, *indices);
          scale(power, u);
          auto scatter = reference::materialized_scatter_grad_input(x, k, *indices);
          scale(scatter, u);
          rec.bound(id, "evc-vs-tvc-grad-input", max_rel_error(fast, kron), 1e-10);
          rec.bound(id, "evc-vs-power-rule-grad-input", max_rel_error(fast, power), 1e-10);
          rec.bound(id, "evc-vs-materialized-scatter", max_rel_error(fast, scatter), 1e-10);

          const auto check_input = [&](const char* name, auto&& forward, const std::vector<double>& analytic) {
            const auto fd = grad_check(
                [&](std::span<const double> p, std::span<double> g) {
                  if (!g.empty()) std::copy(analytic.begin(), analytic.end(), g.begin());
                  return u * forward(p);
                },
                x);
            rec.bound(id, name, fd.max_rel_error, 1e-6);
          };
          check_input("evc-grad-input-vs-finite-difference",
                      [&](std::span<const double> p) { return evc_forward(p, k, *indices); }, fast);
          check_input("tvc-grad-input-vs-finite-difference",
                      [&](std::span<const double> p) { return tvc_forward(p, dense); }, kron);

          // Weight gradients are cheap to difference only on the smaller grids.
          if (trial < 3) {
            const auto gw = evc_grad_weights(cache, u);
            std::vector<double> flat;
            for (const auto& w : k.weights) flat.insert(flat.end(), w.begin(), w.end());
            flat.push_back(k.bias);
            std::vector<double> analytic;
            for (const auto& w : gw.weights) analytic.insert(analytic.end(), w.begin(), w.end());
            analytic.push_back(gw.bias);
            const auto fd = grad_check(
                [&](std::span<const double> p, std::span<double> g) {
                  if (!g.empty()) std::copy(analytic.begin(), analytic.end(), g.begin());
                  UniqueKernel probe = k;
                  std::size_t off = 0;
                  for (auto& w : probe.weights) {
                    std::copy(p.begin() + static_cast<std::ptrdiff_t>(off),
                              p.begin() + static_cast<std::ptrdiff_t>(off + w.size()), w.begin());
                    off += w.size();
                  }
                  probe.bias = p[off];
                  return u * evc_forward(cache, probe);
                },
                flat);
            rec.bound(id, "evc-grad-weights-vs-finite-difference", fd.max_rel_error, 1e-6);
          }
        }
      }
    }
    return result;
  });
}

namespace {

// Loss = sum(output * probe) so every output element gets a distinct upstream.
std::vector<double> random_probe(std::size_t size, std::mt19937_64& rng) {
  return uniform_vector(size, rng);
}

double probe_dot(const Tensor& out, std::span<const double> probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
  return s;
}

}  // namespace

SuiteResult check_conv_layer(std::uint64_t seed) {
  return timed([&] {
    SuiteResult result;
    result.gradient = true;
    Recorder rec(result, "conv-layer-gradients");
    std::mt19937_64 rng(seed + 2);
    struct Shape {
      int stride, pad, order;
    };
    for (const Shape s : {Shape{1, 1, 1}, Shape{1, 1, 2}, Shape{1, 1, 3}, Shape{2, 0, 2}}) {
      rec.begin_case();
      ConvGeometry geom;
      geom.kernel_h = geom.kernel_w = 3;
      geom.stride_h = geom.stride_w = s.stride;
      geom.pad_h = geom.pad_w = s.pad;
      geom.in_channels = 2;
      geom.in_h = geom.in_w = 5;
      auto layer = make_volterra_conv(geom, 2, s.order, rng);
      for (auto& k : layer.kernels) k = uniform_kernel(k.n, k.order, rng);
      Tensor x({2, 2, 5, 5}, uniform_vector(100, rng));
      const std::size_t out_size = 2u * 2u * static_cast<std::size_t>(geom.out_h() * geom.out_w());
      const auto probe = random_probe(out_size, rng);

      std::vector<UniqueKernel> grads;
      for (const auto& k : layer.kernels) grads.push_back(UniqueKernel::zeros(k.n, k.order));
      std::vector<double> grad_x(x.size());
      std::vector<ParamRef> refs;
      append_kernel_refs(refs, "conv", layer.kernels, grads);
      refs.push_back({"input", x.data(), grad_x});
      const auto check = grad_check_params(
          [&](bool want_grad) {
            auto f = conv2d_forward(x, layer);
            if (!want_grad) return probe_dot(f.output, probe);
            // Copy element-wise so the spans held by `refs` stay valid.
            Tensor up(f.output.shape(), std::vector<double>(probe.begin(), probe.end()));
            auto g = conv2d_backward(up, f.saved, layer);
            for (std::size_t oc = 0; oc < grads.size(); ++oc) {
              for (std::size_t j = 0; j < grads[oc].weights.size(); ++j) {
                std::copy(g.kernels[oc].weights[j].begin(), g.kernels[oc].weights[j].end(),
                          grads[oc].weights[j].begin());
              }
              grads[oc].bias = g.kernels[oc].bias;
            }
            std::copy(g.input.storage().begin(), g.input.storage().end(), grad_x.begin());
            return probe_dot(f.output, probe);
          },
          refs);
      rec.bound("stride=" + std::to_string(s.stride) + " pad=" + std::to_string(s.pad) +
                    " r=" + std::to_string(s.order) + " worst=" + check.worst_name,
                "conv-gradient-vs-finite-difference", check.max_rel_error, 1e-5);
    }
    return result;
  });
}

SuiteResult check_hla(std::uint64_t seed, std::size_t shake_pairs) {
  return timed([&] {
    SuiteResult result;
    result.gradient = true;
    Recorder rec(result, "hla");
    std::mt19937_64 rng(seed + 3);

    rec.begin_case();
    std::uniform_real_distribution<double> open(0.0, 1.0);
    std::size_t violations = 0;
    double worst_a = 0, worst_b = 0;
    for (std::size_t i = 0; i < shake_pairs; ++i) {
      double a = open(rng), b = open(rng);
      if (a == 0.0 || b == 0.0) continue;  // keep the pair inside (0, 1)
      const double y = shake_combine(a, b);
      if (!(y > std::max(a, b) && y < 1.0)) {
        if (violations++ == 0) worst_a = a, worst_b = b;
      }
    }
    if (violations) {
      rec.fail("pairs=" + std::to_string(shake_pairs), "shake-combine-range",
               std::to_string(violations) + " violations, first at a=" + num(worst_a) + " b=" + num(worst_b),
               "y in (max(a,b), 1)");
    }

    for (bool input_bn : {false, true}) {
      rec.begin_case();
      auto params = make_hla(HlaConfig{8, 4, input_bn}, 8, 8, rng);
      // Non-trivial affine batch-norm parameters so their gradients are exercised.
      std::uniform_real_distribution<double> gamma(0.5, 1.5), beta(-0.5, 0.5);
      for (double& g : params.bn.gamma) g = gamma(rng);
      for (double& b : params.bn.beta) b = beta(rng);
      if (params.input_bn) {
        for (double& g : params.input_bn->gamma) g = gamma(rng);
        for (double& b : params.input_bn->beta) b = beta(rng);
      }
      Tensor x({2, 8, 8, 8}, uniform_vector(2 * 8 * 8 * 8, rng));
      const auto probe = random_probe(x.size(), rng);
      const auto label = std::string("2x8x8x8") + (input_bn ? " input_bn" : "");

      // Analytic gradients, once.
      auto base = hla_forward(x, params, Mode::Train);
      Tensor up(base.output.shape(), std::vector<double>(probe.begin(), probe.end()));
      auto analytic = HlaGradients::zeros_like(params);
      const auto backward = hla_backward(up, base.saved, params);
      analytic.accumulate(backward);
      const Tensor& analytic_input = backward.input;

      // Input, SE and batch-norm coordinates: central differences of the full forward.
      auto grads = HlaGradients::zeros_like(params);
      std::vector<double> grad_x(analytic_input.storage().begin(), analytic_input.storage().end());
      std::vector<ParamRef> refs;
      for (auto& r : param_refs(params, grads)) {
        if (!r.name.starts_with("hla.volterra")) refs.push_back(r);
      }
      {
        auto src = param_refs(params, analytic);
        auto dst = param_refs(params, grads);
        for (std::size_t i = 0; i < dst.size(); ++i) std::ranges::copy(src[i].grad, dst[i].grad.begin());
      }
      refs.push_back({"input", x.data(), grad_x});
      const auto dense = grad_check_params(
          [&](bool) { return probe_dot(hla_forward(x, params, Mode::Train).output, probe); }, refs);
      rec.bound(label + " worst=" + dense.worst_name, "hla-gradient-vs-finite-difference",
                dense.max_rel_error, 1e-5);

      // Volterra weights: the conv output is linear in them, so w +- h e_t shifts
      // one output channel by +- h * term_t. The rest of the block is evaluated
      // from scratch on the shifted pre-activation.
      rec.begin_case();
      const Tensor u = params.input_bn ? batchnorm_forward(x, *params.input_bn, Mode::Train).output : x;
      const auto conv = conv2d_forward(u, params.volterra);
      const Tensor global = se_branch(x, params);
      const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
      auto tail = [&](const Tensor& z) {
        const Tensor bn = batchnorm_forward(z, params.bn, Mode::Train).output;
        double value = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double local = 1.0 / (1.0 + std::exp(-bn[i]));
          value += x[i] * shake_combine(global[i / S], local) * probe[i];
        }
        return value;
      };
      const double whole = probe_dot(base.output, probe);
      rec.bound(label + " tail", "hla-tail-recomposition", rel_error(tail(conv.output), whole), 1e-12);

      const double h = 1e-6;
      const std::size_t T = conv.saved.total_terms;
      const IndexSet& indices = *params.volterra.indices;
      double worst = 0.0;
      std::string worst_name;
      Tensor z = conv.output;
      auto shifted = [&](std::size_t oc, std::optional<std::size_t> t, double delta) {
        auto set = [&](double d) {
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t s = 0; s < S; ++s) {
              const std::size_t i = (b * C + oc) * S + s;
              z[i] = conv.output[i] + d * (t ? conv.saved.terms[(b * S + s) * T + *t] : 1.0);
            }
          }
        };
        set(delta);
        const double v = tail(z);
        set(0.0);
        return v;
      };
      auto consider = [&](double a, double numeric, const std::string& name) {
        const double err = rel_error(a, numeric);
        if (err > worst || worst_name.empty()) worst = err, worst_name = name;
      };
      for (std::size_t oc = 0; oc < C; ++oc) {
        const auto& g = analytic.volterra[oc];
        const std::string prefix = "hla.volterra[" + std::to_string(oc) + "]";
        consider(g.bias, (shifted(oc, std::nullopt, h) - shifted(oc, std::nullopt, -h)) / (2 * h), prefix + ".bias");
        for (int j = 1; j <= g.order; ++j) {
          const auto& w = g.weights[static_cast<std::size_t>(j - 1)];
          for (std::size_t k = 0; k < w.size(); ++k) {
            const std::size_t t = indices.term_offset(j) + k;
            consider(w[k], (shifted(oc, t, h) - shifted(oc, t, -h)) / (2 * h),
                     prefix + ".w" + std::to_string(j) + "[" + std::to_string(k) + "]");
          }
        }
      }
      rec.bound(label + " volterra worst=" + worst_name, "hla-gradient-vs-finite-difference", worst, 1e-5);
    }
    return result;
  });
}

SuiteResult check_jacobian(int max_n, int max_order, std::uint64_t seed) {
  return timed([&] {
    SuiteResult result;
    result.gradient = true;
    Recorder rec(result, "explicit-jacobian");
    std::mt19937_64 rng(seed + 4);
    std::uniform_int_distribution<int> small(-3, 3);
    for (int n = 1; n <= max_n; ++n) {
      for (int r = 1; r <= max_order; ++r) {
        for (int trial = 0; trial < 20; ++trial) {
          rec.begin_case();
          const auto id = case_id(n, r, trial);
          const bool integral = trial % 2 == 0;
          auto dense = DenseKernel::zeros(n, r);
          std::vector<double> x(static_cast<std::size_t>(n));
          std::uniform_real_distribution<double> real(-1.0, 1.0);
          for (auto& w : dense.weights)
            for (double& v : w) v = integral ? small(rng) : real(rng);
          for (double& v : x) v = integral ? small(rng) : real(rng);
          const auto via_jacobian = reference::jacobian_grad_input(x, dense);
          const auto fast = tvc_grad_input(x, dense, 1.0);
          if (integral) {
            // Every intermediate is a small integer, so both routes are exact.
            if (via_jacobian != fast) {
              rec.fail(id, "jacobian-exact-integer", "max diff " + num(max_abs_diff(fast, via_jacobian)), "0");
            }
          } else {
            rec.bound(id, "jacobian-vs-tvc-grad-input", max_rel_error(fast, via_jacobian), 1e-12);
          }
        }
      }
    }
    return result;
  });
}

bool VerifyReport::ok() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.ok(); });
}

std::size_t VerifyReport::total_cases() const {
  std::size_t n = 0;
  for (const auto& s : suites) n += s.cases;
  return n;
}

double VerifyReport::max_gradient_error() const {
  double m = 0.0;
  for (const auto& s : suites) {
    if (s.gradient) m = std::max(m, s.max_error);
  }
  return m;
}

VerifyReport run_verify(const VerifyOptions& options) {
  VerifyReport report;
  EquivalenceGrid grid;
  grid.seed = options.seed;
  report.suites.push_back(check_counting(12, 6));
  report.suites.push_back(check_index_structures(8, 5, options.corrupt_pcm));
  report.suites.push_back(check_forward_equivalence(grid));
  report.suites.push_back(check_backward_equivalence(grid));
  report.suites.push_back(check_conv_layer(options.seed));
  report.suites.push_back(check_hla(options.seed));
  report.suites.push_back(check_jacobian(4, 3, options.seed));
  return report;
}

void write_verify_text(std::ostream& out, const VerifyReport& report) {
  for (const auto& s : report.suites) {
    out << (s.ok() ? "ok    " : "FAIL  ") << std::left << std::setw(24) << s.name << std::right
        << " cases " << std::setw(6) << s.cases << "  max error " << std::setprecision(3)
        << std::scientific << s.max_error << std::defaultfloat << "  " << std::fixed
        << std::setprecision(2) << s.seconds << " s" << std::defaultfloat << '\n';
    for (const auto& f : s.failures) {
      out << "      " << f.suite << " / " << f.case_name << ": " << f.invariant;
      if (!f.observed.empty()) out << " observed " << f.observed << ", expected " << f.expected;
      out << '\n';
    }
  }
  out << "suites " << report.suites.size() << ", cases " << report.total_cases()
      << ", max gradient error " << std::setprecision(3) << std::scientific << report.max_gradient_error()
      << std::defaultfloat << ", " << (report.ok() ? "all passed" : "FAILED") << '\n';
}

void write_verify_csv(std::ostream& out, const VerifyReport& report) {
  out << "suite,cases,failures,max_error,seconds,status\n";
  for (const auto& s : report.suites) {
    out << s.name << ',' << s.cases << ',' << s.failures.size() << ',' << std::setprecision(6) << s.max_error
        << ',' << s.seconds << ',' << (s.ok() ? "ok" : "fail") << '\n';
  }
}

}  // namespace evc
