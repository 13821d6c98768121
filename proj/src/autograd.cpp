#include "evc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace evc {

Graph::NodeId Graph::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Graph::NodeId Graph::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  const NodeId id = nodes_.size();
  for (NodeId in : inputs) {
    if (in >= id) throw std::invalid_argument("graph inputs must be recorded before their consumers");
  }
  nodes_.push_back({std::move(value), Tensor(), std::move(inputs), std::move(backward)});
  return id;
}

const Tensor& Graph::grad(NodeId id) {
  Node& node = nodes_.at(id);
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Graph::accumulate_grad(NodeId id, const Tensor& g) {
  Node& node = nodes_.at(id);
  if (g.shape() != node.value.shape()) {
    throw std::invalid_argument("gradient " + g.shape_string() + " does not match node value " +
                                node.value.shape_string());
  }
  if (node.grad.empty()) {
    node.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

void Graph::backward(NodeId root) {
  if (nodes_.at(root).value.size() != 1) throw std::invalid_argument("backward root must be a scalar");
  for (auto& node : nodes_) node.grad = Tensor();
  nodes_[root].grad = Tensor(nodes_[root].value.shape(), 1.0);
  backward_calls_ = 0;
  for (NodeId id = root + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, id);
    ++backward_calls_;
  }
}

Affine Affine::zeros(int in, int out) {
  if (in < 1 || out < 1) throw std::invalid_argument("affine layer dimensions must be positive");
  return {Tensor({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
          std::vector<double>(static_cast<std::size_t>(out), 0.0)};
}

Affine Affine::random(int in, int out, std::mt19937_64& rng) {
  Affine a = zeros(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : a.weight.data()) w = dist(rng);
  for (double& b : a.bias) b = dist(rng);
  return a;
}

namespace ops {
namespace {

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw std::invalid_argument(std::string(op) + " expects a 4D tensor");
}

}  // namespace

Graph::NodeId volterra_conv(Graph& g, Graph::NodeId x, const VolterraConvLayer& layer,
                            std::vector<UniqueKernel>& kernel_grads) {
  auto fwd = conv2d_forward(g.value(x), layer);
  auto saved = std::make_shared<ConvSaved>(std::move(fwd.saved));
  return g.record(std::move(fwd.output), {x},
                  [x, &layer, &kernel_grads, saved](Graph& graph, Graph::NodeId self) {
                    auto grads = conv2d_backward(graph.grad(self), *saved, layer);
                    for (std::size_t oc = 0; oc < grads.kernels.size(); ++oc) {
                      auto& dst = kernel_grads.at(oc);
                      for (std::size_t j = 0; j < dst.weights.size(); ++j) {
                        auto& w = dst.weights[j];
                        const auto& src = grads.kernels[oc].weights[j];
                        for (std::size_t i = 0; i < w.size(); ++i) w[i] += src[i];
                      }
                      dst.bias += grads.kernels[oc].bias;
                    }
                    graph.accumulate_grad(x, grads.input);
                  });
}

Graph::NodeId batch_norm(Graph& g, Graph::NodeId x, BatchNorm2d& bn, std::vector<double>& dgamma,
                         std::vector<double>& dbeta, Mode mode) {
  auto fwd = batchnorm_forward(g.value(x), bn, mode);
  commit_running_stats(bn, fwd.saved);
  auto saved = std::make_shared<BatchNormSaved>(std::move(fwd.saved));
  return g.record(std::move(fwd.output), {x},
                  [x, &bn, &dgamma, &dbeta, saved](Graph& graph, Graph::NodeId self) {
                    auto grads = batchnorm_backward(graph.grad(self), *saved, bn);
                    for (std::size_t c = 0; c < dgamma.size(); ++c) {
                      dgamma[c] += grads.gamma[c];
                      dbeta[c] += grads.beta[c];
                    }
                    graph.accumulate_grad(x, grads.input);
                  });
}

Graph::NodeId relu(Graph& g, Graph::NodeId x) {
  Tensor out = g.value(x);
  for (double& v : out.data()) v = std::max(0.0, v);
  return g.record(std::move(out), {x}, [x](Graph& graph, Graph::NodeId self) {
    Tensor dx = graph.grad(self);
    const Tensor& in = graph.value(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!(in[i] > 0.0)) dx[i] = 0.0;
    }
    graph.accumulate_grad(x, dx);
  });
}

Graph::NodeId avg_pool(Graph& g, Graph::NodeId x, int k) {
  const Tensor& in = g.value(x);
  require_rank4(in, "avg_pool");
  const auto K = static_cast<std::size_t>(k);
  if (k < 1 || in.dim(2) % K != 0 || in.dim(3) % K != 0) {
    throw std::invalid_argument("avg_pool: spatial dims of " + in.shape_string() +
                                " are not divisible by " + std::to_string(k));
  }
  const std::size_t B = in.dim(0), C = in.dim(1), OH = in.dim(2) / K, OW = in.dim(3) / K;
  Tensor out({B, C, OH, OW});
  const double scale = 1.0 / static_cast<double>(K * K);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double sum = 0.0;
          for (std::size_t dy = 0; dy < K; ++dy)
            for (std::size_t dx = 0; dx < K; ++dx) sum += in.at(b, c, oy * K + dy, ox * K + dx);
          out.at(b, c, oy, ox) = sum * scale;
        }
  return g.record(std::move(out), {x}, [x, K, scale](Graph& graph, Graph::NodeId self) {
    const Tensor& up = graph.grad(self);
    Tensor dx(graph.value(x).shape());
    for (std::size_t b = 0; b < up.dim(0); ++b)
      for (std::size_t c = 0; c < up.dim(1); ++c)
        for (std::size_t oy = 0; oy < up.dim(2); ++oy)
          for (std::size_t ox = 0; ox < up.dim(3); ++ox) {
            const double v = up.at(b, c, oy, ox) * scale;
            for (std::size_t dy = 0; dy < K; ++dy)
              for (std::size_t ddx = 0; ddx < K; ++ddx) dx.at(b, c, oy * K + dy, ox * K + ddx) = v;
          }
    graph.accumulate_grad(x, dx);
  });
}

Graph::NodeId hla(Graph& g, Graph::NodeId x, HlaParams& params, HlaGradients& grads, Mode mode) {
  auto fwd = hla_forward(g.value(x), params, mode);
  commit_running_stats(params, fwd.saved);
  auto saved = std::make_shared<HlaSaved>(std::move(fwd.saved));
  return g.record(std::move(fwd.output), {x},
                  [x, &params, &grads, saved](Graph& graph, Graph::NodeId self) {
                    auto step = hla_backward(graph.grad(self), *saved, params);
                    grads.accumulate(step);
                    graph.accumulate_grad(x, step.input);
                  });
}

Graph::NodeId global_avg_pool(Graph& g, Graph::NodeId x) {
  const Tensor& in = g.value(x);
  require_rank4(in, "global_avg_pool");
  const std::size_t B = in.dim(0), C = in.dim(1), S = in.dim(2) * in.dim(3);
  Tensor out({B, C});
  for (std::size_t i = 0; i < B * C; ++i) {
    double sum = 0.0;
    for (std::size_t s = 0; s < S; ++s) sum += in[i * S + s];
    out[i] = sum / static_cast<double>(S);
  }
  return g.record(std::move(out), {x}, [x, S](Graph& graph, Graph::NodeId self) {
    const Tensor& up = graph.grad(self);
    Tensor dx(graph.value(x).shape());
    for (std::size_t i = 0; i < up.size(); ++i) {
      for (std::size_t s = 0; s < S; ++s) dx[i * S + s] = up[i] / static_cast<double>(S);
    }
    graph.accumulate_grad(x, dx);
  });
}

Graph::NodeId flatten(Graph& g, Graph::NodeId x) {
  const Tensor& in = g.value(x);
  const std::size_t B = in.dim(0);
  return g.record(in.reshaped({B, in.size() / B}), {x}, [x](Graph& graph, Graph::NodeId self) {
    graph.accumulate_grad(x, graph.grad(self).reshaped(graph.value(x).shape()));
  });
}

Graph::NodeId affine(Graph& g, Graph::NodeId x, const Affine& layer, Affine& grads) {
  const Tensor& in = g.value(x);
  const std::size_t O = layer.weight.dim(0), I = layer.weight.dim(1);
  if (in.rank() != 2 || in.dim(1) != I) {
    throw std::invalid_argument("affine layer with " + std::to_string(I) + " inputs cannot take " +
                                in.shape_string());
  }
  const std::size_t B = in.dim(0);
  Tensor out({B, O});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < I; ++i) acc += layer.weight[o * I + i] * in[b * I + i];
      out[b * O + o] = acc;
    }
  }
  return g.record(std::move(out), {x}, [x, &layer, &grads, B, O, I](Graph& graph, Graph::NodeId self) {
    const Tensor& up = graph.grad(self);
    const Tensor& in = graph.value(x);
    Tensor dx(in.shape());
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t o = 0; o < O; ++o) {
        const double d = up[b * O + o];
        grads.bias[o] += d;
        for (std::size_t i = 0; i < I; ++i) {
          grads.weight[o * I + i] += d * in[b * I + i];
          dx[b * I + i] += d * layer.weight[o * I + i];
        }
      }
    }
    graph.accumulate_grad(x, dx);
  });
}

Graph::NodeId softmax_cross_entropy(Graph& g, Graph::NodeId logits, std::span<const int> labels) {
  const Tensor& z = g.value(logits);
  if (z.rank() != 2 || z.dim(0) != labels.size()) {
    throw std::invalid_argument("softmax_cross_entropy: logits " + z.shape_string() +
                                " do not match " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = z.dim(0), K = z.dim(1);
  auto probs = std::make_shared<Tensor>(z.shape());
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto label = static_cast<std::size_t>(labels[b]);
    if (labels[b] < 0 || label >= K) throw std::invalid_argument("label outside the class range");
    const double* row = z.data().data() + b * K;
    const double peak = *std::max_element(row, row + K);
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(row[k] - peak);
    for (std::size_t k = 0; k < K; ++k) (*probs)[b * K + k] = std::exp(row[k] - peak) / denom;
    loss += -(row[label] - peak - std::log(denom));
  }
  std::vector<int> owned(labels.begin(), labels.end());
  return g.record(Tensor({1}, loss / static_cast<double>(B)), {logits},
                  [logits, probs, owned, B, K](Graph& graph, Graph::NodeId self) {
                    const double up = graph.grad(self)[0] / static_cast<double>(B);
                    Tensor dz = *probs;
                    for (std::size_t b = 0; b < B; ++b) dz[b * K + static_cast<std::size_t>(owned[b])] -= 1.0;
                    for (double& v : dz.data()) v *= up;
                    graph.accumulate_grad(logits, dz);
                  });
}

}  // namespace ops
}  // namespace evc
