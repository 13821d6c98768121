#pragma once

// Minimal reverse-mode tape covering what the demo classifier needs.
// Nodes are recorded in execution order, which is a topological order, so
// backward is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "evc/batchnorm.hpp"
#include "evc/hla.hpp"
#include "evc/tensor.hpp"
#include "evc/volterra_efficient.hpp"

namespace evc {

class Graph {
 public:
  using NodeId = std::size_t;
  using BackwardFn = std::function<void(Graph&, NodeId self)>;

  NodeId constant(Tensor value);
  /// `inputs` must already be on the tape. `backward` reads grad(self) and
  /// accumulates into its inputs.
  NodeId record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  /// Zero tensor shaped like the value if nothing has flowed in yet.
  const Tensor& grad(NodeId id);
  void accumulate_grad(NodeId id, const Tensor& g);

  /// Seeds a scalar root with 1 and runs every recorded backward once.
  void backward(NodeId root);

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_calls() const { return backward_calls_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::size_t backward_calls_ = 0;
};

/// y = W x + b over the trailing feature axis of a [batch, in] tensor.
struct Affine {
  Tensor weight;  // [out, in]
  std::vector<double> bias;

  static Affine zeros(int in, int out);
  static Affine random(int in, int out, std::mt19937_64& rng);
};

namespace ops {

Graph::NodeId volterra_conv(Graph& g, Graph::NodeId x, const VolterraConvLayer& layer,
                            std::vector<UniqueKernel>& kernel_grads);
/// Train mode also folds the batch statistics into `bn`'s running ones.
Graph::NodeId batch_norm(Graph& g, Graph::NodeId x, BatchNorm2d& bn, std::vector<double>& dgamma,
                         std::vector<double>& dbeta, Mode mode);
Graph::NodeId relu(Graph& g, Graph::NodeId x);
/// Non-overlapping k x k average pooling; h and w must be divisible by k.
Graph::NodeId avg_pool(Graph& g, Graph::NodeId x, int k);
Graph::NodeId hla(Graph& g, Graph::NodeId x, HlaParams& params, HlaGradients& grads, Mode mode);
/// [B, C, H, W] -> [B, C]
Graph::NodeId global_avg_pool(Graph& g, Graph::NodeId x);
/// [B, ...] -> [B, rest]
Graph::NodeId flatten(Graph& g, Graph::NodeId x);
Graph::NodeId affine(Graph& g, Graph::NodeId x, const Affine& layer, Affine& grads);
/// Mean softmax cross-entropy over the batch; returns a [1] node.
Graph::NodeId softmax_cross_entropy(Graph& g, Graph::NodeId logits, std::span<const int> labels);

}  // namespace ops

}  // namespace evc
