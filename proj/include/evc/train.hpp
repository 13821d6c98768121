#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "evc/autograd.hpp"
#include "evc/cifar.hpp"
#include "evc/params.hpp"

namespace evc {

struct SgdConfig {
  double learning_rate = 0.01;  // 0 is accepted and freezes the model
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int decay_epoch = 0;  // epochs after this one use learning_rate * decay_factor; 0 disables
  double decay_factor = 0.1;

  void validate() const;
  /// Learning rate used during 1-based `epoch`.
  double rate_at(int epoch) const;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  /// Records the forward pass on `g` and returns the logits node ([B, classes]).
  virtual Graph::NodeId forward(Graph& g, const Tensor& images, Mode mode) = 0;
  /// Parameter values paired with their gradient buffers; the spans stay
  /// valid for the lifetime of the model.
  virtual std::vector<ParamRef> params() = 0;
  void zero_grad();
};

/// flatten -> affine.
class LinearClassifier final : public Classifier {
 public:
  LinearClassifier(int features, int classes, std::mt19937_64& rng);
  Graph::NodeId forward(Graph& g, const Tensor& images, Mode mode) override;
  std::vector<ParamRef> params() override;

 private:
  Affine fc_;
  Affine fc_grad_;
};

struct ConvHlaSpec {
  int in_channels = 3;
  int height = 32;
  int width = 32;
  int conv_channels = 8;
  int conv_order = 2;
  int pool = 4;           // after the first conv block
  int hla_reduction = 4;
  int classes = 2;
};

/// Volterra conv 3x3 pad 1 -> BN -> ReLU -> avg pool -> HLA -> avg pool 2 ->
/// flatten -> affine.
class ConvHlaClassifier final : public Classifier {
 public:
  ConvHlaClassifier(const ConvHlaSpec& spec, std::mt19937_64& rng);
  Graph::NodeId forward(Graph& g, const Tensor& images, Mode mode) override;
  std::vector<ParamRef> params() override;

 private:
  ConvHlaSpec spec_;
  VolterraConvLayer conv_;
  std::vector<UniqueKernel> conv_grad_;
  BatchNorm2d bn_;
  std::vector<double> bn_dgamma_;
  std::vector<double> bn_dbeta_;
  HlaParams hla_;
  HlaGradients hla_grad_;
  Affine fc_;
  Affine fc_grad_;
};

/// SGD with momentum and L2 weight decay (added to the gradient).
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<ParamRef> params, double momentum, double weight_decay);
  void step(double learning_rate);

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double wall_seconds = 0.0;
};

/// Row 0 evaluates the untrained model; rows 1..epochs follow each training
/// epoch. Training loss is the mean per-sample loss, summed in sample order
/// so it does not depend on the shuffle. Throws NumericError if the loss
/// stops being finite.
std::vector<EpochLog> train_demo(Classifier& model, const DatasetBatch& train, const DatasetBatch& test,
                                 const SgdConfig& cfg, std::ostream* progress = nullptr);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(Classifier& model, const DatasetBatch& data, std::size_t batch_size);

void write_training_log(std::ostream& out, const std::vector<EpochLog>& log);

/// Two linearly separable classes in [per_class * 2, features] form: points
/// are uniform in a unit box centred at -separation (class 0) or +separation
/// (class 1) on the first axis. Separable whenever separation > 0.5.
DatasetBatch make_separable_blobs(int per_class, int features, double separation, std::uint64_t seed);

/// Flat key=value demo description; '#' starts a comment.
struct DemoConfig {
  std::string dataset = "cifar100";  // cifar100 | blobs
  std::filesystem::path data_dir = "data/cifar-100-binary";
  std::vector<int> classes{0, 1};
  int train_per_class = 500;
  int test_per_class = 100;
  std::string model = "conv_hla";  // conv_hla | linear
  int conv_channels = 8;
  int conv_order = 2;
  int pool = 4;
  int hla_reduction = 4;
  int features = 2;  // blobs only
  double separation = 1.0;  // blobs only
  SgdConfig sgd;
  std::filesystem::path log;  // empty: caller decides
};

DemoConfig parse_demo_config(std::istream& in);
DemoConfig load_demo_config(const std::filesystem::path& path);

/// Loads the data named by `cfg` (relative data_dir resolved against
/// `base_dir`), builds the model and trains it.
std::vector<EpochLog> run_train_demo(const DemoConfig& cfg, const std::filesystem::path& base_dir,
                                     std::ostream* progress = nullptr);

}  // namespace evc
