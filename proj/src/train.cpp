#include "evc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "evc/error.hpp"

namespace evc {
namespace {

std::vector<double> per_sample_losses(const Tensor& logits, std::span<const int> labels,
                                      std::vector<int>* predictions) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<double> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = logits.data().data() + b * K;
    const auto best = std::max_element(row, row + K);
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(row[k] - *best);
    out[b] = std::log(denom) - (row[static_cast<std::size_t>(labels[b])] - *best);
    if (predictions) predictions->push_back(static_cast<int>(best - row));
  }
  return out;
}

DatasetBatch gather(const DatasetBatch& data, std::span<const std::size_t> rows) {
  auto shape = data.images.shape();
  const std::size_t stride = data.images.size() / shape[0];
  shape[0] = rows.size();
  DatasetBatch out{Tensor(shape), {}};
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = data.images.data().subspan(rows[i] * stride, stride);
    std::copy(src.begin(), src.end(), out.images.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    out.labels.push_back(data.labels[rows[i]]);
  }
  return out;
}

void require_finite(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "training diverged: loss " << loss << " at epoch " << epoch << ", batch " << batch
        << "; lower learning_rate or check the inputs";
    throw NumericError(msg.str());
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (decay_epoch < 0) throw std::invalid_argument("decay_epoch must be >= 0");
  if (!(decay_factor > 0.0)) throw std::invalid_argument("decay_factor must be > 0");
}

double SgdConfig::rate_at(int epoch) const {
  return decay_epoch > 0 && epoch > decay_epoch ? learning_rate * decay_factor : learning_rate;
}

void Classifier::zero_grad() {
  for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

LinearClassifier::LinearClassifier(int features, int classes, std::mt19937_64& rng)
    : fc_(Affine::random(features, classes, rng)), fc_grad_(Affine::zeros(features, classes)) {}

Graph::NodeId LinearClassifier::forward(Graph& g, const Tensor& images, Mode) {
  return ops::affine(g, ops::flatten(g, g.constant(images)), fc_, fc_grad_);
}

std::vector<ParamRef> LinearClassifier::params() {
  return {{"fc.weight", fc_.weight.data(), fc_grad_.weight.data()},
          {"fc.bias", fc_.bias, fc_grad_.bias}};
}

ConvHlaClassifier::ConvHlaClassifier(const ConvHlaSpec& spec, std::mt19937_64& rng) : spec_(spec) {
  if (spec.pool < 1 || spec.height % spec.pool != 0 || spec.width % spec.pool != 0 ||
      (spec.height / spec.pool) % 2 != 0 || (spec.width / spec.pool) % 2 != 0) {
    throw std::invalid_argument("image size must be divisible by pool and then by 2");
  }
  ConvGeometry geom;
  geom.kernel_h = geom.kernel_w = 3;
  geom.pad_h = geom.pad_w = 1;
  geom.in_channels = spec.in_channels;
  geom.in_h = spec.height;
  geom.in_w = spec.width;
  conv_ = make_volterra_conv(geom, spec.conv_channels, spec.conv_order, rng);
  for (const auto& k : conv_.kernels) conv_grad_.push_back(UniqueKernel::zeros(k.n, k.order));
  bn_ = BatchNorm2d::identity(spec.conv_channels);
  bn_dgamma_.assign(static_cast<std::size_t>(spec.conv_channels), 0.0);
  bn_dbeta_.assign(static_cast<std::size_t>(spec.conv_channels), 0.0);
  const int h = spec.height / spec.pool, w = spec.width / spec.pool;
  hla_ = make_hla(HlaConfig{spec.conv_channels, spec.hla_reduction, false}, h, w, rng);
  hla_grad_ = HlaGradients::zeros_like(hla_);
  const int features = spec.conv_channels * (h / 2) * (w / 2);
  fc_ = Affine::random(features, spec.classes, rng);
  fc_grad_ = Affine::zeros(features, spec.classes);
}

Graph::NodeId ConvHlaClassifier::forward(Graph& g, const Tensor& images, Mode mode) {
  auto x = ops::volterra_conv(g, g.constant(images), conv_, conv_grad_);
  x = ops::batch_norm(g, x, bn_, bn_dgamma_, bn_dbeta_, mode);
  x = ops::relu(g, x);
  x = ops::avg_pool(g, x, spec_.pool);
  x = ops::hla(g, x, hla_, hla_grad_, mode);
  x = ops::avg_pool(g, x, 2);
  return ops::affine(g, ops::flatten(g, x), fc_, fc_grad_);
}

std::vector<ParamRef> ConvHlaClassifier::params() {
  std::vector<ParamRef> refs;
  append_kernel_refs(refs, "conv", conv_.kernels, conv_grad_);
  refs.push_back({"bn.gamma", bn_.gamma, bn_dgamma_});
  refs.push_back({"bn.beta", bn_.beta, bn_dbeta_});
  for (auto& r : param_refs(hla_, hla_grad_)) refs.push_back(std::move(r));
  refs.push_back({"fc.weight", fc_.weight.data(), fc_grad_.weight.data()});
  refs.push_back({"fc.bias", fc_.bias, fc_grad_.bias});
  return refs;
}

SgdOptimizer::SgdOptimizer(std::vector<ParamRef> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) velocity_.emplace_back(p.value.size(), 0.0);
}

void SgdOptimizer::step(double learning_rate) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& v = velocity_[k];
    auto value = params_[k].value;
    auto grad = params_[k].grad;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = momentum_ * v[i] + grad[i] + weight_decay_ * value[i];
      value[i] -= learning_rate * v[i];
    }
  }
}

Evaluation evaluate(Classifier& model, const DatasetBatch& data, std::size_t batch_size) {
  Evaluation e;
  const std::size_t total = data.labels.size();
  if (total == 0) return e;
  std::vector<double> losses;
  std::vector<int> predictions;
  for (const auto& batch : split_batches(data, batch_size)) {
    Graph g;
    const auto logits = model.forward(g, batch.images, Mode::Inference);
    const auto l = per_sample_losses(g.value(logits), batch.labels, &predictions);
    losses.insert(losses.end(), l.begin(), l.end());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < total; ++i) correct += predictions[i] == data.labels[i];
  e.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(total);
  e.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return e;
}

std::vector<EpochLog> train_demo(Classifier& model, const DatasetBatch& train, const DatasetBatch& test,
                                 const SgdConfig& cfg, std::ostream* progress) {
  cfg.validate();
  if (train.labels.empty()) throw std::invalid_argument("training set is empty");
  const auto started = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const auto report = [&](const EpochLog& row) {
    if (progress) {
      *progress << "epoch " << row.epoch << ": train_loss " << row.train_loss << ", train_acc "
                << row.train_acc << ", test_acc " << row.test_acc << " (" << row.wall_seconds
                << " s)\n"
                << std::flush;
    }
  };

  std::vector<EpochLog> log;
  const auto initial = evaluate(model, train, batch_size);
  log.push_back({0, initial.loss, initial.accuracy, evaluate(model, test, batch_size).accuracy, elapsed()});
  require_finite(initial.loss, 0, 0);
  report(log.back());

  SgdOptimizer opt(model.params(), cfg.momentum, cfg.weight_decay);
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 1));
  const std::size_t total = train.labels.size();
  std::vector<std::size_t> order(total);
  std::vector<double> losses(total);
  std::vector<int> predictions;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t correct = 0;
    for (std::size_t start = 0, index = 0; start < total; start += batch_size, ++index) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch_size, total - start));
      const auto batch = gather(train, rows);
      model.zero_grad();
      Graph g;
      const auto logits = model.forward(g, batch.images, Mode::Train);
      const auto loss = ops::softmax_cross_entropy(g, logits, batch.labels);
      require_finite(g.value(loss)[0], epoch, index);
      predictions.clear();
      const auto sample_losses = per_sample_losses(g.value(logits), batch.labels, &predictions);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        losses[rows[i]] = sample_losses[i];
        correct += predictions[i] == batch.labels[i];
      }
      g.backward(loss);
      opt.step(cfg.rate_at(epoch));
    }
    EpochLog row;
    row.epoch = epoch;
    row.train_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(total);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(total);
    row.test_acc = evaluate(model, test, batch_size).accuracy;
    row.wall_seconds = elapsed();
    log.push_back(row);
    report(row);
  }
  return log;
}

void write_training_log(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,train_loss,train_acc,test_acc,wall_seconds\n";
  const auto old_precision = out.precision(17);
  for (const auto& row : log) {
    out << row.epoch << ',' << row.train_loss << ',' << row.train_acc << ',' << row.test_acc << ','
        << row.wall_seconds << '\n';
  }
  out.precision(old_precision);
}

DatasetBatch make_separable_blobs(int per_class, int features, double separation, std::uint64_t seed) {
  if (per_class < 1 || features < 1) throw std::invalid_argument("blobs need >= 1 sample and feature");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-0.5, 0.5);
  const auto n = static_cast<std::size_t>(2 * per_class);
  const auto f = static_cast<std::size_t>(features);
  DatasetBatch out{Tensor({n, f}), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    for (std::size_t k = 0; k < f; ++k) out.images[i * f + k] = box(rng);
    out.images[i * f] += label == 0 ? -separation : separation;
    out.labels.push_back(label);
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, std::size_t line) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw FormatError("config line " + std::to_string(line) + ": '" + key + "' expects a number, got '" +
                      text + "'");
  }
  return value;
}

}  // namespace

DemoConfig parse_demo_config(std::istream& in) {
  DemoConfig cfg;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line) + ": expected key=value");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const auto integer = [&] { return parse_number<int>(key, value, line); };
    const auto real = [&] { return parse_number<double>(key, value, line); };
    if (key == "dataset") {
      if (value != "cifar100" && value != "blobs") {
        throw FormatError("config line " + std::to_string(line) + ": dataset must be cifar100 or blobs");
      }
      cfg.dataset = value;
    } else if (key == "data_dir") {
      cfg.data_dir = value;
    } else if (key == "classes") {
      cfg.classes.clear();
      std::istringstream list(value);
      std::string item;
      while (std::getline(list, item, ',')) cfg.classes.push_back(parse_number<int>(key, trim(item), line));
    } else if (key == "train_per_class") {
      cfg.train_per_class = integer();
    } else if (key == "test_per_class") {
      cfg.test_per_class = integer();
    } else if (key == "model") {
      if (value != "conv_hla" && value != "linear") {
        throw FormatError("config line " + std::to_string(line) + ": model must be conv_hla or linear");
      }
      cfg.model = value;
    } else if (key == "conv_channels") {
      cfg.conv_channels = integer();
    } else if (key == "conv_order") {
      cfg.conv_order = integer();
    } else if (key == "pool") {
      cfg.pool = integer();
    } else if (key == "hla_reduction") {
      cfg.hla_reduction = integer();
    } else if (key == "features") {
      cfg.features = integer();
    } else if (key == "separation") {
      cfg.separation = real();
    } else if (key == "epochs") {
      cfg.sgd.epochs = integer();
    } else if (key == "batch_size") {
      cfg.sgd.batch_size = integer();
    } else if (key == "learning_rate") {
      cfg.sgd.learning_rate = real();
    } else if (key == "momentum") {
      cfg.sgd.momentum = real();
    } else if (key == "weight_decay") {
      cfg.sgd.weight_decay = real();
    } else if (key == "seed") {
      cfg.sgd.seed = parse_number<std::uint64_t>(key, value, line);
    } else if (key == "decay_epoch") {
      cfg.sgd.decay_epoch = integer();
    } else if (key == "decay_factor") {
      cfg.sgd.decay_factor = real();
    } else if (key == "log") {
      cfg.log = value;
    } else {
      throw FormatError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  cfg.sgd.validate();
  if (cfg.train_per_class < 1 || cfg.test_per_class < 0) {
    throw FormatError("train_per_class must be >= 1 and test_per_class >= 0");
  }
  return cfg;
}

DemoConfig load_demo_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_demo_config(in);
}

std::vector<EpochLog> run_train_demo(const DemoConfig& cfg, const std::filesystem::path& base_dir,
                                     std::ostream* progress) {
  std::mt19937_64 init_rng(mix_seed(cfg.sgd.seed, 0));
  DatasetBatch train, test;
  std::unique_ptr<Classifier> model;

  if (cfg.dataset == "blobs") {
    const auto all = make_separable_blobs(cfg.train_per_class + cfg.test_per_class, cfg.features,
                                          cfg.separation, mix_seed(cfg.sgd.seed, 2));
    const auto n_train = static_cast<std::size_t>(2 * cfg.train_per_class);
    const auto parts = split_batches(all, n_train);
    train = parts.at(0);
    if (parts.size() > 1) test = parts[1];
  } else {
    const auto dir = cfg.data_dir.is_absolute() ? cfg.data_dir : base_dir / cfg.data_dir;
    const auto train_path = dir / "train.bin";
    const auto test_path = dir / "test.bin";
    if (!std::filesystem::is_regular_file(train_path) || !std::filesystem::is_regular_file(test_path)) {
      throw MissingDataError("CIFAR-100 binary data not found: expected " + train_path.string() + " and " +
                             test_path.string() +
                             " (the cifar-100-binary release: records of 1 coarse-label byte, "
                             "1 fine-label byte and 3072 pixel bytes)");
    }
    CifarLoadOptions opt;
    opt.class_filter = std::set<int>(cfg.classes.begin(), cfg.classes.end());
    opt.batch_size = 1u << 30;
    opt.per_class_limit = static_cast<std::size_t>(cfg.train_per_class);
    train = concat_batches(load_cifar100(train_path, opt));
    opt.per_class_limit = static_cast<std::size_t>(cfg.test_per_class);
    if (cfg.test_per_class > 0) test = concat_batches(load_cifar100(test_path, opt));
  }
  if (train.labels.empty()) throw std::invalid_argument("the configured class subset selected no images");

  const int classes = cfg.dataset == "blobs" ? 2 : static_cast<int>(std::set<int>(cfg.classes.begin(), cfg.classes.end()).size());
  if (cfg.model == "linear") {
    model = std::make_unique<LinearClassifier>(static_cast<int>(train.images.size() / train.labels.size()),
                                               classes, init_rng);
  } else {
    if (train.images.rank() != 4) throw std::invalid_argument("conv_hla needs image data");
    ConvHlaSpec spec;
    spec.in_channels = static_cast<int>(train.images.dim(1));
    spec.height = static_cast<int>(train.images.dim(2));
    spec.width = static_cast<int>(train.images.dim(3));
    spec.conv_channels = cfg.conv_channels;
    spec.conv_order = cfg.conv_order;
    spec.pool = cfg.pool;
    spec.hla_reduction = cfg.hla_reduction;
    spec.classes = classes;
    model = std::make_unique<ConvHlaClassifier>(spec, init_rng);
  }
  return train_demo(*model, train, test, cfg.sgd, progress);
}

}  // namespace evc
