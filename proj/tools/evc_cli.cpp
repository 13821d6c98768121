// evc: self-checks, index export, speed/space benchmarks and the training demo.
//
// Exit status: 0 success, 1 verification failure (or a diverged training
// run), 2 usage or input error, 3 resource limit exceeded.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "evc/bench.hpp"
#include "evc/cifar.hpp"
#include "evc/error.hpp"
#include "evc/index_gen.hpp"
#include "evc/index_io.hpp"
#include "evc/train.hpp"
#include "evc/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;
constexpr int kResourceLimit = 3;

// Upper bound on index entries gen-indices will build (FPM plus PCM cells).
constexpr std::uint64_t kIndexEntryBudget = 200'000'000;

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

/// Runs `write` against --out, or stdout when --out is empty or "-".
template <typename F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open output file " + path);
  write(file);
  file.flush();
  if (!file) throw std::runtime_error("write failed: " + path);
}

void add_bench_options(CLI::App* cmd, evc::BenchConfig& cfg, std::string& kernels) {
  cmd->add_option("--orders", cfg.orders, "Volterra orders to sweep")->delimiter(',')->capture_default_str();
  cmd->add_option("--kernels", kernels, "kernel sizes, e.g. 3x3,5x5")->capture_default_str();
  cmd->add_option("--batch", cfg.batch, "batch size")->capture_default_str();
  cmd->add_option("--channels", cfg.channels, "input channels")->capture_default_str();
  cmd->add_option("--out-channels", cfg.out_channels, "output channels")->capture_default_str();
  cmd->add_option("--repetitions", cfg.repetitions, "timed runs per cell (>= 3, median reported)")
      ->capture_default_str();
  cmd->add_option("--warmup", cfg.warmup, "discarded runs before timing (>= 1)")->capture_default_str();
  cmd->add_option("--budget", cfg.element_budget, "max doubles per implementation before a row is skipped")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volterra filtering over unique terms: checks, benchmarks and demo training"};
  app.require_subcommand(1);
  // Global options may also follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed (train-demo: overrides the config)");
  app.add_option("--threads", g.threads, "worker threads for batch-parallel benchmark mode")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out", g.out, "output file (default: stdout)");
  app.footer("Exit status: 0 ok, 1 verification failure, 2 usage/input error, 3 resource limit.");

  auto* verify = app.add_subcommand("verify", "run every oracle-equivalence, counting and gradient suite");
  std::string fault;
  verify->add_option("--inject-fault", fault, "corrupt an index table before checking (test hook)")
      ->check(CLI::IsMember({"pcm"}));
  verify->footer(
      "Prints a human-readable report; --out also writes CSV with columns\n"
      "  suite,cases,failures,max_error,seconds,status");

  evc::BenchConfig speed_cfg;
  std::string speed_kernels = "2x2,3x3";
  auto* speed = app.add_subcommand("bench-speed", "median wall time of Kronecker vs unique-term filtering");
  add_bench_options(speed, speed_cfg, speed_kernels);
  speed->footer(
      "CSV columns: impl,phase,order,n,batch,channels,median_ns,theory_ops,threads,status\n"
      "  impl tvc|evc, phase forward|backward, n = kernel_h*kernel_w,\n"
      "  theory_ops = sum_j n^j (tvc) or sum_j binomial(n+j-1, j) (evc),\n"
      "  status ok or 'skipped: <reason>' when the Kronecker form exceeds --budget.");

  evc::BenchConfig space_cfg;
  space_cfg.orders = {1, 2, 3, 4};
  space_cfg.channels = 100;
  space_cfg.batch = 1;
  std::string space_kernels = "5x5";
  auto* space = app.add_subcommand("bench-space", "term-buffer bytes of Kronecker vs unique-term filtering");
  add_bench_options(space, space_cfg, space_kernels);
  space->footer(
      "CSV columns: impl,order,n,batch,channels,order_terms,total_terms,measured_order_bytes,\n"
      "  measured_total_bytes,theory_bytes,index_bytes,ratio,status\n"
      "  term counts are per input vector; bytes cover all batch*channels vectors and are\n"
      "  measured through an instrumented allocator; index_bytes is the PCM table size;\n"
      "  ratio = evc measured_total_bytes / tvc measured_total_bytes.");

  int gen_n = 0, gen_order = 0;
  auto* gen = app.add_subcommand("gen-indices", "export FPM^1..r and PCMs^2..r as JSON");
  gen->add_option("--n", gen_n, "input length")->required()->check(CLI::PositiveNumber);
  gen->add_option("--order", gen_order, "Volterra order r")->required()->check(CLI::PositiveNumber);
  gen->footer("JSON layout: see docs/formats.md. Output is byte-identical across runs.");

  std::string config_path;
  auto* train = app.add_subcommand("train-demo", "train the demo classifier described by a config file");
  train->add_option("config", config_path, "flat key=value config (see configs/train_demo.cfg)")
      ->required();
  train->footer(
      "Writes the log CSV to --out, else to the config's 'log' key, else stdout. Columns:\n"
      "  epoch,train_loss,train_acc,test_acc,wall_seconds\n"
      "Row 0 is the untrained model. Progress goes to stderr.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*verify) {
      evc::VerifyOptions opt;
      opt.seed = g.seed.value_or(0);
      opt.corrupt_pcm = fault == "pcm";
      const auto report = evc::run_verify(opt);
      evc::write_verify_text(std::cout, report);
      if (!g.out.empty()) emit(g.out, [&](std::ostream& o) { evc::write_verify_csv(o, report); });
      return report.ok() ? kOk : kVerifyFailed;
    }
    if (*speed || *space) {
      auto& cfg = *speed ? speed_cfg : space_cfg;
      cfg.kernel_sizes = evc::parse_kernel_sizes(*speed ? speed_kernels : space_kernels);
      cfg.threads = g.threads;
      cfg.seed = g.seed.value_or(0);
      if (*speed) {
        const auto rows = evc::bench_speed(cfg);
        emit(g.out, [&](std::ostream& o) { evc::write_speed_csv(o, rows); });
      } else {
        const auto rows = evc::bench_space(cfg);
        emit(g.out, [&](std::ostream& o) { evc::write_space_csv(o, rows); });
      }
      return kOk;
    }
    if (*gen) {
      const std::uint64_t entries = evc::count_params(gen_n, gen_order) * static_cast<std::uint64_t>(gen_order) * 3;
      if (entries > kIndexEntryBudget) {
        throw evc::ResourceLimitError("index tables for n=" + std::to_string(gen_n) + ", r=" +
                                      std::to_string(gen_order) + " exceed the entry budget");
      }
      const evc::IndexSet set(gen_n, gen_order);
      const auto json = evc::to_json(evc::export_indices(set));
      emit(g.out, [&](std::ostream& o) { o << json; });
      return kOk;
    }
    if (*train) {
      auto cfg = evc::load_demo_config(config_path);
      if (g.seed) cfg.sgd.seed = *g.seed;
      const auto base = std::filesystem::path(config_path).parent_path();
      const auto log = evc::run_train_demo(cfg, base, &std::cerr);
      std::string target = g.out;
      if (target.empty() && !cfg.log.empty()) {
        target = (cfg.log.is_absolute() ? cfg.log : base / cfg.log).string();
      }
      emit(target, [&](std::ostream& o) { evc::write_training_log(o, log); });
      if (!log.empty()) std::cerr << "final test accuracy " << log.back().test_acc << '\n';
      return kOk;
    }
  } catch (const evc::ResourceLimitError& e) {
    std::cerr << "evc: resource limit: " << e.what() << '\n';
    return kResourceLimit;
  } catch (const std::overflow_error& e) {
    std::cerr << "evc: resource limit: " << e.what() << '\n';
    return kResourceLimit;
  } catch (const evc::NumericError& e) {
    std::cerr << "evc: " << e.what() << '\n';
    return kVerifyFailed;
  } catch (const std::exception& e) {
    std::cerr << "evc: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
