// Command-line front end: price | surface | strategy | converge | validate.
// Exit codes: 0 success, 2 validation, 3 numeric failure, 4 precondition gate.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rainbow/job.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string out_dir = ".";
  std::string fast_path = "";
  std::string format = "json";
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "job config file (JSON)")->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--fast-path", opts.fast_path, "sub-modular fast path: auto|on|off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  cmd->add_option("--format", opts.format, "summary format: json|csv")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--threads", opts.threads, "OpenMP thread count (0 = default)");
}

int run(const CommonOpts& opts, rainbow::job::RunMode mode) {
#ifdef _OPENMP
  if (opts.threads > 0) omp_set_num_threads(opts.threads);
#endif
  std::vector<std::string> warnings;
  auto cfg = rainbow::job::load_config(opts.config, &warnings);
  if (!opts.fast_path.empty()) {
    if (opts.fast_path == "auto") cfg.fast_path = rainbow::lattice::FastPath::automatic;
    if (opts.fast_path == "on") cfg.fast_path = rainbow::lattice::FastPath::on;
    if (opts.fast_path == "off") cfg.fast_path = rainbow::lattice::FastPath::off;
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  auto art = rainbow::job::run_job(cfg, opts.out_dir, mode, opts.format);
  std::cout << art.summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guaranteed rainbow option pricing in interval markets"};
  app.require_subcommand(1);

  CommonOpts price_opts, surface_opts, strategy_opts, converge_opts;
  auto* price = app.add_subcommand("price", "price a job and write a summary");
  add_common(price, price_opts);
  auto* surface = app.add_subcommand("surface", "price over a grid of initial prices");
  add_common(surface, surface_opts);
  auto* strategy = app.add_subcommand("strategy", "dump the per-node hedge table");
  add_common(strategy, strategy_opts);
  auto* converge = app.add_subcommand("converge", "discrete-to-continuum comparison");
  add_common(converge, converge_opts);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a config and report field errors");
  validate->add_option("--config", validate_path, "job config file (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      std::ifstream in(validate_path);
      if (!in) {
        std::cerr << "error: cannot open " << validate_path << "\n";
        return 2;
      }
      nlohmann::json doc;
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: not valid JSON: " << e.what() << "\n";
        return 2;
      }
      auto outcome = rainbow::job::parse_config(doc);
      for (const auto& w : outcome.warnings) std::cout << "warning: " << w << "\n";
      if (!outcome.config) {
        for (const auto& e : outcome.errors) std::cout << "error: " << e << "\n";
        return 2;
      }
      std::cout << "config ok\n";
      return 0;
    }
    if (price->parsed()) return run(price_opts, rainbow::job::RunMode::price);
    if (surface->parsed()) return run(surface_opts, rainbow::job::RunMode::surface);
    if (strategy->parsed()) return run(strategy_opts, rainbow::job::RunMode::strategy);
    if (converge->parsed()) return run(converge_opts, rainbow::job::RunMode::converge);
  } catch (const rainbow::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
