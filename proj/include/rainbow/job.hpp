#ifndef RAINBOW_JOB_HPP
#define RAINBOW_JOB_HPP

// Pricing jobs: a JSON config document is validated into a JobConfig, run by
// the requested engine, and emitted as a summary document plus optional CSV
// tables. See docs/job_config.schema.json for the format.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainbow/continuum.hpp"
#include "rainbow/lattice.hpp"

namespace rainbow::job {

enum class JobVariant {
  european,
  american,
  lower,
  interval,
  path_dependent,
  costed,
  nonlinear_jumps,
  continuum,
  convergence
};

std::string variant_name(JobVariant v);

struct JobConfig {
  lattice::MarketSpec market;
  Vec initial_prices;
  payoffs::Payoff payoff;
  std::string payoff_text;  // expression or kind, for the summary
  JobVariant variant = JobVariant::european;

  // Path-dependent payoff (named kinds).
  std::string path_kind;
  double path_strike = 0.0;

  std::optional<lattice::CostModel> cost;
  Vec initial_hedge;  // carried position before the first trade (costed)
  std::optional<continuum::ContinuumSpec> continuum_spec;
  std::vector<int> convergence_steps;

  lattice::FastPath fast_path = lattice::FastPath::automatic;
  lattice::Engine engine = lattice::Engine::parallel;

  // Surface grid (surface subcommand).
  Vec surface_lo, surface_hi;
  int surface_points = 11;

  nlohmann::json raw;  // the exact input document, echoed into the summary
};

struct ParseOutcome {
  std::optional<JobConfig> config;
  std::vector<std::string> errors;    // field-level problems
  std::vector<std::string> warnings;  // soft diagnostics (e.g. beta near gate)
};

ParseOutcome parse_config(const nlohmann::json& doc);

// Parses a file; throws a validation error joining the field errors.
JobConfig load_config(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

struct RunArtifacts {
  nlohmann::json summary;
  std::vector<std::filesystem::path> files_written;
};

enum class RunMode { price, surface, strategy, converge };

RunArtifacts run_job(const JobConfig& cfg, const std::filesystem::path& out_dir,
                     RunMode mode, const std::string& format = "json");

}  // namespace rainbow::job

#endif
