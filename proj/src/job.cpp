#include "rainbow/job.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rainbow/expression.hpp"
#include "rainbow/submodular.hpp"

namespace rainbow::job {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Vec read_vec(const json& j) {
  Vec out;
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

struct FieldReader {
  const json& doc;
  std::vector<std::string>& errors;

  const json* get(const std::string& key) const {
    auto it = doc.find(key);
    return it == doc.end() ? nullptr : &*it;
  }

  template <typename T>
  std::optional<T> read(const json& node, const std::string& where) const {
    try {
      return node.get<T>();
    } catch (const json::exception&) {
      errors.push_back(where + ": wrong type");
      return std::nullopt;
    }
  }
};

payoffs::Payoff payoff_from_json(const json& p, int assets, std::vector<std::string>& errors,
                                 std::string& text) {
  if (p.contains("expression")) {
    text = p.at("expression").get<std::string>();
    return expr::parse_payoff_expression(text, assets);
  }
  std::string kind = p.value("kind", "");
  text = kind;
  if (kind == "best_of") return payoffs::make_best_of(assets, p.value("strike", 0.0));
  if (kind == "call_on_max") return payoffs::make_call_on_max(assets, p.value("strike", 1.0));
  if (kind == "multi_strike") {
    if (!p.contains("strikes")) {
      errors.push_back("payoff.strikes: required for multi_strike");
      return payoffs::make_call_on_max(assets, 1.0);
    }
    return payoffs::make_multi_strike(read_vec(p.at("strikes")));
  }
  if (kind == "portfolio") {
    if (!p.contains("weights")) {
      errors.push_back("payoff.weights: required for portfolio");
      return payoffs::make_call_on_max(assets, 1.0);
    }
    return payoffs::make_portfolio(read_vec(p.at("weights")), p.value("strike", 0.0));
  }
  if (kind == "spread") return payoffs::make_spread(p.value("strike", 0.0));
  errors.push_back("payoff.kind: unknown kind '" + kind + "'");
  return payoffs::make_call_on_max(std::max(assets, 1), 1.0);
}

}  // namespace

std::string variant_name(JobVariant v) {
  switch (v) {
    case JobVariant::european: return "european";
    case JobVariant::american: return "american";
    case JobVariant::lower: return "lower";
    case JobVariant::interval: return "interval";
    case JobVariant::path_dependent: return "path_dependent";
    case JobVariant::costed: return "costed";
    case JobVariant::nonlinear_jumps: return "nonlinear_jumps";
    case JobVariant::continuum: return "continuum";
    case JobVariant::convergence: return "convergence";
  }
  return "";
}

ParseOutcome parse_config(const json& doc) {
  ParseOutcome out;
  auto& errors = out.errors;
  JobConfig cfg;
  cfg.raw = doc;

  // Variant.
  std::string variant = doc.value("variant", "european");
  static const std::pair<const char*, JobVariant> kVariants[] = {
      {"european", JobVariant::european},       {"american", JobVariant::american},
      {"lower", JobVariant::lower},             {"interval", JobVariant::interval},
      {"path_dependent", JobVariant::path_dependent},
      {"costed", JobVariant::costed},           {"nonlinear_jumps", JobVariant::nonlinear_jumps},
      {"continuum", JobVariant::continuum},     {"convergence", JobVariant::convergence}};
  bool found = false;
  for (auto& [name, v] : kVariants)
    if (variant == name) {
      cfg.variant = v;
      found = true;
    }
  if (!found) errors.push_back("variant: unknown variant '" + variant + "'");

  const bool needs_market =
      cfg.variant != JobVariant::continuum && cfg.variant != JobVariant::convergence;
  const bool needs_continuum =
      cfg.variant == JobVariant::continuum || cfg.variant == JobVariant::convergence;

  // Market.
  if (doc.contains("model")) {
    const json& m = doc.at("model");
    cfg.market.assets = m.value("assets", 1);
    cfg.market.rho = m.value("rho", 1.0);
    cfg.market.steps = m.value("steps", 0);
    if (m.contains("down")) cfg.market.down = read_vec(m.at("down"));
    if (m.contains("up")) cfg.market.up = read_vec(m.at("up"));
    if (m.contains("down_steps"))
      for (const auto& row : m.at("down_steps")) cfg.market.down_steps.push_back(read_vec(row));
    if (m.contains("up_steps"))
      for (const auto& row : m.at("up_steps")) cfg.market.up_steps.push_back(read_vec(row));
    if (m.contains("jump_maps")) {
      for (const auto& row : m.at("jump_maps")) {
        std::vector<std::function<double(std::span<const double>)>> coords;
        for (const auto& e : row)
          coords.push_back(expr::parse_scalar_expression(e.get<std::string>(), cfg.market.assets));
        cfg.market.jump_maps.push_back([coords](const Vec& z) {
          Vec out(coords.size());
          for (std::size_t j = 0; j < coords.size(); ++j) out[j] = coords[j](z);
          return out;
        });
      }
    }
    if (needs_market) {
      try {
        cfg.market.validate();
      } catch (const Error& e) {
        errors.push_back(e.what());
      }
    }
  } else if (needs_market) {
    errors.push_back("model: required");
  }

  // Initial prices.
  if (doc.contains("initial_prices")) {
    cfg.initial_prices = read_vec(doc.at("initial_prices"));
    for (double v : cfg.initial_prices)
      if (!(v > 0.0)) errors.push_back("initial_prices: must be strictly positive");
  } else {
    int n = needs_market ? cfg.market.assets
                         : (doc.contains("continuum") ? doc.at("continuum").value("assets", 1) : 1);
    cfg.initial_prices.assign(std::max(1, n), 1.0);
  }

  // Payoff.
  int assets = needs_market ? cfg.market.assets : static_cast<int>(cfg.initial_prices.size());
  if (cfg.variant == JobVariant::path_dependent) {
    const json& p = doc.contains("payoff") ? doc.at("payoff") : json::object();
    cfg.path_kind = p.value("kind", "lookback");
    cfg.path_strike = p.value("strike", 0.0);
    if (cfg.path_kind != "lookback" && cfg.path_kind != "asian_call")
      errors.push_back("payoff.kind: path-dependent kinds are 'lookback' and 'asian_call'");
    cfg.payoff_text = cfg.path_kind;
  } else if (doc.contains("payoff")) {
    try {
      cfg.payoff = payoff_from_json(doc.at("payoff"), assets, errors, cfg.payoff_text);
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  } else {
    errors.push_back("payoff: required");
  }

  // Costs.
  if (doc.contains("cost")) {
    const json& c = doc.at("cost");
    double beta = c.value("beta", 0.0);
    if (beta < 0.0) errors.push_back("cost.beta: must be non-negative");
    std::string type = c.value("type", "proportional");
    if (type != "proportional") errors.push_back("cost.type: only 'proportional' is built in");
    cfg.cost = lattice::proportional_costs(beta);
    if (c.contains("initial_hedge")) cfg.initial_hedge = read_vec(c.at("initial_hedge"));
    if (errors.empty() && needs_market && cfg.variant == JobVariant::costed) {
      try {
        double bound = lattice::cost_beta_bound(cfg.initial_prices, cfg.market);
        if (!(beta < bound)) {
          std::ostringstream w;
          w << "cost.beta = " << beta << " exceeds the theorem gate " << bound
            << "; the run will be refused";
          out.warnings.push_back(w.str());
        }
      } catch (const Error&) {
        // gate diagnostics are best-effort at parse time
      }
    }
  } else if (cfg.variant == JobVariant::costed) {
    errors.push_back("cost: required for the costed variant");
  }

  // Continuum block.
  if (doc.contains("continuum")) {
    const json& c = doc.at("continuum");
    continuum::ContinuumSpec spec;
    spec.assets = c.value("assets", assets);
    if (c.contains("sigma")) spec.sigma = read_vec(c.at("sigma"));
    spec.rate = c.value("rate", 0.0);
    spec.maturity = c.value("maturity", 1.0);
    spec.alpha = c.value("alpha", 0.5);
    try {
      spec.validate();
      cfg.continuum_spec = spec;
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  } else if (needs_continuum) {
    errors.push_back("continuum: required for continuum/convergence variants");
  }

  if (doc.contains("convergence")) {
    for (const auto& v : doc.at("convergence").value("step_counts", json::array()))
      cfg.convergence_steps.push_back(v.get<int>());
  }
  if (cfg.variant == JobVariant::convergence && cfg.convergence_steps.empty())
    cfg.convergence_steps = {16, 32, 64, 128};

  std::string fp = doc.value("fast_path", "auto");
  if (fp == "auto") cfg.fast_path = lattice::FastPath::automatic;
  else if (fp == "on") cfg.fast_path = lattice::FastPath::on;
  else if (fp == "off") cfg.fast_path = lattice::FastPath::off;
  else errors.push_back("fast_path: expected auto|on|off");

  std::string engine = doc.value("engine", "parallel");
  if (engine == "parallel") cfg.engine = lattice::Engine::parallel;
  else if (engine == "serial") cfg.engine = lattice::Engine::serial_reference;
  else errors.push_back("engine: expected parallel|serial");

  if (doc.contains("surface")) {
    const json& s = doc.at("surface");
    if (s.contains("lo")) cfg.surface_lo = read_vec(s.at("lo"));
    if (s.contains("hi")) cfg.surface_hi = read_vec(s.at("hi"));
    cfg.surface_points = s.value("points", 11);
    if (cfg.surface_points < 2) errors.push_back("surface.points: need at least 2");
  }

  if (errors.empty()) out.config = std::move(cfg);
  return out;
}

JobConfig load_config(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw validation_error(std::string("config is not valid JSON: ") + e.what());
  }
  auto outcome = parse_config(doc);
  if (warnings) *warnings = outcome.warnings;
  if (!outcome.config) {
    std::ostringstream msg;
    msg << "config validation failed:";
    for (const auto& e : outcome.errors) msg << "\n  - " << e;
    throw validation_error(msg.str());
  }
  return std::move(*outcome.config);
}

namespace {

json result_summary(const lattice::HedgeResult& r) {
  json j;
  j["price"] = r.price;
  j["variant"] = r.variant;
  j["node_count"] = r.node_count;
  j["elapsed_seconds"] = r.elapsed_seconds;
  j["warnings"] = r.warnings;
  if (!r.measure_supports.empty()) {
    j["measure_supports"] = r.measure_supports;
    j["active_histogram"] = r.active_histogram;
  }
  if (r.kappa1 > 0.0) {
    j["kappa1"] = r.kappa1;
    j["kappa2"] = r.kappa2;
    j["beta_bound"] = r.beta_bound;
  }
  return j;
}

lattice::PathPayoff make_path_payoff(const JobConfig& cfg) {
  double strike = cfg.path_strike;
  if (cfg.path_kind == "lookback") {
    return [](std::span<const Vec> path) {
      double peak = 0.0;
      for (const auto& s : path) peak = std::max(peak, s[0]);
      return std::max(0.0, peak - path.back()[0]);
    };
  }
  return [strike](std::span<const Vec> path) {  // asian_call
    double mean = 0.0;
    for (const auto& s : path) mean += s[0];
    mean /= static_cast<double>(path.size());
    return std::max(0.0, mean - strike);
  };
}

void write_text(const std::filesystem::path& p, const std::string& text,
                std::vector<std::filesystem::path>& written) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw argument_error("cannot write output file: " + p.string());
  out << text;
  written.push_back(p);
}

lattice::HedgeResult run_lattice_variant(const JobConfig& cfg) {
  switch (cfg.variant) {
    case JobVariant::european:
      return lattice::price_european(cfg.payoff, cfg.initial_prices, cfg.market, cfg.engine,
                                     cfg.fast_path);
    case JobVariant::american:
      return lattice::price_american(cfg.payoff, cfg.initial_prices, cfg.market, cfg.engine,
                                     cfg.fast_path);
    case JobVariant::lower:
      return lattice::price_lower(cfg.payoff, cfg.initial_prices, cfg.market, cfg.engine);
    case JobVariant::path_dependent:
      return lattice::price_path_dependent(make_path_payoff(cfg), cfg.initial_prices, cfg.market);
    case JobVariant::costed:
      return lattice::price_with_costs(cfg.payoff, cfg.initial_prices, cfg.market, *cfg.cost,
                                       cfg.initial_hedge.empty() ? nullptr
                                                                 : &cfg.initial_hedge);
    case JobVariant::nonlinear_jumps:
      return lattice::price_nonlinear_jumps(cfg.payoff, cfg.initial_prices, cfg.market);
    default:
      throw argument_error("variant is not a lattice job");
  }
}

}  // namespace

RunArtifacts run_job(const JobConfig& cfg, const std::filesystem::path& out_dir,
                     RunMode mode, const std::string& format) {
  std::filesystem::create_directories(out_dir);
  RunArtifacts art;
  json& summary = art.summary;
  summary["config"] = cfg.raw;

  switch (mode) {
    case RunMode::price: {
      if (cfg.variant == JobVariant::interval) {
        auto upper = lattice::price_european(cfg.payoff, cfg.initial_prices, cfg.market,
                                             cfg.engine, cfg.fast_path);
        auto lower = lattice::price_lower(cfg.payoff, cfg.initial_prices, cfg.market, cfg.engine);
        summary["upper"] = result_summary(upper);
        summary["lower"] = result_summary(lower);
        summary["price"] = upper.price;
        summary["intrinsic_risk"] = upper.price - lower.price;
      } else if (cfg.variant == JobVariant::continuum) {
        const auto& spec = *cfg.continuum_spec;
        continuum::TerminalPayoff f = [&](std::span<const double> w) { return cfg.payoff(w); };
        json c;
        if (spec.assets == 2) {
          c["upper"] = continuum::green_price(continuum::Kernel::upper, f, cfg.initial_prices,
                                              0.0, spec);
          c["lower"] = continuum::green_price(continuum::Kernel::lower, f, cfg.initial_prices,
                                              0.0, spec);
          c["independent"] = continuum::independent_price(f, cfg.initial_prices, 0.0, spec);
          summary["price"] = c["upper"];
          summary["intrinsic_risk"] = c["upper"].get<double>() - c["lower"].get<double>();
        } else {
          c["price"] = continuum::independent_price(f, cfg.initial_prices, 0.0, spec);
          summary["price"] = c["price"];
        }
        summary["continuum"] = c;
      } else if (cfg.variant == JobVariant::convergence) {
        throw argument_error("use the converge subcommand for convergence jobs");
      } else {
        auto res = run_lattice_variant(cfg);
        summary["result"] = result_summary(res);
        summary["price"] = res.price;
      }
      break;
    }
    case RunMode::surface: {
      if (cfg.surface_lo.empty() || cfg.surface_hi.empty())
        throw validation_error("surface: config needs surface.lo and surface.hi");
      const int J = cfg.market.assets;
      std::ostringstream csv;
      csv << "z1";
      for (int j = 1; j < J; ++j) csv << ",z" << (j + 1);
      csv << ",price\n";
      std::vector<int> ctr(J, 0);
      JobConfig point = cfg;
      for (;;) {
        Vec z(J);
        for (int j = 0; j < J; ++j)
          z[j] = cfg.surface_lo[j] +
                 (cfg.surface_hi[j] - cfg.surface_lo[j]) * ctr[j] / (cfg.surface_points - 1);
        point.initial_prices = z;
        auto res = run_lattice_variant(point);
        for (int j = 0; j < J; ++j) csv << (j ? "," : "") << fmt(z[j]);
        csv << ',' << fmt(res.price) << '\n';
        int j = 0;
        while (j < J && ++ctr[j] == cfg.surface_points) ctr[j++] = 0;
        if (j == J) break;
      }
      write_text(out_dir / "surface.csv", csv.str(), art.files_written);
      summary["surface_file"] = "surface.csv";
      break;
    }
    case RunMode::strategy: {
      auto res = run_lattice_variant(cfg);
      if (!res.has_tables())
        throw argument_error("strategy tables are only stored by the recombining engines");
      std::ostringstream csv;
      csv << "step";
      for (int j = 0; j < res.assets; ++j) csv << ",up_count" << (j + 1);
      for (int j = 0; j < res.assets; ++j) csv << ",z" << (j + 1);
      csv << ",value";
      for (int j = 0; j < res.assets; ++j) csv << ",gamma" << (j + 1);
      csv << ",active,exercised\n";
      std::vector<int> counts(res.assets, 0);
      for (int step = 0; step < res.steps; ++step) {
        const auto& tab = res.table(step);
        std::size_t count = 1;
        for (int j = 0; j < res.assets; ++j) count *= static_cast<std::size_t>(step + 1);
        for (std::size_t idx = 0; idx < count; ++idx) {
          std::size_t rem = idx;
          for (int j = 0; j < res.assets; ++j) {
            counts[j] = static_cast<int>(rem % (step + 1));
            rem /= (step + 1);
          }
          Vec z = res.node_prices(step, counts);
          csv << step;
          for (int j = 0; j < res.assets; ++j) csv << ',' << counts[j];
          for (int j = 0; j < res.assets; ++j) csv << ',' << fmt(z[j]);
          int pn = tab.per_node;
          int entry = 0;
          if (pn > 1 && res.cost_model.cost) {
            // costed tables: pick the measure active for a flat carried hedge
            double best = -std::numeric_limits<double>::infinity();
            Vec dg(res.assets);
            for (int meas = 0; meas < pn; ++meas) {
              for (int j = 0; j < res.assets; ++j)
                dg[j] = tab.gamma[(idx * pn + meas) * res.assets + j];
              double w = tab.value[idx * pn + meas] +
                         res.cost_model.cost(dg, z) / res.market.rho;
              if (w > best) {
                best = w;
                entry = meas;
              }
            }
            csv << ',' << fmt(best);
          } else {
            csv << ',' << fmt(tab.value[idx * pn]);
          }
          for (int j = 0; j < res.assets; ++j)
            csv << ',' << fmt(tab.gamma[(idx * pn + entry) * res.assets + j]);
          int active = tab.active.empty() ? -1 : tab.active[idx];
          if (pn > 1) active = entry;
          csv << ',' << active;
          csv << ',' << (tab.exercised.empty() ? 0 : int(tab.exercised[idx])) << '\n';
        }
      }
      write_text(out_dir / "strategy.csv", csv.str(), art.files_written);
      summary["strategy_file"] = "strategy.csv";
      summary["price"] = res.price;
      summary["result"] = result_summary(res);
      break;
    }
    case RunMode::converge: {
      if (!cfg.continuum_spec)
        throw validation_error("converge: config needs a continuum block");
      auto rep = continuum::convergence_harness(cfg.payoff, *cfg.continuum_spec,
                                                cfg.convergence_steps, cfg.initial_prices);
      std::ostringstream csv;
      csv << "tau,steps,discrete,continuum,error\n";
      json rows = json::array();
      for (const auto& row : rep.rows) {
        csv << fmt(row.tau) << ',' << row.steps << ',' << fmt(row.discrete) << ','
            << fmt(row.continuum) << ',' << fmt(row.error) << '\n';
        rows.push_back({{"tau", row.tau},
                        {"steps", row.steps},
                        {"discrete", row.discrete},
                        {"continuum", row.continuum},
                        {"error", row.error}});
      }
      write_text(out_dir / "convergence.csv", csv.str(), art.files_written);
      summary["rows"] = rows;
      summary["continuum_price"] = rep.continuum_price;
      summary["empirical_order"] = rep.empirical_order;
      summary["monotone"] = rep.monotone;
      summary["convergence_file"] = "convergence.csv";
      break;
    }
  }

  if (format == "json" || mode != RunMode::price) {
    write_text(out_dir / "summary.json", summary.dump(2) + "\n", art.files_written);
  } else {
    std::ostringstream csv;
    csv << "key,value\n";
    if (summary.contains("price")) csv << "price," << fmt(summary["price"].get<double>()) << '\n';
    if (summary.contains("intrinsic_risk"))
      csv << "intrinsic_risk," << fmt(summary["intrinsic_risk"].get<double>()) << '\n';
    write_text(out_dir / "summary.csv", csv.str(), art.files_written);
    write_text(out_dir / "summary.json", summary.dump(2) + "\n", art.files_written);
  }
  return art;
}

}  // namespace rainbow::job
