// gensurp: estimate generalized surprisal measures over a dataset and analyse them.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 backend error.
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "gensurp/config.hpp"
#include "gensurp/error.hpp"
#include "gensurp/pipeline.hpp"

using namespace gensurp;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::string backend;
  bool verbose = false;
  bool quiet = false;
};

RunConfig resolve(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto config = load_config(g.config);
  if (g.seed) config.seed = *g.seed;
  if (g.jobs) config.jobs = *g.jobs;
  if (g.backend == "native") config.backend.kind = BackendKind::native;
  if (g.backend == "remote") config.backend.kind = BackendKind::remote;
  validate(config);
  return config;
}

void print_stats(const EstimateStats& s) {
  std::cout << "estimates computed: " << s.computed << ", from cache: " << s.cached << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gensurp: generalized surprisal estimation and analysis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "YAML run configuration");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--backend", g.backend, "override the backend kind")->check(CLI::IsMember({"native", "remote"}));
  app.add_flag("-v,--verbose", g.verbose, "debug logging");
  app.add_flag("-q,--quiet", g.quiet, "warnings and errors only");

  auto* estimate = app.add_subcommand("estimate", "fill the estimate cache (resumable)");
  auto* variance = app.add_subcommand("variance", "bootstrap CV, resample correlation and runtime");
  auto* correlate = app.add_subcommand("correlate", "Pearson and Spearman matrices, exact vs MC");
  auto* evaluate = app.add_subcommand("evaluate", "cross-validated delta R2 per response and measure");
  auto* plot = app.add_subcommand("plot", "render plot data as SVG (data files first)");
  std::string plot_input, plot_output;
  plot->add_option("--input", plot_input, "plot JSON (default: variance_plot.json in the output directory)");
  plot->add_option("--output", plot_output, "SVG path (default: next to the input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  spdlog::set_level(g.verbose ? spdlog::level::debug : g.quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    if (plot->parsed()) {
      std::filesystem::path input = plot_input;
      if (input.empty()) input = outputs::variance_plot(resolve(g));
      for (const auto& p : run_plot(input, plot_output)) std::cout << "wrote " << p.string() << "\n";
      return 0;
    }
    const auto session = open_session(resolve(g));
    if (estimate->parsed()) {
      print_stats(run_estimate(session));
    } else if (variance->parsed()) {
      const auto result = run_variance(session);
      for (const auto& cell : result.cells) {
        std::cout << cell.measure << "\tN=" << cell.n << "\tL=" << cell.max_len << "\tcv=" << format_value(cell.cv.mean)
                  << "\tcorr=" << format_value(cell.correlation.summary.mean) << "\n";
      }
      std::cout << "wrote " << outputs::variance(session.config).string() << "\n";
    } else if (correlate->parsed()) {
      const auto result = run_correlate(session);
      for (const auto& p : result.exact_vs_mc) {
        std::cout << p.measure << "\texact vs mc\tpearson=" << format_value(p.pearson)
                  << "\tspearman=" << format_value(p.spearman) << "\titems=" << p.items << "\n";
      }
    } else if (evaluate->parsed()) {
      for (const auto& e : run_evaluate(session)) {
        const auto& r = e.report;
        std::cout << r.response << "\t" << e.baseline_kind << "\t" << r.targets.front() << "\tdelta_r2="
                  << format_value(r.delta.mean) << " [" << format_value(r.delta.low) << ", "
                  << format_value(r.delta.high) << "]\tp=" << format_value(r.p_value) << "\n";
      }
    }
    return 0;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const BackendError& e) {
    spdlog::error("backend error: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
