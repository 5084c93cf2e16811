// Benchmark driver for parallel transport propagation experiments.
//
//   ptdyn <propagate|converge|scaling|turning-point> --config run.json [--out file.csv]
//                                                    [--jobs N] [--retry-halve]
//                                                    [--observables-only]
//
// Exit codes: 0 success, 1 numerical failure, 2 usage error.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "ptdyn/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"parallel transport propagation benchmarks"};
  app.require_subcommand(1);

  std::string config_path;
  ptdyn::CliOverrides ov;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run config file (JSON)")->required();
    sub->add_option("--out", ov.out, "override the configured output path");
    sub->add_option("--jobs", ov.jobs, "worker pool size for study grids");
    sub->add_flag("--retry-halve", ov.retry_halve, "retry failed steps with halved substeps");
    return sub;
  };

  CLI::App* prop = add_common(app.add_subcommand("propagate", "integrate one trajectory to CSV"));
  prop->add_flag("--observables-only", ov.observables_only,
                 "omit per-entry state columns (large grids)");
  add_common(app.add_subcommand("converge", "error versus step size study"));
  add_common(app.add_subcommand("scaling", "slopes of errors or turning points across epsilon"));
  add_common(app.add_subcommand("turning-point", "convergence onset detection per method"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ptdyn::RunConfig cfg = ptdyn::load_run_config(config_path, command, ov);
    return ptdyn::run_command(command, cfg);
  } catch (const ptdyn::UsageError& e) {
    std::fprintf(stderr, "ptdyn: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ptdyn: %s\n", e.what());
    return 1;
  }
}
