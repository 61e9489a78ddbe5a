// Command-line front end: run an experiment described by a TOML or JSON
// config and write results.csv, summary.txt, and manifest.json into the
// output directory. Exit codes: 0 success, 1 a hard check failed, 2 bad
// config, 3 resource cap or numeric failure.
#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "fractdim/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fractal dimension toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  CLI::App* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "Path to a .toml or .json config")
      ->required();
  run->add_option("--seed", seed, "Override the RNG seed");
  run->add_option("--out", out_dir, "Override the output directory");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    const int code = fractdim::run_cli(config_path, seed, out_dir);
    if (code == 1)
      std::cerr << "one or more hard checks failed; see summary.txt in the "
                   "output directory"
                << std::endl;
    return code;
  }
  return 0;
}
