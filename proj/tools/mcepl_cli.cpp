#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mcepl/config.hpp"
#include "mcepl/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mask-based decentralized learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Path to a key = value config file")->required();
  run->add_option("--seed", seed, "Override the root seed");
  run->add_option("--out", out, "Override the output directory");
  run->add_flag("--quiet", quiet, "Suppress progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mcepl::kExitOk : mcepl::kExitConfig;
  }

  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "config error: cannot read " << config_path << '\n';
    return mcepl::kExitConfig;
  }
  std::stringstream text;
  text << in.rdbuf();

  mcepl::RunConfig cfg;
  try {
    cfg = mcepl::parse_config(text.str());
  } catch (const mcepl::ConfigError& e) {
    std::cerr << "config error: " << config_path << ": " << e.what() << '\n';
    return mcepl::kExitConfig;
  }
  if (seed) cfg.seed = *seed;
  if (out) cfg.out = *out;

  return mcepl::run_experiment(cfg, std::cerr, quiet ? nullptr : &std::cout);
}
