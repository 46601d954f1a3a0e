// mash: one pipeline stage per invocation.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mash/common.hpp"
#include "mash/pipeline/stages.hpp"

namespace {

void setup_logging() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("mash"));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  const char* env = std::getenv("MASH_LOG");
  spdlog::set_level(env != nullptr ? spdlog::level::from_str(env) : spdlog::level::info);
}

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  bool force = false;
};

mash::pipeline::StageOptions resolve(const CommonFlags& f) {
  using mash::pipeline::Config;
  mash::pipeline::StageOptions opt;
  opt.config = f.config.empty() ? Config() : Config::load(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw mash::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    opt.config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  // flags win over the file; record them so manifests hash the effective config
  if (f.seed) {
    opt.config.set("seed", std::to_string(*f.seed));
  }
  if (!f.out_dir.empty()) {
    opt.config.set("out_dir", f.out_dir);
  }
  opt.seed = opt.config.require<std::uint64_t>("seed");
  opt.out_dir = opt.config.require<std::string>("out_dir");
  opt.force = f.force;
  return opt;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"MASH detector-evasion pipeline"};
  app.require_subcommand(1, 1);
  CommonFlags flags;
  for (const auto& name : mash::pipeline::stage_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", flags.config, "YAML run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "master seed (overrides the config)");
    sub->add_option("--out-dir", flags.out_dir, "run directory (overrides the config)");
    sub->add_option("--set", flags.overrides, "config override key=value, repeatable");
    if (name == "evaluate") {
      sub->add_flag("--force", flags.force, "evaluate inputs whose manifests do not match");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const auto* sub = app.get_subcommands().front();
  try {
    mash::pipeline::run_stage(sub->get_name(), resolve(flags));
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", sub->get_name(), e.what());
    return mash::pipeline::exit_code(e);
  }
  return 0;
}
