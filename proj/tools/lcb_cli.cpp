// Command-line driver for the LCB experiment pipeline.
#include "lcb/commands.hpp"
#include "lcb/config.hpp"
#include "lcb/errors.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

// Loads the config file (or defaults) and applies --set overrides before
// validation, so overrides go through the same schema checks.
lcb::ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw lcb::SchemaError("cannot open config file " + path);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw lcb::SchemaError(path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) lcb::apply_override(doc, o);
  return lcb::ExperimentConfig::from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rejection sampling with learned lower confidence baselines on Gaussian-mixture diffusions"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "experiment config (JSON)");
  app.add_option("--set", overrides, "override a config key, e.g. --set lcb.delta=0.3")->take_all();

  auto* train_value = app.add_subcommand("train-value", "fit or build the soft-value model");
  auto* train_lcb = app.add_subcommand("train-lcb", "train the baseline system against the stored value model");
  auto* sample = app.add_subcommand("sample", "draw samples with one policy");
  std::string policy;
  std::size_t n_samples = 0;
  sample->add_option("--policy", policy, "unguided | rs | lcb | bon | lcb_bon");
  sample->add_option("-n,--samples", n_samples, "number of samples");
  auto* eval = app.add_subcommand("eval", "metrics for sample sets; TV is taken against the first set");
  std::vector<std::string> sets;
  eval->add_option("sets", sets, "sample CSV files")->required();
  auto* coverage = app.add_subcommand("coverage", "coverage matrix of the trained baselines");
  auto* sweep = app.add_subcommand("sweep", "grid over temperatures, deltas and seeds");
  auto* verify = app.add_subcommand("verify-manifest", "recompute content hashes of a run directory");
  std::string verify_dir;
  verify->add_option("dir", verify_dir, "run directory (default: configured output directory)");
  auto* show = app.add_subcommand("show-config", "print the resolved config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? lcb::kExitOk : lcb::kExitGeneric;
  }

  return lcb::run_guarded(
      [&] {
        lcb::ExperimentConfig cfg = load_config(config_path, overrides);
        if (*train_value) lcb::cmd_train_value(cfg, std::cout);
        if (*train_lcb) lcb::cmd_train_lcb(cfg, std::cout);
        if (*sample) {
          if (!policy.empty()) cfg.sampler.policy = policy;
          if (n_samples > 0) cfg.sampler.samples = n_samples;
          cfg.validate();
          std::cout << lcb::cmd_sample(cfg, std::cout).string() << "\n";
        }
        if (*eval) lcb::cmd_eval(cfg, {sets.begin(), sets.end()}, std::cout);
        if (*coverage) lcb::cmd_coverage(cfg, std::cout);
        if (*sweep) lcb::cmd_sweep(cfg, std::cout);
        if (*verify) lcb::cmd_verify_manifest(verify_dir.empty() ? cfg.resolved_output_dir() : std::filesystem::path(verify_dir), std::cout);
        if (*show) std::cout << cfg.to_json().dump(2) << "\n";
      },
      std::cerr);
}
