#include "lcb/commands.hpp"
#include "lcb/config.hpp"
#include "lcb/errors.hpp"
#include "lcb/hashing.hpp"
#include "lcb/manifest.hpp"

#include <doctest.h>

#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace lcb;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fresh directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("lcb_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.schedule.steps = 6;
  cfg.reward.temperature = 0.5;
  cfg.lcb.train.particles = 400;
  cfg.lcb.train.heldout_particles = 400;
  cfg.lcb.train.refresh_rounds = 2;
  cfg.lcb.train.opt.hidden = {8};
  cfg.lcb.train.opt.mse_epochs = 3;
  cfg.lcb.train.opt.steps = 20;
  cfg.sampler.samples = 300;
  cfg.diagnostics.coverage_sources = 4;
  cfg.diagnostics.coverage_proposals = 5;
  cfg.output_dir = out.string();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("config round trip and strict parsing") {
  const ExperimentConfig cfg;
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());

  json doc = cfg.to_json();
  doc["reward"]["treshold"] = -6.0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), SchemaError);

  doc = cfg.to_json();
  doc["lcb"]["delta"] = "small";
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), SchemaError);

  doc = cfg.to_json();
  doc["lcb"]["delta"] = 1.5;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), SchemaError);

  doc = cfg.to_json();
  doc["sampler"]["policy"] = "greedy";
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), SchemaError);

  CHECK(ExperimentConfig::from_json(json::object()).to_json() == cfg.to_json());
}

TEST_CASE("dotted overrides") {
  json doc = ExperimentConfig{}.to_json();
  apply_override(doc, "lcb.delta=0.05");
  apply_override(doc, "sampler.policy=bon");
  apply_override(doc, "sweep.seeds=[4,5]");
  const ExperimentConfig cfg = ExperimentConfig::from_json(doc);
  CHECK(cfg.lcb.train.delta == 0.05);
  CHECK(cfg.sampler.policy == "bon");
  CHECK(cfg.sweep.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK_THROWS(apply_override(doc, "no_equals_sign"));
}

TEST_CASE("seeds flow into the training configs") {
  json doc = json::object();
  doc["seeds"] = {{"value", 99}, {"lcb", 123}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(doc);
  CHECK(cfg.value.regression.seed == 99);
  CHECK(cfg.lcb.train.seed == 123);
}

TEST_CASE("relative output directories resolve against the output root") {
  ExperimentConfig cfg;
  cfg.output_dir = "exp1";
  ::setenv("LCB_OUTPUT_ROOT", "/tmp/lcb_root", 1);
  CHECK(cfg.resolved_output_dir() == fs::path("/tmp/lcb_root/exp1"));
  cfg.output_dir = "/abs/dir";
  CHECK(cfg.resolved_output_dir() == fs::path("/abs/dir"));
  ::unsetenv("LCB_OUTPUT_ROOT");
  cfg.output_dir = "exp1";
  CHECK(cfg.resolved_output_dir() == fs::path("exp1"));
}

TEST_CASE("error types map to exit codes") {
  std::ostringstream err;
  CHECK(run_guarded([] {}, err) == kExitOk);
  CHECK(run_guarded([] { throw SchemaError("x"); }, err) == kExitSchema);
  CHECK(run_guarded([] { throw ArtifactMismatch("x"); }, err) == kExitArtifactMismatch);
  CHECK(run_guarded([] { throw FitDivergence("x"); }, err) == kExitFitDivergence);
  CHECK(run_guarded([] { throw ParticleCollapse("x"); }, err) == kExitParticleCollapse);
  CHECK(run_guarded([] { throw std::runtime_error("x"); }, err) == kExitGeneric);
}

TEST_CASE("hashing") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("pipeline: reproducible, manifested, and guarded against stale artifacts") {
  TempDir tmp;
  std::ostringstream log;
  const ExperimentConfig cfg = small_config(tmp.path / "run");

  CHECK(run_guarded([&] { cmd_train_value(cfg, log); }, log) == kExitOk);
  const std::string value_sha = sha256_file(tmp.path / "run" / kValueArtifact);
  const json value_doc = json::parse(slurp(tmp.path / "run" / kValueArtifact));
  CHECK_FALSE(value_doc.at("model").contains("networks"));

  CHECK(run_guarded([&] { cmd_train_lcb(cfg, log); }, log) == kExitOk);
  fs::path samples;
  CHECK(run_guarded([&] { samples = cmd_sample(cfg, log); }, log) == kExitOk);
  const std::string first = slurp(samples);

  // Same config, fresh directory: identical bytes.
  const ExperimentConfig again = small_config(tmp.path / "again");
  cmd_train_value(again, log);
  CHECK(sha256_file(tmp.path / "again" / kValueArtifact) == value_sha);
  cmd_train_lcb(again, log);
  CHECK(slurp(cmd_sample(again, log)) == first);

  const SampleSet set = read_samples_csv(samples);
  CHECK(set.size() == cfg.sampler.samples);
  CHECK(set.points.front().size() == 2);

  CHECK(run_guarded([&] { cmd_eval(cfg, {samples, samples}, log); }, log) == kExitOk);
  const json metrics = json::parse(slurp(tmp.path / "run" / "metrics.json"));
  CHECK(metrics.at("sets").at(1).at("tv_vs_reference").get<double>() == 0.0);

  CHECK(run_guarded([&] { cmd_coverage(cfg, log); }, log) == kExitOk);
  CHECK(fs::exists(tmp.path / "run" / "coverage_summary.csv"));

  CHECK(run_guarded([&] { cmd_verify_manifest(tmp.path / "run", log); }, log) == kExitOk);
  const RunManifest manifest = RunManifest::load_or_new(tmp.path / "run");
  CHECK(manifest.stages().size() == 5);
  CHECK(manifest.artifacts().count("lcb") == 1);

  SUBCASE("a changed delta is refused by the sampler") {
    ExperimentConfig other = cfg;
    other.lcb.train.delta = 0.3;
    CHECK(run_guarded([&] { cmd_sample(other, log); }, log) == kExitArtifactMismatch);
  }
  SUBCASE("a changed temperature is refused by LCB training") {
    ExperimentConfig other = cfg;
    other.reward.temperature = 0.25;
    CHECK(run_guarded([&] { cmd_train_lcb(other, log); }, log) == kExitArtifactMismatch);
  }
  SUBCASE("tampering is detected") {
    std::ofstream(samples, std::ios::app) << "tampered\n";
    CHECK(run_guarded([&] { cmd_verify_manifest(tmp.path / "run", log); }, log) == kExitArtifactMismatch);
  }
  SUBCASE("a held lock blocks other stages") {
    OutputLock held(tmp.path / "run");
    CHECK(run_guarded([&] { cmd_train_value(cfg, log); }, log) == kExitGeneric);
  }
}

TEST_CASE("missing inputs") {
  TempDir tmp;
  std::ostringstream log;
  ExperimentConfig cfg = small_config(tmp.path / "empty");
  CHECK(run_guarded([&] { cmd_train_lcb(cfg, log); }, log) == kExitArtifactMismatch);
  CHECK(run_guarded([&] { cmd_verify_manifest(tmp.path / "nowhere", log); }, log) == kExitArtifactMismatch);
  CHECK(run_guarded([&] { cmd_eval(cfg, {}, log); }, log) == kExitSchema);
}

TEST_CASE("constant-reward smoke run finishes quickly") {
  TempDir tmp;
  std::ostringstream log;
  ExperimentConfig cfg = small_config(tmp.path / "flat");
  cfg.reward.kind = "constant";
  cfg.reward.value = 0.5;
  cfg.reward.temperature = 1.0;
  const auto start = std::chrono::steady_clock::now();
  cmd_train_value(cfg, log);
  cmd_train_lcb(cfg, log);
  const fs::path samples = cmd_sample(cfg, log);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(60));
  const SampleSet set = read_samples_csv(samples);
  for (auto p : set.proposals) CHECK(p >= 7);
}

TEST_CASE("sweep writes one row per run") {
  TempDir tmp;
  std::ostringstream log;
  ExperimentConfig cfg = small_config(tmp.path / "sweep");
  cfg.sweep.deltas = {0.1, 0.3};
  cfg.sweep.seeds = {1};
  cfg.sweep.policies = {"unguided", "lcb"};
  cfg.sampler.samples = 100;
  cmd_sweep(cfg, log);
  const json doc = json::parse(slurp(tmp.path / "sweep" / "sweep.json"));
  CHECK(doc.at("rows").size() == 3);
  CHECK(doc.at("rows").at(0).at("delta").is_null());
}
