#include "lcb/config.hpp"

#include "lcb/errors.hpp"
#include "lcb/hashing.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace lcb {

namespace {

using nlohmann::json;

// Reads keys from one object and remembers which were seen, so leftovers can
// be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(path_ + "." + key + ": " + e.what());
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw SchemaError(path_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string sha_of(const json& j) { return sha256_hex(j.dump()); }

}  // namespace

MixtureSpec MixtureConfig::to_spec() const {
  MixtureSpec spec;
  spec.weights = weights;
  for (const auto& m : means) spec.means.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())));
  const auto d = static_cast<Eigen::Index>(covariance.size());
  spec.covariance.resize(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    if (covariance[r].size() != covariance.size()) throw SchemaError("mixture.covariance: matrix must be square");
    for (Eigen::Index c = 0; c < d; ++c) spec.covariance(r, c) = covariance[r][c];
  }
  return spec;
}

NoiseSchedule ScheduleConfig::to_schedule() const { return NoiseSchedule::linear_beta(steps, beta_start, beta_end); }

RewardSpec RewardConfig::to_spec() const {
  const Direction dir = direction_from_string(direction);
  if (kind == "threshold") return RewardSpec::threshold(coordinate, threshold, dir, temperature, height, raw_bound);
  if (kind == "logistic") return RewardSpec::logistic(coordinate, threshold, dir, slope, temperature, height, raw_bound);
  if (kind == "constant") return RewardSpec::constant(value, temperature, raw_bound);
  throw SchemaError("reward.kind: unknown kind '" + kind + "'");
}

json ExperimentConfig::to_json() const {
  const auto& tr = lcb.train;
  return {
      {"mixture", {{"weights", mixture.weights}, {"means", mixture.means}, {"covariance", mixture.covariance}}},
      {"schedule", {{"steps", schedule.steps}, {"beta_start", schedule.beta_start}, {"beta_end", schedule.beta_end}}},
      {"reward",
       {{"kind", reward.kind},
        {"coordinate", reward.coordinate},
        {"threshold", reward.threshold},
        {"direction", reward.direction},
        {"slope", reward.slope},
        {"height", reward.height},
        {"value", reward.value},
        {"temperature", reward.temperature},
        {"raw_bound", reward.raw_bound}}},
      {"value",
       {{"mode", value.mode},
        {"mc_inner", value.mc_inner},
        {"regression",
         {{"trajectories", value.regression.n_trajectories},
          {"epochs", value.regression.epochs},
          {"learning_rate", value.regression.learning_rate},
          {"batch_size", value.regression.batch_size},
          {"hidden", value.regression.hidden}}}}},
      {"lcb",
       {{"scheme", lcb.scheme},
        {"delta", tr.delta},
        {"lambda_max", tr.lambda_max},
        {"lambda_tol", tr.lambda_tol},
        {"epsilon0", tr.epsilon0},
        {"particles", tr.particles},
        {"heldout_particles", tr.heldout_particles},
        {"refresh_rounds", tr.refresh_rounds},
        {"steps_per_round", tr.steps_per_round},
        {"advance_cap", tr.advance_cap},
        {"fresh_tau_pairs", tr.fresh_tau_pairs},
        {"optimizer",
         {{"hidden", tr.opt.hidden},
          {"learning_rate", tr.opt.learning_rate},
          {"mse_epochs", tr.opt.mse_epochs},
          {"mse_batch", tr.opt.mse_batch}}}}},
      {"sampler",
       {{"policy", sampler.policy},
        {"samples", sampler.samples},
        {"rs_cap", sampler.rs_cap},
        {"lcb_cap", sampler.lcb_cap},
        {"bon_n", sampler.bon_n},
        {"hybrid_m", sampler.hybrid_m}}},
      {"diagnostics",
       {{"bins", diagnostics.bins},
        {"hist_lo", diagnostics.hist_lo},
        {"hist_hi", diagnostics.hist_hi},
        {"coordinate", diagnostics.coordinate},
        {"coverage_sources", diagnostics.coverage_sources},
        {"coverage_proposals", diagnostics.coverage_proposals},
        {"coverage_threshold", diagnostics.coverage_threshold}}},
      {"seeds", {{"value", seeds.value}, {"lcb", seeds.lcb}, {"sample", seeds.sample}, {"coverage", seeds.coverage}}},
      {"sweep",
       {{"deltas", sweep.deltas},
        {"temperatures", sweep.temperatures},
        {"seeds", sweep.seeds},
        {"policies", sweep.policies}}},
      {"output_dir", output_dir},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "config");
  {
    Section s = root.child("mixture");
    s.read("weights", c.mixture.weights);
    s.read("means", c.mixture.means);
    s.read("covariance", c.mixture.covariance);
    s.finish();
  }
  {
    Section s = root.child("schedule");
    s.read("steps", c.schedule.steps);
    s.read("beta_start", c.schedule.beta_start);
    s.read("beta_end", c.schedule.beta_end);
    s.finish();
  }
  {
    Section s = root.child("reward");
    s.read("kind", c.reward.kind);
    s.read("coordinate", c.reward.coordinate);
    s.read("threshold", c.reward.threshold);
    s.read("direction", c.reward.direction);
    s.read("slope", c.reward.slope);
    s.read("height", c.reward.height);
    s.read("value", c.reward.value);
    s.read("temperature", c.reward.temperature);
    s.read("raw_bound", c.reward.raw_bound);
    s.finish();
  }
  {
    Section s = root.child("value");
    s.read("mode", c.value.mode);
    s.read("mc_inner", c.value.mc_inner);
    Section r = s.child("regression");
    r.read("trajectories", c.value.regression.n_trajectories);
    r.read("epochs", c.value.regression.epochs);
    r.read("learning_rate", c.value.regression.learning_rate);
    r.read("batch_size", c.value.regression.batch_size);
    r.read("hidden", c.value.regression.hidden);
    r.finish();
    s.finish();
  }
  {
    auto& tr = c.lcb.train;
    Section s = root.child("lcb");
    s.read("scheme", c.lcb.scheme);
    s.read("delta", tr.delta);
    s.read("lambda_max", tr.lambda_max);
    s.read("lambda_tol", tr.lambda_tol);
    s.read("epsilon0", tr.epsilon0);
    s.read("particles", tr.particles);
    s.read("heldout_particles", tr.heldout_particles);
    s.read("refresh_rounds", tr.refresh_rounds);
    s.read("steps_per_round", tr.steps_per_round);
    s.read("advance_cap", tr.advance_cap);
    s.read("fresh_tau_pairs", tr.fresh_tau_pairs);
    Section o = s.child("optimizer");
    o.read("hidden", tr.opt.hidden);
    o.read("learning_rate", tr.opt.learning_rate);
    o.read("mse_epochs", tr.opt.mse_epochs);
    o.read("mse_batch", tr.opt.mse_batch);
    o.finish();
    s.finish();
  }
  {
    Section s = root.child("sampler");
    s.read("policy", c.sampler.policy);
    s.read("samples", c.sampler.samples);
    s.read("rs_cap", c.sampler.rs_cap);
    s.read("lcb_cap", c.sampler.lcb_cap);
    s.read("bon_n", c.sampler.bon_n);
    s.read("hybrid_m", c.sampler.hybrid_m);
    s.finish();
  }
  {
    Section s = root.child("diagnostics");
    s.read("bins", c.diagnostics.bins);
    s.read("hist_lo", c.diagnostics.hist_lo);
    s.read("hist_hi", c.diagnostics.hist_hi);
    s.read("coordinate", c.diagnostics.coordinate);
    s.read("coverage_sources", c.diagnostics.coverage_sources);
    s.read("coverage_proposals", c.diagnostics.coverage_proposals);
    s.read("coverage_threshold", c.diagnostics.coverage_threshold);
    s.finish();
  }
  {
    Section s = root.child("seeds");
    s.read("value", c.seeds.value);
    s.read("lcb", c.seeds.lcb);
    s.read("sample", c.seeds.sample);
    s.read("coverage", c.seeds.coverage);
    s.finish();
  }
  {
    Section s = root.child("sweep");
    s.read("deltas", c.sweep.deltas);
    s.read("temperatures", c.sweep.temperatures);
    s.read("seeds", c.sweep.seeds);
    s.read("policies", c.sweep.policies);
    s.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();

  c.value.regression.seed = c.seeds.value;
  c.lcb.train.seed = c.seeds.lcb;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::validate() const {
  // Library validators throw invalid_argument; surface them as schema errors.
  try {
    const MixtureSpec spec = mixture.to_spec();
    spec.validate();
    if (schedule.steps < 1) throw std::invalid_argument("schedule.steps must be positive");
    (void)schedule.to_schedule();
    const RewardSpec r = reward.to_spec();
    if (reward.kind != "constant" && (reward.coordinate < 0 || reward.coordinate >= spec.dim()))
      throw std::invalid_argument("reward.coordinate out of range");
    (void)value_mode_from_string(value.mode);
    if (value.mode == "regression") value.regression.validate();
    if (value.mode == "monte_carlo" && value.mc_inner < 1) throw std::invalid_argument("value.mc_inner must be positive");
    if (lcb.scheme != "two_pass" && lcb.scheme != "sequential")
      throw std::invalid_argument("lcb.scheme must be two_pass or sequential");
    lcb.train.validate();
    (void)policy_from_string(sampler.policy);
    if (sampler.samples < 1) throw std::invalid_argument("sampler.samples must be positive");
    if (sampler.bon_n < 1 || sampler.hybrid_m < 1) throw std::invalid_argument("sampler.bon_n and hybrid_m must be positive");
    if (sampler.rs_cap < 1 || sampler.lcb_cap < 1) throw std::invalid_argument("sampler caps must be positive");
    if (diagnostics.bins < 1 || !(diagnostics.hist_hi > diagnostics.hist_lo))
      throw std::invalid_argument("diagnostics histogram range is empty");
    if (diagnostics.coordinate < 0 || diagnostics.coordinate >= spec.dim())
      throw std::invalid_argument("diagnostics.coordinate out of range");
    if (diagnostics.coverage_sources < 1 || diagnostics.coverage_proposals < 1)
      throw std::invalid_argument("coverage sizes must be positive");
    for (double d : sweep.deltas)
      if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("sweep.deltas must lie in (0, 1)");
    for (double a : sweep.temperatures)
      if (!(a > 0.0)) throw std::invalid_argument("sweep.temperatures must be positive");
    for (const auto& p : sweep.policies) (void)policy_from_string(p);
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaError(e.what());
  }
}

std::filesystem::path ExperimentConfig::resolved_output_dir() const {
  std::filesystem::path p(output_dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("LCB_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw SchemaError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw SchemaError("override '" + key + "': '" + parts[i] + "' is not a section");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw SchemaError("override '" + key + "': parent is not a section");
  (*node)[parts.back()] = std::move(value);
}

std::string model_hash(const ExperimentConfig& cfg) {
  const json j = cfg.to_json();
  return sha_of({{"mixture", j["mixture"]}, {"schedule", j["schedule"]}});
}

std::string reward_hash(const ExperimentConfig& cfg) { return sha_of(cfg.to_json()["reward"]); }

}  // namespace lcb
