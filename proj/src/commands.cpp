#include "lcb/commands.hpp"

#include "lcb/diagnostics.hpp"
#include "lcb/errors.hpp"
#include "lcb/hashing.hpp"
#include "lcb/manifest.hpp"
#include "lcb/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace lcb {

namespace fs = std::filesystem;
using nlohmann::json;

int run_guarded(const std::function<void()>& fn, std::ostream& err) {
  try {
    fn();
    return kExitOk;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const ArtifactMismatch& e) {
    err << "artifact mismatch: " << e.what() << "\n";
    return kExitArtifactMismatch;
  } catch (const FitDivergence& e) {
    err << "fit divergence: " << e.what() << "\n";
    return kExitFitDivergence;
  } catch (const ParticleCollapse& e) {
    err << "particle collapse: " << e.what() << "\n";
    return kExitParticleCollapse;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitGeneric;
  }
}

namespace {

// The pretrained model and reward a stage runs against.
struct Setup {
  MixtureDiffusion model;
  RewardSpec reward;

  explicit Setup(const ExperimentConfig& cfg)
      : model(cfg.mixture.to_spec(), cfg.schedule.to_schedule()), reward(cfg.reward.to_spec()) {}
};

json artifact_header(const ExperimentConfig& cfg) {
  return {{"steps", cfg.schedule.steps},
          {"temperature", cfg.reward.temperature},
          {"model_hash", model_hash(cfg)},
          {"reward_hash", reward_hash(cfg)}};
}

void check_header(const json& header, const json& expected, const std::string& what) {
  for (const auto& [key, value] : expected.items()) {
    if (!header.contains(key)) throw ArtifactMismatch(what + ": header lacks '" + key + "'");
    if (header.at(key) != value)
      throw ArtifactMismatch(what + ": " + key + " is " + header.at(key).dump() + ", config has " + value.dump());
  }
}

json read_json(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ArtifactMismatch(what + " not found at " + path.string() + "; run the producing stage first");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ArtifactMismatch(what + " is not valid JSON: " + e.what());
  }
}

ValueModel build_value(const ExperimentConfig& cfg, const Setup& s) {
  switch (value_mode_from_string(cfg.value.mode)) {
    case ValueMode::Analytic:
      return ValueModel::analytic(s.model, s.reward);
    case ValueMode::MonteCarlo:
      return ValueModel::monte_carlo(s.model, s.reward, cfg.value.mc_inner, cfg.seeds.value);
    case ValueMode::Regression:
      return fit_regression_values(s.model, s.reward, cfg.value.regression);
  }
  throw std::logic_error("unreachable");
}

ValueModel load_value(const ExperimentConfig& cfg, const Setup& s, std::string* sha = nullptr) {
  const fs::path path = cfg.resolved_output_dir() / kValueArtifact;
  const json j = read_json(path, "value artifact");
  check_header(j.at("header"), artifact_header(cfg), "value artifact");
  if (j.at("model").at("mode").get<std::string>() != cfg.value.mode)
    throw ArtifactMismatch("value artifact: mode differs from config");
  if (sha) *sha = sha256_file(path);
  return ValueModel::from_json(j.at("model"), s.model, s.reward);
}

LcbSystem load_lcb(const ExperimentConfig& cfg, const std::string& value_sha) {
  const json j = read_json(cfg.resolved_output_dir() / kLcbArtifact, "LCB artifact");
  json expected = artifact_header(cfg);
  expected["delta"] = cfg.lcb.train.delta;
  expected["value_sha256"] = value_sha;
  check_header(j.at("header"), expected, "LCB artifact");
  return LcbSystem::from_json(j.at("system"));
}

TrainResult train(const ExperimentConfig& cfg, const Setup& s, const ValueModel& value) {
  return cfg.lcb.scheme == "sequential" ? train_sequential(s.model, value, cfg.lcb.train)
                                        : train_two_pass(s.model, value, cfg.lcb.train);
}

bool needs_value(Policy p) { return p == Policy::ExactRs || p == Policy::LcbRs || p == Policy::LcbThenBon; }
bool needs_lcb(Policy p) { return p == Policy::LcbRs || p == Policy::LcbThenBon; }

SamplerConfig sampler_config(const ExperimentConfig& cfg, Policy policy) {
  SamplerConfig sc;
  sc.policy = policy;
  sc.rs_cap = cfg.sampler.rs_cap;
  sc.lcb_cap = cfg.sampler.lcb_cap;
  sc.bon_n = cfg.sampler.bon_n;
  sc.hybrid_m = cfg.sampler.hybrid_m;
  return sc;
}

// Locks the directory, runs body, records the stage and saves the manifest.
// body returns the relative paths it wrote.
void run_stage(const ExperimentConfig& cfg, const std::string& name,
               const std::function<std::vector<std::string>(const fs::path&, RunManifest&)>& body) {
  const fs::path dir = cfg.resolved_output_dir();
  OutputLock lock(dir);
  RunManifest manifest = RunManifest::load_or_new(dir);
  manifest.set_config(cfg.to_json());
  StageRecord rec{name, "ok", utc_timestamp(), ""};
  try {
    for (const auto& rel : body(dir, manifest)) manifest.record_file(dir, rel);
  } catch (const std::exception& e) {
    rec.outcome = e.what();
    rec.finished = utc_timestamp();
    manifest.add_stage(rec);
    manifest.save(dir);
    throw;
  }
  rec.finished = utc_timestamp();
  manifest.add_stage(rec);
  manifest.save(dir);
}

std::string train_report_csv(const TrainReport& report) {
  std::ostringstream os;
  os << "level,lambda,tau,objective,objective_at_one,heldout_exceedance,heldout_pairs,advance_proposals,"
        "forced_acceptances,particle_value_mean,particle_value_se,baseline_range\n";
  for (const auto& r : report.levels) {
    os << r.level << ',' << format_double(r.lambda) << ',' << format_double(r.tau) << ',' << format_double(r.objective)
       << ',' << format_double(r.objective_at_one) << ',' << format_double(r.heldout_exceedance) << ','
       << r.heldout_pairs << ',' << r.advance_proposals << ',' << r.forced_acceptances << ','
       << format_double(r.particle_value_mean) << ',' << format_double(r.particle_value_se) << ','
       << format_double(r.baseline_range) << '\n';
  }
  return os.str();
}

struct SetMetrics {
  std::string name;
  std::size_t n = 0;
  MeanEstimate effective_n;
  double reward_mean = 0.0;
  double reward_mean_se = 0.0;
  double region_mass = 0.0;
  Interval region_ci;
  std::uint64_t forced = 0;
  double tv = 0.0;
};

SetMetrics set_metrics(const SampleSet& set, const RewardSpec& reward, int steps) {
  SetMetrics m;
  m.n = set.size();
  if (m.n == 0) throw SchemaError("sample set is empty");
  const double n = static_cast<double>(m.n);
  double e = 0.0, e2 = 0.0, r = 0.0, r2 = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double ei = static_cast<double>(set.proposals[i]) / steps;
    e += ei;
    e2 += ei * ei;
    r += set.rewards[i];
    r2 += set.rewards[i] * set.rewards[i];
    hits += set.rewards[i] >= reward.max_raw() ? 1 : 0;
    m.forced += set.forced[i];
  }
  const auto se = [n](double s, double s2) {
    const double mean = s / n;
    return n > 1 ? std::sqrt(std::max(0.0, (s2 - n * mean * mean) / (n - 1.0)) / n) : 0.0;
  };
  m.effective_n = {e / n, se(e, e2)};
  m.reward_mean = r / n;
  m.reward_mean_se = se(r, r2);
  m.region_mass = static_cast<double>(hits) / n;
  m.region_ci = wilson_interval(hits, m.n);
  return m;
}

std::vector<double> coordinate(const SampleSet& set, int j) {
  std::vector<double> out;
  out.reserve(set.size());
  for (const auto& p : set.points) {
    if (j >= p.size()) throw SchemaError("sample set has fewer coordinates than diagnostics.coordinate");
    out.push_back(p(j));
  }
  return out;
}

SampleSet to_set(const std::vector<SampleResult>& results) {
  SampleSet s;
  for (const auto& r : results) {
    s.points.push_back(r.x0);
    s.rewards.push_back(r.reward);
    s.proposals.push_back(r.total_proposals());
    s.forced.push_back(r.forced_acceptances);
  }
  return s;
}

}  // namespace

std::string samples_csv(const std::vector<SampleResult>& results) {
  std::ostringstream os;
  os << "index";
  const Eigen::Index d = results.empty() ? 0 : results.front().x0.size();
  for (Eigen::Index j = 0; j < d; ++j) os << ",x" << j;
  os << ",reward,proposals,forced_acceptances\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    os << i;
    for (Eigen::Index j = 0; j < d; ++j) os << ',' << format_double(r.x0(j));
    os << ',' << format_double(r.reward) << ',' << r.total_proposals() << ',' << r.forced_acceptances << '\n';
  }
  return os.str();
}

SampleSet read_samples_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open sample set " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 5 || header.front() != "index" || header[header.size() - 3] != "reward" ||
      header[header.size() - 2] != "proposals" || header.back() != "forced_acceptances")
    throw SchemaError(path.string() + ": unexpected sample CSV header");
  const std::size_t d = header.size() - 4;
  SampleSet set;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw SchemaError(path.string() + ": row " + std::to_string(row) + " has wrong width");
    try {
      Vector x(static_cast<Eigen::Index>(d));
      for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(j)) = std::stod(cells[1 + j]);
      set.points.push_back(std::move(x));
      set.rewards.push_back(std::stod(cells[1 + d]));
      set.proposals.push_back(std::stoull(cells[2 + d]));
      set.forced.push_back(std::stoull(cells[3 + d]));
    } catch (const std::logic_error&) {
      throw SchemaError(path.string() + ": row " + std::to_string(row) + " is not numeric");
    }
  }
  return set;
}

void cmd_train_value(const ExperimentConfig& cfg, std::ostream& log) {
  run_stage(cfg, "train-value", [&](const fs::path& dir, RunManifest& manifest) {
    const Setup s(cfg);
    const ValueModel value = build_value(cfg, s);
    const json artifact = {{"kind", "value_model"}, {"header", artifact_header(cfg)}, {"model", value.to_json()}};
    write_file_atomic(dir / kValueArtifact, artifact.dump() + "\n");
    manifest.set_artifact("value", sha256_file(dir / kValueArtifact));
    log << "value model (" << cfg.value.mode << ") written; terminal value " << format_double(value.terminal_value())
        << "\n";
    return std::vector<std::string>{kValueArtifact};
  });
}

void cmd_train_lcb(const ExperimentConfig& cfg, std::ostream& log) {
  run_stage(cfg, "train-lcb", [&](const fs::path& dir, RunManifest& manifest) {
    const Setup s(cfg);
    std::string value_sha;
    const ValueModel value = load_value(cfg, s, &value_sha);
    const TrainResult res = train(cfg, s, value);
    json header = artifact_header(cfg);
    header["delta"] = cfg.lcb.train.delta;
    header["value_sha256"] = value_sha;
    const json artifact = {{"kind", "lcb_system"}, {"header", header}, {"system", res.system.to_json()}};
    write_file_atomic(dir / kLcbArtifact, artifact.dump() + "\n");
    write_file_atomic(dir / "train_report.json", res.report.to_json().dump(2) + "\n");
    write_file_atomic(dir / "train_report.csv", train_report_csv(res.report));
    manifest.set_artifact("lcb", sha256_file(dir / kLcbArtifact));
    double worst = 0.0;
    for (const auto& r : res.report.levels) worst = std::max(worst, r.heldout_exceedance);
    log << "trained " << res.report.levels.size() << " baselines in " << res.report.seconds
        << " s; worst held-out exceedance " << worst << " (delta " << cfg.lcb.train.delta << ")\n";
    return std::vector<std::string>{kLcbArtifact, "train_report.json", "train_report.csv"};
  });
}

fs::path cmd_sample(const ExperimentConfig& cfg, std::ostream& log) {
  const Policy policy = policy_from_string(cfg.sampler.policy);
  const std::string name = "samples_" + to_string(policy) + ".csv";
  run_stage(cfg, "sample:" + to_string(policy), [&](const fs::path& dir, RunManifest&) {
    const Setup s(cfg);
    std::optional<ValueModel> value;
    std::optional<LcbSystem> lcbs;
    std::string value_sha;
    if (needs_value(policy)) value.emplace(load_value(cfg, s, &value_sha));
    if (needs_lcb(policy)) lcbs.emplace(load_lcb(cfg, value_sha));
    const auto results = sample_batch(s.model, s.reward, value ? &*value : nullptr, lcbs ? &*lcbs : nullptr,
                                      sampler_config(cfg, policy), cfg.sampler.samples, cfg.seeds.sample);
    write_file_atomic(dir / name, samples_csv(results));
    const MeanEstimate en = effective_n_estimate(results, cfg.schedule.steps);
    log << results.size() << " samples (" << to_string(policy) << "), effective N " << en.mean << " +/- " << en.se
        << "\n";
    return std::vector<std::string>{name};
  });
  return cfg.resolved_output_dir() / name;
}

void cmd_eval(const ExperimentConfig& cfg, const std::vector<fs::path>& sample_sets, std::ostream& log) {
  if (sample_sets.empty()) throw SchemaError("eval: no sample sets given");
  run_stage(cfg, "eval", [&](const fs::path& dir, RunManifest&) {
    const RewardSpec reward = cfg.reward.to_spec();
    const auto& dg = cfg.diagnostics;
    std::vector<SampleSet> sets;
    for (const auto& p : sample_sets) sets.push_back(read_samples_csv(p));
    const std::vector<double> ref = coordinate(sets.front(), dg.coordinate);
    std::vector<SetMetrics> metrics;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      SetMetrics m = set_metrics(sets[i], reward, cfg.schedule.steps);
      m.name = sample_sets[i].stem().string();
      m.tv = marginal_tv(ref, coordinate(sets[i], dg.coordinate), dg.bins, dg.hist_lo, dg.hist_hi);
      metrics.push_back(std::move(m));
    }
    std::ostringstream csv;
    csv << "set,n,effective_n,effective_n_se,reward_mean,reward_mean_se,region_mass,region_lo,region_hi,"
           "forced_acceptances,tv_vs_reference\n";
    json arr = json::array();
    for (const auto& m : metrics) {
      csv << m.name << ',' << m.n << ',' << format_double(m.effective_n.mean) << ',' << format_double(m.effective_n.se)
          << ',' << format_double(m.reward_mean) << ',' << format_double(m.reward_mean_se) << ','
          << format_double(m.region_mass) << ',' << format_double(m.region_ci.lo) << ','
          << format_double(m.region_ci.hi) << ',' << m.forced << ',' << format_double(m.tv) << '\n';
      arr.push_back({{"set", m.name},
                     {"n", m.n},
                     {"effective_n", m.effective_n.mean},
                     {"effective_n_se", m.effective_n.se},
                     {"reward_mean", m.reward_mean},
                     {"reward_mean_se", m.reward_mean_se},
                     {"region_mass", m.region_mass},
                     {"region_ci", {m.region_ci.lo, m.region_ci.hi}},
                     {"forced_acceptances", m.forced},
                     {"tv_vs_reference", m.tv}});
      log << m.name << ": n " << m.n << ", effective N " << m.effective_n.mean << ", region mass " << m.region_mass
          << ", TV vs " << metrics.front().name << " " << m.tv << "\n";
    }
    write_file_atomic(dir / "metrics.csv", csv.str());
    write_file_atomic(dir / "metrics.json",
                      json{{"reference", metrics.front().name}, {"bins", dg.bins}, {"sets", arr}}.dump(2) + "\n");
    return std::vector<std::string>{"metrics.csv", "metrics.json"};
  });
}

void cmd_coverage(const ExperimentConfig& cfg, std::ostream& log) {
  run_stage(cfg, "coverage", [&](const fs::path& dir, RunManifest&) {
    const Setup s(cfg);
    std::string value_sha;
    const ValueModel value = load_value(cfg, s, &value_sha);
    const LcbSystem lcbs = load_lcb(cfg, value_sha);
    const auto& dg = cfg.diagnostics;
    const CoverageMatrix cm = coverage_matrix(s.model, value, lcbs, dg.coverage_sources, dg.coverage_proposals,
                                              cfg.seeds.coverage, dg.coverage_threshold, cfg.sampler.lcb_cap);
    std::ostringstream csv;
    csv << "source,level,covered_fraction\n";
    for (int i = 0; i < cm.sources; ++i)
      for (std::size_t li = 0; li < cm.levels.size(); ++li)
        csv << i << ',' << cm.levels[li] << ',' << format_double(cm.entries[i][li]) << '\n';
    std::ostringstream summary;
    summary << "level,violation_fraction\n";
    for (std::size_t li = 0; li < cm.levels.size(); ++li)
      summary << cm.levels[li] << ',' << format_double(cm.violation_fraction[li]) << '\n';
    write_file_atomic(dir / "coverage.csv", csv.str());
    write_file_atomic(dir / "coverage_summary.csv", summary.str());
    write_file_atomic(dir / "coverage.json", cm.to_json().dump(2) + "\n");
    log << "coverage: worst zeta " << cm.worst_zeta << " at level " << cm.worst_level << " (c = "
        << 1.0 - cm.threshold << ")\n";
    return std::vector<std::string>{"coverage.csv", "coverage_summary.csv", "coverage.json"};
  });
}

void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  run_stage(cfg, "sweep", [&](const fs::path& dir, RunManifest&) {
    std::ostringstream csv;
    csv << "temperature,delta,seed,policy,n,effective_n,effective_n_se,region_mass,region_lo,region_hi,"
           "forced_acceptances\n";
    json rows = json::array();
    const auto emit = [&](double alpha, std::optional<double> delta, std::uint64_t seed, Policy p,
                          const std::vector<SampleResult>& results, const RewardSpec& reward) {
      const SetMetrics m = set_metrics(to_set(results), reward, cfg.schedule.steps);
      csv << format_double(alpha) << ',' << (delta ? format_double(*delta) : "") << ',' << seed << ','
          << to_string(p) << ',' << m.n << ',' << format_double(m.effective_n.mean) << ','
          << format_double(m.effective_n.se) << ',' << format_double(m.region_mass) << ','
          << format_double(m.region_ci.lo) << ',' << format_double(m.region_ci.hi) << ',' << m.forced << '\n';
      rows.push_back({{"temperature", alpha},
                      {"delta", delta ? json(*delta) : json(nullptr)},
                      {"seed", seed},
                      {"policy", to_string(p)},
                      {"n", m.n},
                      {"effective_n", m.effective_n.mean},
                      {"effective_n_se", m.effective_n.se},
                      {"region_mass", m.region_mass},
                      {"region_ci", {m.region_ci.lo, m.region_ci.hi}},
                      {"forced_acceptances", m.forced}});
      log << "alpha " << alpha << (delta ? " delta " + format_double(*delta) : std::string()) << " seed " << seed
          << " " << to_string(p) << ": effective N " << m.effective_n.mean << ", region mass " << m.region_mass
          << "\n";
    };

    for (double alpha : cfg.sweep.temperatures) {
      ExperimentConfig ac = cfg;
      ac.reward.temperature = alpha;
      const Setup s(ac);
      const ValueModel value = build_value(ac, s);
      for (std::uint64_t seed : cfg.sweep.seeds) {
        const std::uint64_t sample_seed = derive_seed(cfg.seeds.sample, seed);
        for (const auto& pname : cfg.sweep.policies) {
          const Policy p = policy_from_string(pname);
          if (needs_lcb(p)) continue;
          emit(alpha, std::nullopt, seed, p,
               sample_batch(s.model, s.reward, &value, nullptr, sampler_config(ac, p), ac.sampler.samples, sample_seed),
               s.reward);
        }
        for (double delta : cfg.sweep.deltas) {
          bool any = false;
          for (const auto& pname : cfg.sweep.policies) any = any || needs_lcb(policy_from_string(pname));
          if (!any) break;
          ExperimentConfig dc = ac;
          dc.lcb.train.delta = delta;
          dc.lcb.train.seed = derive_seed(cfg.seeds.lcb, seed);
          const TrainResult res = train(dc, s, value);
          for (const auto& pname : cfg.sweep.policies) {
            const Policy p = policy_from_string(pname);
            if (!needs_lcb(p)) continue;
            emit(alpha, delta, seed, p,
                 sample_batch(s.model, s.reward, &value, &res.system, sampler_config(dc, p), dc.sampler.samples,
                              sample_seed),
                 s.reward);
          }
        }
      }
    }
    write_file_atomic(dir / "sweep.csv", csv.str());
    write_file_atomic(dir / "sweep.json", json{{"rows", rows}}.dump(2) + "\n");
    return std::vector<std::string>{"sweep.csv", "sweep.json"};
  });
}

void cmd_verify_manifest(const fs::path& dir, std::ostream& log) {
  const auto problems = verify_manifest(dir);
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " file(s) disagree with the manifest:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ArtifactMismatch(msg);
  }
  log << "manifest verified: " << RunManifest::load_or_new(dir).files().size() << " files\n";
}

}  // namespace lcb
