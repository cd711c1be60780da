#include "lcb/trainer.hpp"

#include "lcb/errors.hpp"
#include "lcb/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lcb {

void TrainConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("train config: delta must lie in (0, 1)");
  if (!(lambda_max > 1.0)) throw std::invalid_argument("train config: lambda_max must exceed 1");
  if (!(lambda_tol > 0.0)) throw std::invalid_argument("train config: lambda_tol must be positive");
  if (particles < 2) throw std::invalid_argument("train config: at least two particles required");
  if (heldout_particles < 1) throw std::invalid_argument("train config: held-out particle count must be positive");
  if (refresh_rounds < 1 || steps_per_round < 1) throw std::invalid_argument("train config: rounds must be positive");
  if (advance_cap < 1) throw std::invalid_argument("train config: advance cap must be positive");
  if (!(opt.learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json levels_json = nlohmann::json::array();
  for (const auto& r : levels) {
    levels_json.push_back({{"level", r.level},
                           {"lambda", r.lambda},
                           {"tau", r.tau},
                           {"objective", r.objective},
                           {"objective_at_one", r.objective_at_one},
                           {"heldout_exceedance", r.heldout_exceedance},
                           {"heldout_pairs", r.heldout_pairs},
                           {"advance_proposals", r.advance_proposals},
                           {"forced_acceptances", r.forced_acceptances},
                           {"particle_value_mean", r.particle_value_mean},
                           {"particle_value_se", r.particle_value_se},
                           {"baseline_range", r.baseline_range}});
  }
  return {{"scheme", scheme}, {"seed", seed}, {"seconds", seconds}, {"levels", std::move(levels_json)}};
}

namespace {

// Seed tags keep every stage on its own streams.
enum Stream : std::uint64_t {
  kPairs = 0x10,
  kTauPairs = 0x11,
  kHeldoutPairs = 0x12,
  kAdvance = 0x20,
  kHeldoutAdvance = 0x21,
  kPrior = 0x30,
  kHeldoutPrior = 0x31,
};

std::uint64_t stream(const TrainConfig& cfg, int pass, Stream s) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(pass) << 8 | s);
}

// x_t ~ p_t(. | X.col(i)) for every particle.
Matrix draw_pairs(const MixtureDiffusion& model, const Matrix& X, int t, std::uint64_t seed, std::uint64_t round) {
  Matrix Y(X.rows(), X.cols());
  parallel_for(static_cast<std::size_t>(X.cols()), [&](std::size_t i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t), round, i));
    Y.col(static_cast<Eigen::Index>(i)) = model.sample_reverse_step(X.col(static_cast<Eigen::Index>(i)), t, rng);
  });
  return Y;
}

Matrix draw_prior(const MixtureDiffusion& model, std::size_t n, std::uint64_t seed) {
  Matrix X(model.dim(), static_cast<Eigen::Index>(n));
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    X.col(static_cast<Eigen::Index>(i)) = model.sample_prior(rng);
  });
  return X;
}

struct Advance {
  Matrix X;
  std::uint64_t proposals = 0;
  std::uint64_t forced = 0;
};

// Moves particles from level t+1 to level t with the baselined acceptance rule.
// For t == T the source is the prior and X is ignored.
Advance advance(const MixtureDiffusion& model, const ValueModel& value, const LcbBaseline& baseline, const Matrix& X,
                std::size_t n, int t, std::size_t cap, std::uint64_t seed) {
  Advance out;
  out.X.resize(model.dim(), static_cast<Eigen::Index>(n));
  std::vector<std::uint64_t> props(n);
  std::vector<char> forced(n);
  const bool prior = t == model.steps();
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t), i));
    const Vector src = prior ? Vector() : Vector(X.col(static_cast<Eigen::Index>(i)));
    const double threshold = baseline.evaluate(src);
    StepOutcome step = rejection_step(model, value, src, t, threshold, cap, rng);
    out.X.col(static_cast<Eigen::Index>(i)) = step.x;
    props[i] = step.proposals;
    forced[i] = step.forced ? 1 : 0;
  });
  for (std::size_t i = 0; i < n; ++i) {
    out.proposals += props[i];
    out.forced += static_cast<std::uint64_t>(forced[i]);
  }
  if (out.forced == n)
    throw ParticleCollapse("training: every particle hit the proposal cap at level " + std::to_string(t + 1));
  return out;
}

void summarize_particles(const ValueModel& value, const Matrix& X, int t, TimestepReport& rep) {
  const Vector v = value.evaluate_batch(X, t);
  const double n = static_cast<double>(v.size());
  rep.particle_value_mean = v.mean();
  const double var = (v.array() - rep.particle_value_mean).square().sum() / std::max(1.0, n - 1.0);
  rep.particle_value_se = std::sqrt(var / n);
}

double exceedance(const Vector& values, const Vector& thresholds) {
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) hits += values(i) > thresholds(i) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

double baseline_range(const BaselineModel& b, const Matrix& X) {
  if (b.is_constant() || X.cols() == 0) return 0.0;
  const Vector out = b.evaluate_batch(X);
  return out.maxCoeff() - out.minCoeff();
}

LcbSystem empty_system(const MixtureDiffusion& model, const ValueModel& value, const TrainConfig& cfg) {
  return LcbSystem(model.steps(), cfg.delta, cfg.lambda_max, cfg.epsilon0, value.bound());
}

// Chooses lambda (unless fixed) and tau for frozen b on the given batch.
void calibrate(LcbBaseline& lb, const Matrix& next, const Vector& values, const TrainConfig& cfg, bool search,
               TimestepReport& rep) {
  const std::vector<double> s = pair_scores(values, lb.b.evaluate_batch(next));
  lb.lambda = search ? search_lambda_scores(s, cfg.delta, 1.0, cfg.lambda_max, cfg.lambda_tol) : 1.0;
  rep.lambda = lb.lambda;
  rep.objective = objective_from_scores(s, lb.lambda, cfg.delta);
  rep.objective_at_one = objective_from_scores(s, 1.0, cfg.delta);
  lb.tau = tau_from_scores(s, lb.lambda, cfg.delta);
  rep.tau = lb.tau;
}

struct PassOptions {
  int pass = 1;
  bool fit_b = true;         // gradient steps on b
  bool search_lambda = false;
  bool alternate = false;    // lambda search before every round
  bool heldout = false;
};

// One backward sweep over levels T+1..1.
void run_pass(const MixtureDiffusion& model, const ValueModel& value, const TrainConfig& cfg, const PassOptions& opt,
              LcbSystem& system, TrainReport& report) {
  const int T = model.steps();
  const std::size_t m = cfg.particles;

  // Base case: scalar baseline on prior draws, b = 0.
  {
    TimestepReport rep;
    rep.level = T + 1;
    LcbBaseline& lb = system.at(T + 1);
    lb.b = BaselineModel::constant(0.0);
    const Matrix XT = draw_prior(model, m, stream(cfg, opt.pass, kPrior));
    const Vector vT = value.evaluate_batch(XT, T);
    const Matrix dummy = Matrix::Zero(model.dim(), static_cast<Eigen::Index>(m));
    calibrate(lb, dummy, vT, cfg, opt.search_lambda, rep);
    if (cfg.fresh_tau_pairs) {
      const Matrix XT2 = draw_prior(model, m, stream(cfg, opt.pass, kTauPairs));
      lb.tau = tau_from_scores(pair_scores(value.evaluate_batch(XT2, T), Vector::Zero(static_cast<Eigen::Index>(m))),
                               lb.lambda, cfg.delta);
      rep.tau = lb.tau;
    }
    if (opt.heldout) {
      const Matrix H = draw_prior(model, cfg.heldout_particles, stream(cfg, opt.pass, kHeldoutPrior));
      const Vector vh = value.evaluate_batch(H, T);
      rep.heldout_exceedance = exceedance(vh, Vector::Constant(vh.size(), lb.evaluate(Vector())));
      rep.heldout_pairs = cfg.heldout_particles;
    }
    report.levels.push_back(rep);
  }

  Advance particles = advance(model, value, system.at(T + 1), Matrix(), m, T, cfg.advance_cap,
                              stream(cfg, opt.pass, kAdvance));
  Advance held;
  if (opt.heldout)
    held = advance(model, value, system.at(T + 1), Matrix(), cfg.heldout_particles, T, cfg.advance_cap,
                   stream(cfg, opt.pass, kHeldoutAdvance));
  report.levels.back().advance_proposals = particles.proposals;
  report.levels.back().forced_acceptances = particles.forced;
  summarize_particles(value, particles.X, T, report.levels.back());

  for (int level = T; level >= 1; --level) {
    const int t = level - 1;
    TimestepReport rep;
    rep.level = level;
    LcbBaseline& lb = system.at(level);
    const Matrix& X = particles.X;
    const std::uint64_t pair_seed = stream(cfg, opt.pass, kPairs);

    Matrix Y = draw_pairs(model, X, t, pair_seed, 0);
    Vector v = value.evaluate_batch(Y, t);

    if (opt.fit_b) {
      BaselineOptConfig ocfg = cfg.opt;
      ocfg.seed = derive_seed(cfg.opt.seed, static_cast<std::uint64_t>(level));
      lb.b = mse_pretrain_baseline(X, v, ocfg);
      BaselineFitter fitter(lb.b, cfg.opt.learning_rate);
      double lambda = 1.0;
      for (int round = 0; round < cfg.refresh_rounds; ++round) {
        if (round > 0) {
          Y = draw_pairs(model, X, t, pair_seed, static_cast<std::uint64_t>(round));
          v = value.evaluate_batch(Y, t);
        }
        if (opt.alternate)
          lambda = search_lambda_scores(pair_scores(v, lb.b.evaluate_batch(X)), cfg.delta, 1.0, cfg.lambda_max,
                                        cfg.lambda_tol);
        for (int s = 0; s < cfg.steps_per_round; ++s) fitter.step(X, v, lambda, cfg.delta);
      }
      Y = draw_pairs(model, X, t, pair_seed, static_cast<std::uint64_t>(cfg.refresh_rounds));
      v = value.evaluate_batch(Y, t);
    }

    calibrate(lb, X, v, cfg, opt.search_lambda, rep);
    if (cfg.fresh_tau_pairs) {
      const Matrix Y2 = draw_pairs(model, X, t, stream(cfg, opt.pass, kTauPairs), 0);
      lb.tau = tau_from_scores(pair_scores(value.evaluate_batch(Y2, t), lb.b.evaluate_batch(X)), lb.lambda, cfg.delta);
      rep.tau = lb.tau;
    }
    rep.baseline_range = baseline_range(lb.b, X);

    if (opt.heldout) {
      const Matrix Yh = draw_pairs(model, held.X, t, stream(cfg, opt.pass, kHeldoutPairs), 0);
      rep.heldout_exceedance = exceedance(value.evaluate_batch(Yh, t), lb.evaluate_batch(held.X));
      rep.heldout_pairs = static_cast<std::size_t>(held.X.cols());
    }

    particles = advance(model, value, lb, X, m, t, cfg.advance_cap, stream(cfg, opt.pass, kAdvance));
    rep.advance_proposals = particles.proposals;
    rep.forced_acceptances = particles.forced;
    summarize_particles(value, particles.X, t, rep);
    if (opt.heldout)
      held = advance(model, value, lb, held.X, cfg.heldout_particles, t, cfg.advance_cap,
                     stream(cfg, opt.pass, kHeldoutAdvance));
    report.levels.push_back(rep);
  }
}

}  // namespace

TrainResult train_two_pass(const MixtureDiffusion& model, const ValueModel& value, const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult res{empty_system(model, value, cfg), {}};

  TrainReport first;
  run_pass(model, value, cfg, PassOptions{1, true, false, false, false}, res.system, first);
  run_pass(model, value, cfg, PassOptions{2, false, true, false, true}, res.system, res.report);

  res.report.scheme = "two_pass";
  res.report.seed = cfg.seed;
  res.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

TrainResult train_sequential(const MixtureDiffusion& model, const ValueModel& value, const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult res{empty_system(model, value, cfg), {}};
  run_pass(model, value, cfg, PassOptions{1, true, true, true, true}, res.system, res.report);
  res.report.scheme = "sequential";
  res.report.seed = cfg.seed;
  res.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace lcb
