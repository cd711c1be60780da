#include "lcb/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcb {

Histogram1D::Histogram1D(double lo, double hi, int bins) : lo_(lo), hi_(hi), bins_(bins) {
  if (!(hi > lo)) throw std::invalid_argument("histogram: empty range");
  if (bins < 1) throw std::invalid_argument("histogram: bins must be positive");
  counts_.assign(static_cast<std::size_t>(bins) + 2, 0);
}

void Histogram1D::add(double x) {
  std::size_t idx;
  if (x < lo_) {
    idx = 0;
  } else if (x >= hi_) {
    idx = static_cast<std::size_t>(bins_) + 1;
  } else {
    const auto b = static_cast<std::size_t>((x - lo_) / (hi_ - lo_) * bins_);
    idx = std::min(b, static_cast<std::size_t>(bins_) - 1) + 1;
  }
  ++counts_[idx];
  ++total_;
}

void Histogram1D::add(std::span<const double> xs) {
  for (double x : xs) add(x);
}

std::vector<double> Histogram1D::edges() const {
  std::vector<double> e(static_cast<std::size_t>(bins_) + 1);
  for (int i = 0; i <= bins_; ++i) e[i] = lo_ + (hi_ - lo_) * i / bins_;
  return e;
}

std::vector<double> Histogram1D::probabilities() const {
  std::vector<double> p(counts_.size(), 0.0);
  if (total_ == 0) return p;
  for (std::size_t i = 0; i < counts_.size(); ++i) p[i] = static_cast<double>(counts_[i]) / static_cast<double>(total_);
  return p;
}

double marginal_tv(std::span<const double> a, std::span<const double> b, int bins, double lo, double hi) {
  if (a.empty() || b.empty()) throw std::invalid_argument("marginal_tv: empty sample set");
  Histogram1D ha(lo, hi, bins), hb(lo, hi, bins);
  ha.add(a);
  hb.add(b);
  const auto pa = ha.probabilities();
  const auto pb = hb.probabilities();
  double tv = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) tv += std::abs(pa[i] - pb[i]);
  return 0.5 * tv;
}

std::vector<double> coordinate_values(const std::vector<SampleResult>& results, int coordinate) {
  std::vector<double> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(r.x0(coordinate));
  return out;
}

double effective_n(const std::vector<SampleResult>& results, int steps) {
  if (results.empty()) throw std::invalid_argument("effective_n: empty batch");
  std::uint64_t total = 0;
  for (const auto& r : results) total += r.total_proposals();
  return static_cast<double>(total) / (static_cast<double>(steps) * static_cast<double>(results.size()));
}

MeanEstimate effective_n_estimate(const std::vector<SampleResult>& results, int steps) {
  if (results.empty()) throw std::invalid_argument("effective_n: empty batch");
  const double n = static_cast<double>(results.size());
  double sum = 0.0, sum2 = 0.0;
  for (const auto& r : results) {
    const double e = static_cast<double>(r.total_proposals()) / steps;
    sum += e;
    sum2 += e * e;
  }
  MeanEstimate est;
  est.mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum2 - n * est.mean * est.mean) / (n - 1.0)) : 0.0;
  est.se = std::sqrt(var / n);
  return est;
}

Interval wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / (1.0 + z2 / nn);
  return {successes == 0 ? 0.0 : std::max(0.0, centre - half), successes == n ? 1.0 : std::min(1.0, centre + half)};
}

RewardStats reward_stats(const std::vector<SampleResult>& results, const RewardSpec& reward) {
  RewardStats st;
  st.n = results.size();
  if (st.n == 0) return st;
  const double n = static_cast<double>(st.n);
  const double top = reward.max_raw();
  double sum = 0.0, sum2 = 0.0;
  std::size_t hits = 0;
  for (const auto& r : results) {
    sum += r.reward;
    sum2 += r.reward * r.reward;
    if (r.reward >= top) ++hits;
    st.forced_acceptances += r.forced_acceptances;
  }
  st.mean = sum / n;
  const double var = st.n > 1 ? std::max(0.0, (sum2 - n * st.mean * st.mean) / (n - 1.0)) : 0.0;
  st.mean_se = std::sqrt(var / n);
  st.mean_ci = {st.mean - 1.959963984540054 * st.mean_se, st.mean + 1.959963984540054 * st.mean_se};
  st.region_mass = static_cast<double>(hits) / n;
  st.region_ci = wilson_interval(hits, st.n);
  return st;
}

nlohmann::json CoverageMatrix::to_json() const {
  return {{"sources", sources},
          {"proposals", proposals},
          {"threshold", threshold},
          {"levels", levels},
          {"entries", entries},
          {"violation_fraction", violation_fraction},
          {"worst_zeta", worst_zeta},
          {"worst_level", worst_level}};
}

double coverage_entry(std::span<const double> proposal_values, double threshold) {
  if (proposal_values.empty()) throw std::invalid_argument("coverage_entry: no proposals");
  std::size_t ok = 0;
  for (double v : proposal_values) ok += v <= threshold ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(proposal_values.size());
}

CoverageMatrix coverage_matrix(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs, int M,
                               int N, std::uint64_t seed, double threshold, std::size_t cap) {
  if (M < 1 || N < 1) throw std::invalid_argument("coverage_matrix: M and N must be positive");
  const int T = model.steps();
  CoverageMatrix cm;
  cm.sources = M;
  cm.proposals = N;
  cm.threshold = threshold;
  for (int level = T + 1; level >= 1; --level) cm.levels.push_back(level);
  cm.entries.assign(static_cast<std::size_t>(M), std::vector<double>(cm.levels.size(), 0.0));

  parallel_for(static_cast<std::size_t>(M), [&](std::size_t i) {
    Rng rng(derive_seed(seed, 0xc0ULL, i));
    const SampleResult src = sample_lcb_rs(model, value, lcbs, rng, cap, true);
    const Trajectory& traj = *src.trajectory;
    std::vector<double> vals(static_cast<std::size_t>(N));
    for (std::size_t li = 0; li < cm.levels.size(); ++li) {
      const int level = cm.levels[li];
      const int t = level - 1;
      double B;
      if (level == T + 1) {
        B = lcbs.at(level).evaluate(Vector());
        for (auto& v : vals) v = value.evaluate(model.sample_prior(rng), T);
      } else {
        const Vector& x_next = traj.at_level(level);
        B = lcbs.at(level).evaluate(x_next);
        for (auto& v : vals) v = value.evaluate(model.sample_reverse_step(x_next, t, rng), t);
      }
      cm.entries[i][li] = coverage_entry(vals, B);
    }
  });

  cm.violation_fraction.assign(cm.levels.size(), 0.0);
  for (std::size_t li = 0; li < cm.levels.size(); ++li) {
    int bad = 0;
    for (int i = 0; i < M; ++i) bad += cm.entries[i][li] < threshold ? 1 : 0;
    cm.violation_fraction[li] = static_cast<double>(bad) / M;
    if (li == 0 || cm.violation_fraction[li] > cm.worst_zeta) {
      cm.worst_zeta = cm.violation_fraction[li];
      cm.worst_level = cm.levels[li];
    }
  }
  return cm;
}

std::vector<TracePoint> trajectory_trace(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs,
                                         Rng& rng, std::size_t cap) {
  const SampleResult res = sample_lcb_rs(model, value, lcbs, rng, cap, true);
  const Trajectory& traj = *res.trajectory;
  std::vector<TracePoint> out;
  for (int t = model.steps() - 1; t >= 0; --t) {
    TracePoint p;
    p.t = t;
    p.value = value.evaluate(traj.at_level(t), t);
    p.baseline = lcbs.at(t + 1).evaluate(traj.at_level(t + 1));
    out.push_back(p);
  }
  return out;
}

}  // namespace lcb
