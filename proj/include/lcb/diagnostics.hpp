#pragma once

#include "lcb/lcb.hpp"
#include "lcb/samplers.hpp"

#include <json.hpp>

#include <span>
#include <vector>

namespace lcb {

inline constexpr int kDefaultBins = 100;
inline constexpr double kDefaultHistLo = -10.0;
inline constexpr double kDefaultHistHi = 10.0;

// Uniform bins on [lo, hi) plus one underflow and one overflow bin.
class Histogram1D {
 public:
  Histogram1D(double lo, double hi, int bins);

  void add(double x);
  void add(std::span<const double> xs);

  int bins() const { return bins_; }
  std::vector<double> edges() const;
  // counts()[0] is underflow, counts()[bins+1] is overflow.
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t total() const { return total_; }
  std::vector<double> probabilities() const;

 private:
  double lo_, hi_;
  int bins_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

double marginal_tv(std::span<const double> a, std::span<const double> b, int bins = kDefaultBins,
                   double lo = kDefaultHistLo, double hi = kDefaultHistHi);
std::vector<double> coordinate_values(const std::vector<SampleResult>& results, int coordinate);

// Total proposals / (T * batch). Rejection-free runs give 1 + 1/T.
double effective_n(const std::vector<SampleResult>& results, int steps);

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
};
// Effective N with the standard error of per-sample proposal totals / T.
MeanEstimate effective_n_estimate(const std::vector<SampleResult>& results, int steps);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054);

struct RewardStats {
  std::size_t n = 0;
  double mean = 0.0;
  double mean_se = 0.0;
  Interval mean_ci;
  double region_mass = 0.0;  // fraction with raw reward at its maximum
  Interval region_ci;
  std::uint64_t forced_acceptances = 0;
};
RewardStats reward_stats(const std::vector<SampleResult>& results, const RewardSpec& reward);

struct CoverageMatrix {
  int sources = 0;      // M
  int proposals = 0;    // N
  double threshold = 0.95;
  std::vector<int> levels;                  // baseline levels, T+1 down to 1
  std::vector<std::vector<double>> entries;  // [source][level index]
  std::vector<double> violation_fraction;    // per level: fraction of sources with D < threshold
  double worst_zeta = 0.0;
  int worst_level = 0;

  nlohmann::json to_json() const;
};

// Fraction of proposal values at or below the threshold.
double coverage_entry(std::span<const double> proposal_values, double threshold);

// M guided (baselined) source trajectories; at each source state N fresh
// proposals are scored against the baseline.
CoverageMatrix coverage_matrix(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs, int M,
                               int N, std::uint64_t seed, double threshold = 0.95, std::size_t cap = kDefaultLcbCap);

struct TracePoint {
  int t = 0;
  double value = 0.0;     // v_t(x_t)
  double baseline = 0.0;  // B_{t+1}(x_{t+1})
};
// One guided trajectory; entries for t = T-1 .. 0.
std::vector<TracePoint> trajectory_trace(const MixtureDiffusion& model, const ValueModel& value, const LcbSystem& lcbs,
                                         Rng& rng, std::size_t cap = kDefaultLcbCap);

}  // namespace lcb
