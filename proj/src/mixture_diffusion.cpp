#include "lcb/mixture_diffusion.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lcb {

namespace {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix lower_cholesky(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw std::runtime_error(std::string(what) + " is not positive definite");
  return llt.matrixL();
}

}  // namespace

void MixtureSpec::validate() const {
  if (weights.empty()) throw std::invalid_argument("mixture: no components");
  if (means.size() != weights.size()) throw std::invalid_argument("mixture: weights and means differ in length");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("mixture: weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture: weights must sum to 1");
  if (covariance.rows() == 0 || covariance.rows() != covariance.cols())
    throw std::invalid_argument("mixture: covariance must be square");
  for (const auto& m : means)
    if (m.size() != covariance.rows()) throw std::invalid_argument("mixture: mean dimension mismatch");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("mixture: covariance must be symmetric");
  if (!(smallest_eigenvalue_symmetric(covariance) > 0.0))
    throw std::invalid_argument("mixture: covariance must be positive definite");
}

double MixtureSpec::mean_coordinate(Eigen::Index j) const {
  double m = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) m += weights[k] * means[k](j);
  return m;
}

NoiseSchedule::NoiseSchedule(std::vector<double> alphas) : alphas_(std::move(alphas)) {
  if (alphas_.empty()) throw std::invalid_argument("schedule: at least one step required");
  alpha_bars_.resize(alphas_.size() + 1);
  alpha_bars_[0] = 1.0;
  for (std::size_t t = 0; t < alphas_.size(); ++t) {
    if (!(alphas_[t] > 0.0 && alphas_[t] < 1.0)) throw std::invalid_argument("schedule: alpha_t must lie in (0, 1)");
    alpha_bars_[t + 1] = alpha_bars_[t] * alphas_[t];
  }
}

NoiseSchedule NoiseSchedule::linear_beta(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule: steps must be positive");
  std::vector<double> alphas(steps);
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    alphas[t] = 1.0 - (beta_start + frac * (beta_end - beta_start));
  }
  return NoiseSchedule(std::move(alphas));
}

Vector MixturePosterior::mean() const {
  Vector m = Vector::Zero(shared_covariance.rows());
  for (Eigen::Index k = 0; k < weights.size(); ++k) m += weights(k) * component_means[k];
  return m;
}

Matrix MixturePosterior::covariance() const {
  const Vector mu = mean();
  Matrix c = shared_covariance;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    const Vector d = component_means[k] - mu;
    c += weights(k) * d * d.transpose();
  }
  return c;
}

MixtureDiffusion::MixtureDiffusion(MixtureSpec spec, NoiseSchedule schedule)
    : spec_(std::move(spec)), schedule_(std::move(schedule)) {
  spec_.validate();
  const Eigen::Index d = spec_.dim();
  const Matrix eye = Matrix::Identity(d, d);
  const std::size_t K = spec_.components();
  const int T = schedule_.steps();

  for (double w : spec_.weights) log_weights_.push_back(std::log(w));

  levels_.resize(T + 1);
  for (int t = 0; t <= T; ++t) {
    Level& lv = levels_[t];
    const double ab = schedule_.alpha_bar(t);
    lv.cov = symmetrize(ab * spec_.covariance + (1.0 - ab) * eye);
    lv.chol.compute(lv.cov);
    if (lv.chol.info() != Eigen::Success) throw std::runtime_error("level covariance is not positive definite");
    lv.precision = symmetrize(lv.chol.solve(eye));
    lv.lower = lv.chol.matrixL();
    lv.log_norm = -lv.lower.diagonal().array().log().sum() - 0.5 * static_cast<double>(d) * std::log(2.0 * M_PI);
    for (const auto& m : spec_.means) lv.means.push_back(std::sqrt(ab) * m);

    lv.x0_gain = std::sqrt(ab) * spec_.covariance * lv.precision;
    for (const auto& m : spec_.means) lv.x0_offsets.push_back(m - std::sqrt(ab) * lv.x0_gain * m);
    lv.x0_cov = symmetrize(spec_.covariance - ab * spec_.covariance * lv.precision * spec_.covariance);
    if (t == 0) {
      lv.x0_cov.setZero();
      lv.x0_chol = Matrix::Zero(d, d);
    } else {
      lv.x0_chol = lower_cholesky(lv.x0_cov, "x0 posterior covariance");
    }
  }

  steps_.resize(T);
  for (int t = 0; t < T; ++t) {
    Step& st = steps_[t];
    const Level& cur = levels_[t];
    const Level& nxt = levels_[t + 1];
    const double a = schedule_.alpha(t);
    st.gain = std::sqrt(a) * cur.cov * nxt.precision;
    for (std::size_t k = 0; k < K; ++k) st.offsets.push_back(cur.means[k] - st.gain * nxt.means[k]);
    st.cov = symmetrize(cur.cov - a * cur.cov * nxt.precision * cur.cov);
    st.chol = lower_cholesky(st.cov, "reverse kernel covariance");
  }
}

ForwardMarginal MixtureDiffusion::forward_marginal(int t) const {
  if (t < 0 || t > steps()) throw std::out_of_range("forward_marginal: timestep out of range");
  return {levels_[t].means, levels_[t].cov};
}

Vector MixtureDiffusion::log_responsibilities(const Vector& x, int t) const {
  Vector out(static_cast<Eigen::Index>(spec_.components()));
  log_responsibilities_into(x, t, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

void MixtureDiffusion::log_responsibilities_into(const Vector& x, int t, std::span<double> out) const {
  const Level& lv = levels_.at(t);
  const std::size_t K = spec_.components();
  const Eigen::Index d = dim();
  for (std::size_t k = 0; k < K; ++k) {
    const double* mu = lv.means[k].data();
    double quad = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) row += lv.precision(i, j) * (x(j) - mu[j]);
      quad += (x(i) - mu[i]) * row;
    }
    out[k] = std::max(log_weights_[k] + lv.log_norm - 0.5 * quad, kLogDensityFloor);
  }
  const double lse = logsumexp(out.first(K));
  for (std::size_t k = 0; k < K; ++k) out[k] -= lse;
}

Vector MixtureDiffusion::responsibilities(const Vector& x, int t) const {
  return log_responsibilities(x, t).array().exp();
}

Vector MixtureDiffusion::x0_component_mean(const Vector& x, int t, std::size_t k) const {
  const Level& lv = levels_.at(t);
  return lv.x0_gain * x + lv.x0_offsets[k];
}

Vector MixtureDiffusion::reverse_component_mean(const Vector& x_next, int t, std::size_t k) const {
  const Step& st = steps_.at(t);
  return st.gain * x_next + st.offsets[k];
}

MixturePosterior MixtureDiffusion::reverse_kernel(const Vector& x_next, int t) const {
  if (t < 0 || t >= steps()) throw std::out_of_range("reverse_kernel: timestep out of range");
  MixturePosterior post;
  post.weights = responsibilities(x_next, t + 1);
  for (std::size_t k = 0; k < spec_.components(); ++k) post.component_means.push_back(reverse_component_mean(x_next, t, k));
  post.shared_covariance = steps_[t].cov;
  return post;
}

MixturePosterior MixtureDiffusion::posterior_x0(const Vector& x, int t) const {
  if (t < 1 || t > steps()) throw std::out_of_range("posterior_x0: timestep out of range");
  MixturePosterior post;
  post.weights = responsibilities(x, t);
  for (std::size_t k = 0; k < spec_.components(); ++k) post.component_means.push_back(x0_component_mean(x, t, k));
  post.shared_covariance = levels_[t].x0_cov;
  return post;
}

std::size_t MixtureDiffusion::pick_component(const Vector& log_weights, Rng& rng) const {
  const double u = rng.uniform_open0();
  double acc = 0.0;
  const std::size_t K = static_cast<std::size_t>(log_weights.size());
  for (std::size_t k = 0; k + 1 < K; ++k) {
    acc += std::exp(log_weights(k));
    if (u <= acc) return k;
  }
  return K - 1;
}

std::size_t MixtureDiffusion::pick_prior_component(Rng& rng) const {
  const double u = rng.uniform_open0();
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < spec_.components(); ++k) {
    acc += spec_.weights[k];
    if (u <= acc) return k;
  }
  return spec_.components() - 1;
}

Vector MixtureDiffusion::sample_prior(Rng& rng) const {
  draws_.fetch_add(1, std::memory_order_relaxed);
  return sample_forward_marginal(steps(), rng);
}

Vector MixtureDiffusion::sample_reverse_step(const Vector& x_next, int t, Rng& rng) const {
  draws_.fetch_add(1, std::memory_order_relaxed);
  const Step& st = steps_.at(t);
  const std::size_t k = spec_.components() == 1 ? 0 : pick_component(log_responsibilities(x_next, t + 1), rng);
  return st.gain * x_next + st.offsets[k] + st.chol * rng.normal_vector(dim());
}

Trajectory MixtureDiffusion::sample_trajectory(Rng& rng) const {
  Trajectory traj;
  traj.states.reserve(steps() + 1);
  traj.states.push_back(sample_prior(rng));
  for (int t = steps() - 1; t >= 0; --t) traj.states.push_back(sample_reverse_step(traj.states.back(), t, rng));
  return traj;
}

Vector MixtureDiffusion::sample_data(Rng& rng) const {
  const std::size_t k = pick_prior_component(rng);
  return spec_.means[k] + levels_[0].lower * rng.normal_vector(dim());
}

Vector MixtureDiffusion::sample_forward_marginal(int t, Rng& rng) const {
  const Level& lv = levels_.at(t);
  const std::size_t k = pick_prior_component(rng);
  return lv.means[k] + lv.lower * rng.normal_vector(dim());
}

Vector MixtureDiffusion::sample_forward_from(const Vector& x_prev, int t_prev, int t, Rng& rng) const {
  if (t < t_prev) throw std::invalid_argument("sample_forward_from: target level precedes source level");
  const double ratio = schedule_.alpha_bar(t) / schedule_.alpha_bar(t_prev);
  return std::sqrt(ratio) * x_prev + std::sqrt(1.0 - ratio) * rng.normal_vector(dim());
}

Vector MixtureDiffusion::sample_posterior_x0(const Vector& x, int t, Rng& rng) const {
  if (t == 0) return x;
  const Level& lv = levels_.at(t);
  const std::size_t k = spec_.components() == 1 ? 0 : pick_component(log_responsibilities(x, t), rng);
  return lv.x0_gain * x + lv.x0_offsets[k] + lv.x0_chol * rng.normal_vector(dim());
}

}  // namespace lcb
