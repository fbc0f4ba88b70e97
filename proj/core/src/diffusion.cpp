#include "handcast/diffusion.hpp"

#include <cmath>

#include "handcast/errors.hpp"

namespace handcast {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "scaled-linear") return ScheduleKind::kScaledLinear;
  throw ConfigError("unknown schedule kind '" + name + "' (expected linear or scaled-linear)");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "scaled-linear";
}

DiffusionSchedule DiffusionSchedule::from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw ConfigError("diffusion schedule needs at least one step");
  DiffusionSchedule s;
  s.N = static_cast<int>(betas.size());
  const auto size = betas.size() + 1;
  s.beta.assign(size, 0.0);
  s.alpha.assign(size, 1.0);
  s.alpha_bar.assign(size, 1.0);
  s.sigma.assign(size, 0.0);
  for (std::size_t n = 1; n < size; ++n) {
    const double b = betas[n - 1];
    if (!(b >= 0.0 && b < 1.0)) throw ConfigError("beta values must lie in [0, 1)");
    s.beta[n] = b;
    s.alpha[n] = 1.0 - b;
    s.alpha_bar[n] = s.alpha_bar[n - 1] * s.alpha[n];
    s.sigma[n] = n >= 2 ? std::sqrt(b) : 0.0;
  }
  return s;
}

DiffusionSchedule make_schedule(ScheduleKind kind, int N) {
  if (N < 1) throw ConfigError("diffusion step count must be at least 1");
  double lo = 1e-4;
  double hi = 0.02;
  if (kind == ScheduleKind::kScaledLinear) {
    const double scale = 1000.0 / N;
    lo = std::min(lo * scale, 0.999);
    hi = std::min(hi * scale, 0.999);
  }
  std::vector<double> betas(static_cast<std::size_t>(N));
  for (int n = 1; n <= N; ++n) {
    const double frac = N == 1 ? 0.0 : static_cast<double>(n - 1) / (N - 1);
    betas[static_cast<std::size_t>(n - 1)] = lo + (hi - lo) * frac;
  }
  return DiffusionSchedule::from_betas(betas);
}

Tensor q_sample(const Tensor& x0, int n, const Tensor& eps, const DiffusionSchedule& s) {
  if (n < 0 || n > s.N) {
    throw ContractError("diffusion step " + std::to_string(n) + " outside [0, " +
                        std::to_string(s.N) + "]");
  }
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols()) {
    throw ContractError("q_sample: noise shape differs from x0");
  }
  const double ab = s.alpha_bar[static_cast<std::size_t>(n)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

PosteriorCoefficients posterior_coefficients(int n, const DiffusionSchedule& s) {
  if (n < 1 || n > s.N) {
    throw ContractError("posterior step " + std::to_string(n) + " outside [1, " +
                        std::to_string(s.N) + "]");
  }
  const auto un = static_cast<std::size_t>(n);
  const double a = s.alpha[un];
  const double ab = s.alpha_bar[un];
  const double ab_prev = s.alpha_bar[un - 1];
  const double denom = 1.0 - ab;
  if (denom < 1e-12) throw ContractError("singular diffusion step: 1 - alpha_bar_n ~ 0");
  return {std::sqrt(a) * (1.0 - ab_prev) / denom, std::sqrt(ab_prev) * (1.0 - a) / denom};
}

Tensor posterior_mean(const Tensor& x_n, const Tensor& x0_hat, int n, const DiffusionSchedule& s) {
  if (x_n.rows() != x0_hat.rows() || x_n.cols() != x0_hat.cols()) {
    throw ContractError("posterior_mean: x_n and x0_hat shapes differ");
  }
  const auto c = posterior_coefficients(n, s);
  return c.on_xn * x_n + c.on_x0 * x0_hat;
}

Tensor reverse_step(const Tensor& x_n, const Tensor& x0_hat, int n, const DiffusionSchedule& s,
                    const Tensor& noise) {
  if (noise.rows() != x_n.rows() || noise.cols() != x_n.cols()) {
    throw ContractError("reverse_step: noise shape differs from x_n");
  }
  Tensor mu = posterior_mean(x_n, x0_hat, n, s);
  const double sigma = s.sigma[static_cast<std::size_t>(n)];
  if (sigma != 0.0) mu += sigma * noise;
  return mu;
}

Tensor gaussian_like(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

DenoiseOutput sample(const DenoiseFn& denoise_fn, const Tensor& init_noise,
                     const DiffusionSchedule& s, std::mt19937_64& noise_source) {
  Tensor x = init_noise;
  DenoiseOutput last;
  for (int n = s.N; n >= 1; --n) {
    last = denoise_fn(x, n);
    if (last.x0_hat.rows() != x.rows() || last.x0_hat.cols() != x.cols()) {
      throw ContractError("denoiser returned a tensor of the wrong shape");
    }
    if (n > 1) {
      const Tensor noise = gaussian_like(x.rows(), x.cols(), noise_source);
      x = reverse_step(x, last.x0_hat, n, s, noise);
    } else {
      x = posterior_mean(x, last.x0_hat, n, s);
    }
  }
  last.x0_hat = std::move(x);
  return last;
}

}  // namespace handcast
