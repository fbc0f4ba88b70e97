#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace handcast {

// Row-per-frame joint tensor: (T+F) x 3J, or any stacked batch of those.
using Tensor = Eigen::MatrixXd;

enum class ScheduleKind {
  // beta ramps linearly from 1e-4 to 0.02 over n = 1..N.
  kLinear,
  // Same ramp with both endpoints multiplied by 1000/N (capped below 1), so
  // short chains still end close to pure noise. Identical to kLinear at N=1000.
  kScaledLinear,
};

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

// Tables indexed by step n = 0..N. alpha[0] = alpha_bar[0] = 1 and
// sigma[0] = sigma[1] = 0, so the last reverse step is deterministic.
struct DiffusionSchedule {
  int N = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  // Builds the tables from beta_1..beta_N (each in [0, 1)), with
  // sigma_n^2 = beta_n for n >= 2.
  static DiffusionSchedule from_betas(const std::vector<double>& betas);
};

// Throws ConfigError when N < 1.
DiffusionSchedule make_schedule(ScheduleKind kind, int N);

// x_n = sqrt(abar_n) x0 + sqrt(1 - abar_n) eps, for 0 <= n <= N.
Tensor q_sample(const Tensor& x0, int n, const Tensor& eps, const DiffusionSchedule& s);

struct PosteriorCoefficients {
  double on_xn = 0.0;
  double on_x0 = 0.0;
};

// Coefficients of the x0-parameterized posterior mean at step n (1 <= n <= N).
// Throws ContractError when 1 - abar_n < 1e-12.
PosteriorCoefficients posterior_coefficients(int n, const DiffusionSchedule& s);

Tensor posterior_mean(const Tensor& x_n, const Tensor& x0_hat, int n, const DiffusionSchedule& s);

// posterior_mean + sigma_n * noise.
Tensor reverse_step(const Tensor& x_n, const Tensor& x0_hat, int n, const DiffusionSchedule& s,
                    const Tensor& noise);

struct DenoiseOutput {
  Tensor x0_hat;
  // Visibility probabilities; may be empty for denoisers that do not
  // predict visibility.
  Eigen::MatrixXd vis;
};

using DenoiseFn = std::function<DenoiseOutput(const Tensor& x_n, int n)>;

// Standard-normal fill in column-major order.
Tensor gaussian_like(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

// Ancestral sampling for n = N..1. Returns the output of the final (n = 1)
// reverse step together with the visibility prediction made at that step.
// Throws ContractError when denoise_fn returns a tensor of the wrong shape.
DenoiseOutput sample(const DenoiseFn& denoise_fn, const Tensor& init_noise,
                     const DiffusionSchedule& s, std::mt19937_64& noise_source);

}  // namespace handcast
