#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "handcast/data.hpp"
#include "handcast/denoiser.hpp"

namespace handcast {

// Per-frame positions of one point, F x 3.
using Trajectory = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Throw ContractError on mismatched or empty input.
double ade(const Trajectory& pred, const Trajectory& gt);
double fde(const Trajectory& pred, const Trajectory& gt);

// Frames of Jh x 3 joints with a per-frame mask. An empty mask vector means
// every joint is annotated. std::nullopt marks an undefined metric.
using FrameMask = std::vector<std::vector<bool>>;
std::optional<double> mpjpe(const std::vector<Points>& pred, const std::vector<Points>& gt,
                            const FrameMask& mask = {});
std::optional<double> mpjpe_f(const std::vector<Points>& pred, const std::vector<Points>& gt,
                              const FrameMask& mask = {});
// Velocities are frame differences times fps; a joint pair contributes when
// both frames are annotated. Throws ContractError for fewer than 2 frames.
std::optional<double> mpjve(const std::vector<Points>& pred, const std::vector<Points>& gt,
                            double fps, const FrameMask& mask = {});
// Hand block with the wrist at row 0.
std::optional<double> wrist_relative_mpjpe(const Points& pred_hand, const Points& gt_hand,
                                           const std::vector<bool>& mask = {});

inline constexpr int kGammaBins = 5;
double oov_ratio(const Sequence& seq, Side side);
// Index of the interval (0.2k, 0.2(k+1)] holding gamma; -1 for gamma = 0.
int bin_gamma(double gamma);
std::string gamma_bin_label(int bin);

// Predicted joints for all T+F frames, plus optional per-observation-frame
// visibility probabilities (T x 2, columns left and right).
struct Forecast {
  std::vector<Points> joints;
  Eigen::MatrixXd vis;
};

Forecast baseline_static(const Sequence& seq, const DatasetStats& stats);
// Linear extrapolation of the last observed step. Throws ContractError for
// fewer than 2 past positions.
Trajectory baseline_cvm(const Trajectory& past, int F);
// Per-joint constant velocity from the ground-truth observed joints; joints
// unannotated at the last frame stay at the zero fill.
Forecast baseline_cvm(const Sequence& seq);
Forecast ground_truth_forecast(const Sequence& seq);

// One diffusion sample per sequence from a single fixed-seed noise stream,
// in dataset order and fixed-size batches.
std::vector<Forecast> model_forecasts(const DenoiserModel& model, const std::vector<Sequence>& data,
                                      std::uint64_t seed, int batch_size = 32);

struct Mean {
  double sum = 0.0;
  std::size_t count = 0;
  void add(double x) {
    sum += x;
    ++count;
  }
  void merge(const Mean& o) {
    sum += o.sum;
    count += o.count;
  }
  double value() const {
    return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  }
};

struct MetricCell {
  std::size_t pairs = 0;
  Mean ade, fde, mpjpe, mpjpe_f, mpjve;
  void merge(const MetricCell& o);
};

enum class Partition { kInView = 0, kOutOfView = 1, kAll = 2 };
const char* partition_name(Partition p);
// Side column index 2 pools both hands.
inline constexpr int kPooled = 2;

struct MethodReport {
  std::string method;
  // Baseline that reads ground-truth observed 3D joints.
  bool oracle_privileged = false;
  std::array<std::array<MetricCell, 3>, 3> cells;  // [partition][left, right, pooled]
  std::array<MetricCell, kGammaBins> gamma;        // both hands pooled
  std::vector<Mean> ade_per_timestep;              // pooled over all pairs
  Mean body_mpjpe;                                 // future body joints
  Mean obs_wrist_relative;                         // observation frames of in-view pairs
  Mean vis_accuracy;                               // threshold 0.5, when predicted

  const MetricCell& cell(Partition p, int side) const {
    return cells[static_cast<std::size_t>(p)][static_cast<std::size_t>(side)];
  }
};

struct EvalOptions {
  double fps = 10.0;
  std::uint64_t seed = 0;
  int batch_size = 32;
  JointLayout layout;
};

MethodReport evaluate(const std::string& method, const std::vector<Sequence>& data,
                      const std::vector<Forecast>& forecasts, const EvalOptions& opt = {});

struct MetricsReport {
  std::size_t n_sequences = 0;
  int T = 0;
  int F = 0;
  double fps = 10.0;
  std::uint64_t seed = 0;
  std::vector<MethodReport> methods;

  std::string to_json() const;
  std::string to_table() const;
};

}  // namespace handcast
