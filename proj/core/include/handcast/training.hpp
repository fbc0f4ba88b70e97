#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "handcast/data.hpp"
#include "handcast/denoiser.hpp"
#include "handcast/diffusion.hpp"

namespace handcast {

struct TrainConfig {
  int iterations = 40000;
  double learning_rate = 1e-4;
  int batch_size = 32;
  double lambda_vis = 0.1;
  double lambda_reproj = 0.05;
  std::uint64_t seed = 0;
  // Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Throws ConfigError.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Per frame-joint annotation mask; same row order as the joint tensor.
using JointMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd grad;  // empty unless requested
};

struct JointLossValue : LossValue {
  std::size_t count = 0;  // contributing scalar entries
  bool empty_mask = false;
};

// Mean absolute error over mask-true (frame, joint, coordinate) entries.
// An all-false mask yields 0 with `empty_mask` set.
JointLossValue joint_loss(const Tensor& x0_hat, const Tensor& x0, const JointMask& mask,
                          bool with_grad = false);

// Mean binary cross-entropy. Throws ContractError for probabilities outside (0,1).
double visibility_loss(const Eigen::MatrixXd& v_hat, const JointMask& v);
// Same value computed from logits; gradient is with respect to the logits.
LossValue visibility_loss_from_logits(const Eigen::MatrixXd& logits, const JointMask& v,
                                      bool with_grad = false);

// Predicted wrists closer to the camera plane than this, or behind it, are
// skipped by the reprojection loss and counted in `skipped`.
inline constexpr double kMinReprojectionDepth = 0.05;

struct ReprojectionValue : LossValue {
  std::size_t skipped = 0;  // wrist projections below the depth floor
};

// Sum over both sides and every visible observation frame of the L1
// distance between the observed normalized 2D hand location and the
// projected predicted wrist. `x0_hat` holds one sequence, rows 0..T-1 being
// the observation frames.
ReprojectionValue reprojection_loss(const Tensor& x0_hat,
                                    const std::vector<HandObservation2D>& hands2d,
                                    const std::vector<CameraPose>& poses, const JointLayout& layout,
                                    bool with_grad = false);

struct LossParts {
  double joint = 0.0;
  double vis = 0.0;
  double reproj = 0.0;
  double total = 0.0;
};

// joint + lambda_vis * vis + lambda_reproj * reproj. Throws TrainingAbort
// naming the first non-finite component.
double total_loss(const LossParts& parts, double lambda_vis, double lambda_reproj);

// Flattens frames to one row per frame, joint j at columns 3j..3j+2.
Tensor joints_tensor(const Sequence& seq);
JointMask joints_mask(const Sequence& seq);
JointMask visibility_targets(const Sequence& seq);

struct TrainingBatch {
  std::vector<const Sequence*> sequences;
  Tensor x0;                   // (B*(T+F)) x 3J
  JointMask mask;              // (B*(T+F)) x J
  Eigen::MatrixXd conditions;  // (B*T) x condition width
  JointMask visibility;        // (B*T) x 2

  int size() const { return static_cast<int>(sequences.size()); }
};

TrainingBatch make_batch(const std::vector<const Sequence*>& seqs);

struct LossDiagnostics {
  bool empty_mask = false;
  std::size_t skipped_projections = 0;
};

// Forward pass at fixed noisy input and steps; when `backward` is set the
// gradient of the total loss is accumulated into the model.
LossParts evaluate_losses(DenoiserModel& model, const TrainingBatch& batch, const Tensor& x_n,
                          const std::vector<int>& steps, const TrainConfig& cfg, bool backward,
                          LossDiagnostics* diag = nullptr);

// Adaptive-moment optimizer at a constant learning rate.
class Adam {
 public:
  Adam() = default;
  explicit Adam(DenoiserModel& model);

  void step(DenoiserModel& model, const TrainConfig& cfg);
  std::int64_t steps() const { return t_; }

  std::vector<NamedTensor> state(DenoiserModel& model) const;
  void restore(DenoiserModel& model, const std::vector<NamedTensor>& tensors, std::int64_t t);

 private:
  std::vector<Eigen::MatrixXd> m_, v_;
  std::int64_t t_ = 0;
};

struct StepResult {
  LossParts parts;
  LossDiagnostics diagnostics;
  double grad_norm = 0.0;
};

// Draws one diffusion step per sequence uniformly in [1, N], corrupts the
// clean (T+F)-frame joints, runs forward/backward and applies one update.
// Throws TrainingAbort on a non-finite loss or gradient.
StepResult train_step(DenoiserModel& model, Adam& optimizer, const TrainingBatch& batch,
                      const DiffusionSchedule& schedule, const TrainConfig& cfg,
                      std::mt19937_64& rng);

// Owns model, optimizer and random stream; resumable from a checkpoint.
class Trainer {
 public:
  Trainer(const DenoiserConfig& model_cfg, const TrainConfig& cfg,
          const std::vector<Sequence>& dataset);
  // Resumes from a checkpoint written by `checkpoint()`.
  Trainer(const Checkpoint& ckpt, const TrainConfig& cfg, const std::vector<Sequence>& dataset);

  StepResult step();
  int iteration() const { return iteration_; }
  std::size_t empty_batches() const { return empty_batches_; }
  DenoiserModel& model() { return model_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  Checkpoint checkpoint();

 private:
  void check_dataset() const;
  TrainingBatch next_batch();

  TrainConfig cfg_;
  const std::vector<Sequence>* dataset_;
  DenoiserModel model_;
  Adam adam_;
  DiffusionSchedule schedule_;
  std::mt19937_64 rng_;
  int iteration_ = 0;
  std::size_t empty_batches_ = 0;
};

struct TrainOptions {
  // Loss CSV and checkpoints are written here when non-empty.
  std::filesystem::path out_dir;
  int checkpoint_every = 0;
  const Checkpoint* resume = nullptr;
  std::function<void(int iteration, const StepResult&)> on_step;
};

inline constexpr const char* kLossCsvHeader = "iteration,L_joint,L_vis,L_reproj,L_total";

// Runs steps until cfg.iterations total iterations have been made (counting
// those already in a resumed checkpoint). Throws ContractError on an empty
// dataset.
Checkpoint train(const std::vector<Sequence>& dataset, const DenoiserConfig& model_cfg,
                 const TrainConfig& cfg, const TrainOptions& options = {});

}  // namespace handcast
