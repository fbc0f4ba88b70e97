#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "handcast/data.hpp"
#include "handcast/diffusion.hpp"
#include "handcast/nn.hpp"

namespace handcast {

struct DenoiserConfig {
  int d_z = 512;
  int n_layers = 4;
  int n_heads = 8;
  int d_ff = 2048;
  int d_img = 384;
  int T = 20;
  int F = 10;
  int J = kNumJoints;
  int n_hand = 21;
  int N = 1000;
  ScheduleKind schedule = ScheduleKind::kLinear;

  int tokens() const { return T + F; }
  int joint_width() const { return 3 * J; }
  // camera (9) + left (2) + right (2) + image features.
  int condition_width() const { return 13 + d_img; }
  JointLayout layout() const { return {J - 2 * n_hand, n_hand}; }
  // Throws ConfigError.
  void validate() const;
  std::string to_json() const;
  static DenoiserConfig from_json(const std::string& text);

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

// Flattens one observation frame's conditions into the encoder layout
// [c_cam | c_left | c_right | c_img].
Eigen::RowVectorXd pack_condition(const Eigen::Matrix<double, 9, 1>& c_cam, const Vec2& c_left,
                                  const Vec2& c_right, const Eigen::VectorXd& c_img);

// Conditions for frames 0..T-1 of one sequence: T x condition_width.
Eigen::MatrixXd sequence_conditions(const Sequence& seq);

// Batched denoiser input. Rows of x_n are ordered (sample, frame); rows of
// conditions are ordered (sample, observation frame).
struct DenoiserInput {
  int batch = 0;
  Tensor x_n;
  Eigen::MatrixXd conditions;
  std::vector<int> steps;
};

struct DenoiserOutput {
  Tensor x0_hat;                 // (batch * (T+F)) x 3J
  Eigen::MatrixXd vis_logits;    // (batch * T) x 2, columns (left, right)
  Eigen::MatrixXd vis;           // logistic of vis_logits

  Eigen::MatrixXd visibility_of(int sample, int T) const { return vis.middleRows(sample * T, T); }
};

struct DenoiserCache {
  Eigen::MatrixXd obs_input;
  Eigen::MatrixXd obs_hidden_pre;
  Eigen::MatrixXd obs_hidden;
  Eigen::MatrixXd fut_input;
  Eigen::MatrixXd step_embedding;
  std::vector<nn::BlockCache> blocks;
  nn::LayerNormCache final_ln;
  Eigen::MatrixXd trunk;         // after final layer norm
  Eigen::MatrixXd obs_trunk;     // observation rows of `trunk`
  int batch = 0;
};

// Conditional denoising network: observation and future noise encoders,
// step and positional embeddings, a pre-norm transformer trunk with full
// self-attention over T+F tokens, a linear joint decoder on every token and
// a linear visibility decoder on observation tokens.
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }

  Eigen::RowVectorXd encode_obs(const Points& x_n_t, const Eigen::Matrix<double, 9, 1>& c_cam,
                                const Vec2& c_left, const Vec2& c_right,
                                const Eigen::VectorXd& c_img) const;
  Eigen::RowVectorXd encode_fut(const Points& x_n_t) const;

  // Throws ContractError on shape mismatches or steps outside [1, N].
  DenoiserOutput forward(const DenoiserInput& input, DenoiserCache* cache = nullptr) const;
  // Accumulates parameter gradients given dL/dx0_hat and dL/dvis_logits.
  void backward(const DenoiserCache& cache, const Tensor& d_x0_hat,
                const Eigen::MatrixXd& d_vis_logits);

  void zero_grad();
  std::size_t parameter_count();

  template <class Fn>
  void for_each_param(Fn&& fn) {
    obs_in_.for_each_param(fn);
    obs_out_.for_each_param(fn);
    fut_in_.for_each_param(fn);
    step_proj_.for_each_param(fn);
    fn(positional_);
    for (auto& b : blocks_) b.for_each_param(fn);
    final_ln_.for_each_param(fn);
    joint_head_.for_each_param(fn);
    vis_head_.for_each_param(fn);
  }

  std::vector<nn::Param*> parameters();

 private:
  Eigen::MatrixXd step_embeddings(const std::vector<int>& steps) const;

  DenoiserConfig config_;
  nn::Linear obs_in_, obs_out_;
  nn::Linear fut_in_;
  nn::Linear step_proj_;
  nn::Param positional_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_ln_;
  nn::Linear joint_head_;
  nn::Linear vis_head_;
};

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

// Binary checkpoint: versioned header, the denoiser config, every model
// tensor by name, optional extra tensors and a free-form metadata string.
struct Checkpoint {
  DenoiserConfig config;
  std::vector<NamedTensor> weights;
  std::vector<NamedTensor> extras;
  std::string metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint make_checkpoint(DenoiserModel& model, std::vector<NamedTensor> extras = {},
                           std::string metadata = {});
// Rebuilds the model; throws IoError when names or shapes do not match.
DenoiserModel model_from_checkpoint(const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace handcast
