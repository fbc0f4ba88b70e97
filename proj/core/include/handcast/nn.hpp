#pragma once

// Minimal dense layers with explicit backward passes. Activations are
// row-major in the sense of "one token per row"; storage is Eigen's default.

#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace handcast::nn {

using Matrix = Eigen::MatrixXd;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// y = x W + b, W is in x out, b is 1 x out.
struct Linear {
  Param weight;
  Param bias;

  Linear() = default;
  Linear(std::string name, int in, int out, std::mt19937_64& rng, double init_scale = 1.0);

  int in_features() const { return static_cast<int>(weight.value.rows()); }
  int out_features() const { return static_cast<int>(weight.value.cols()); }

  Matrix forward(const Matrix& x) const;
  // Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);
  // Parameter gradients only.
  void backward_params(const Matrix& x, const Matrix& dy);

  template <class Fn>
  void for_each_param(Fn&& fn) {
    fn(weight);
    fn(bias);
  }
};

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

struct LayerNorm {
  Param gamma;
  Param beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(std::string name, int dim);

  Matrix forward(const Matrix& x, LayerNormCache* cache) const;
  Matrix backward(const LayerNormCache& cache, const Matrix& dy);

  template <class Fn>
  void for_each_param(Fn&& fn) {
    fn(gamma);
    fn(beta);
  }
};

// tanh approximation of GELU.
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x);
double sigmoid(double x);

struct AttentionCache {
  Matrix x;
  Matrix q, k, v;
  // probs[b * heads + h] is L x L.
  std::vector<Matrix> probs;
  Matrix context;
};

// Bidirectional multi-head self-attention over `batch` independent groups of
// `tokens` consecutive rows.
struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, int heads, std::mt19937_64& rng);

  Matrix forward(const Matrix& x, int batch, int tokens, AttentionCache* cache) const;
  Matrix backward(const AttentionCache& cache, int batch, int tokens, const Matrix& dy);

  template <class Fn>
  void for_each_param(Fn&& fn) {
    q_proj.for_each_param(fn);
    k_proj.for_each_param(fn);
    v_proj.for_each_param(fn);
    out_proj.for_each_param(fn);
  }
};

struct BlockCache {
  LayerNormCache ln1, ln2;
  AttentionCache attn;
  Matrix h1;       // ln1 output
  Matrix mid;      // residual after attention
  Matrix h2;       // ln2 output
  Matrix ff_pre;   // first feed-forward projection, pre-activation
  Matrix ff_act;
};

// Pre-norm transformer encoder block:
//   x + MHA(LN(x)), then + FFN(LN(.)) with a GELU hidden layer.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int dim, int heads, int ff_dim, std::mt19937_64& rng);

  Matrix forward(const Matrix& x, int batch, int tokens, BlockCache* cache) const;
  Matrix backward(const BlockCache& cache, int batch, int tokens, const Matrix& dy);

  template <class Fn>
  void for_each_param(Fn&& fn) {
    ln1.for_each_param(fn);
    attn.for_each_param(fn);
    ln2.for_each_param(fn);
    ff1.for_each_param(fn);
    ff2.for_each_param(fn);
  }
};

// Sinusoidal embedding of a scalar step, width `dim` (even).
Eigen::RowVectorXd sinusoidal_embedding(double step, int dim);

}  // namespace handcast::nn
