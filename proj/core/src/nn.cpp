#include "handcast/nn.hpp"

#include <cmath>
#include <numbers>

namespace handcast::nn {

Linear::Linear(std::string name, int in, int out, std::mt19937_64& rng, double init_scale) {
  const double bound = init_scale / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  weight.name = name + ".weight";
  weight.value.resize(in, out);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = dist(rng);
  bias.name = std::move(name) + ".bias";
  bias.value.resize(1, out);
  for (Eigen::Index i = 0; i < bias.value.size(); ++i) bias.value.data()[i] = dist(rng);
  weight.zero_grad();
  bias.zero_grad();
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

void Linear::backward_params(const Matrix& x, const Matrix& dy) {
  weight.grad.noalias() += x.transpose() * dy;
  bias.grad += dy.colwise().sum();
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  backward_params(x, dy);
  return dy * weight.value.transpose();
}

LayerNorm::LayerNorm(std::string name, int dim) {
  gamma.name = name + ".gamma";
  gamma.value = Matrix::Ones(1, dim);
  beta.name = std::move(name) + ".beta";
  beta.value = Matrix::Zero(1, dim);
  gamma.zero_grad();
  beta.zero_grad();
}

Matrix LayerNorm::forward(const Matrix& x, LayerNormCache* cache) const {
  const auto d = static_cast<double>(x.cols());
  Eigen::VectorXd mean = x.rowwise().sum() / d;
  Matrix centered = x.colwise() - mean;
  Eigen::VectorXd var = centered.array().square().rowwise().sum() / d;
  Eigen::VectorXd inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const LayerNormCache& cache, const Matrix& dy) {
  gamma.grad += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  beta.grad += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  const Eigen::VectorXd mean_dxhat = dxhat.rowwise().sum() / d;
  const Eigen::VectorXd mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum() / d;
  Matrix dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx -= (cache.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  return dx.array().colwise() * cache.inv_std.array();
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  return x.binaryExpr(dy, [](double v, double g) {
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    return g * (0.5 * (1.0 + t) + 0.5 * v * dt);
  });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, int dim, int n_heads,
                                       std::mt19937_64& rng)
    : q_proj(name + ".q", dim, dim, rng),
      k_proj(name + ".k", dim, dim, rng),
      v_proj(name + ".v", dim, dim, rng),
      out_proj(name + ".out", dim, dim, rng),
      heads(n_heads) {}

Matrix MultiHeadAttention::forward(const Matrix& x, int batch, int tokens,
                                   AttentionCache* cache) const {
  const int dim = static_cast<int>(x.cols());
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = q_proj.forward(x);
  Matrix k = k_proj.forward(x);
  Matrix v = v_proj.forward(x);
  Matrix context(x.rows(), dim);
  std::vector<Matrix> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(batch * heads));
  for (int b = 0; b < batch; ++b) {
    const int r0 = b * tokens;
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh;
      Matrix s = (q.block(r0, c0, tokens, dh) * k.block(r0, c0, tokens, dh).transpose()) * scale;
      for (int i = 0; i < tokens; ++i) {
        const double m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp();
        s.row(i) /= s.row(i).sum();
      }
      context.block(r0, c0, tokens, dh).noalias() = s * v.block(r0, c0, tokens, dh);
      if (cache) probs.push_back(std::move(s));
    }
  }
  Matrix y = out_proj.forward(context);
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return y;
}

Matrix MultiHeadAttention::backward(const AttentionCache& cache, int batch, int tokens,
                                    const Matrix& dy) {
  const int dim = static_cast<int>(cache.x.cols());
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix dcontext = out_proj.backward(cache.context, dy);
  Matrix dq(cache.q.rows(), dim), dk(cache.k.rows(), dim), dv(cache.v.rows(), dim);
  for (int b = 0; b < batch; ++b) {
    const int r0 = b * tokens;
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh;
      const Matrix& p = cache.probs[static_cast<std::size_t>(b * heads + h)];
      const auto dctx = dcontext.block(r0, c0, tokens, dh);
      dv.block(r0, c0, tokens, dh).noalias() = p.transpose() * dctx;
      Matrix dp = dctx * cache.v.block(r0, c0, tokens, dh).transpose();
      const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
      Matrix ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
      dq.block(r0, c0, tokens, dh).noalias() = ds * cache.k.block(r0, c0, tokens, dh);
      dk.block(r0, c0, tokens, dh).noalias() = ds.transpose() * cache.q.block(r0, c0, tokens, dh);
    }
  }
  Matrix dx = q_proj.backward(cache.x, dq);
  dx += k_proj.backward(cache.x, dk);
  dx += v_proj.backward(cache.x, dv);
  return dx;
}

TransformerBlock::TransformerBlock(const std::string& name, int dim, int heads, int ff_dim,
                                   std::mt19937_64& rng)
    : ln1(name + ".ln1", dim),
      ln2(name + ".ln2", dim),
      attn(name + ".attn", dim, heads, rng),
      ff1(name + ".ff1", dim, ff_dim, rng),
      ff2(name + ".ff2", ff_dim, dim, rng) {}

Matrix TransformerBlock::forward(const Matrix& x, int batch, int tokens, BlockCache* cache) const {
  LayerNormCache ln1c, ln2c;
  Matrix h1 = ln1.forward(x, cache ? &ln1c : nullptr);
  Matrix mid = x + attn.forward(h1, batch, tokens, cache ? &cache->attn : nullptr);
  Matrix h2 = ln2.forward(mid, cache ? &ln2c : nullptr);
  Matrix ff_pre = ff1.forward(h2);
  Matrix ff_act = gelu(ff_pre);
  Matrix out = mid + ff2.forward(ff_act);
  if (cache) {
    cache->ln1 = std::move(ln1c);
    cache->ln2 = std::move(ln2c);
    cache->h1 = std::move(h1);
    cache->mid = std::move(mid);
    cache->h2 = std::move(h2);
    cache->ff_pre = std::move(ff_pre);
    cache->ff_act = std::move(ff_act);
  }
  return out;
}

Matrix TransformerBlock::backward(const BlockCache& cache, int batch, int tokens, const Matrix& dy) {
  Matrix dmid = dy;
  const Matrix dff_act = ff2.backward(cache.ff_act, dy);
  const Matrix dff_pre = gelu_backward(cache.ff_pre, dff_act);
  const Matrix dh2 = ff1.backward(cache.h2, dff_pre);
  dmid += ln2.backward(cache.ln2, dh2);
  Matrix dx = dmid;
  const Matrix dh1 = attn.backward(cache.attn, batch, tokens, dmid);
  dx += ln1.backward(cache.ln1, dh1);
  return dx;
}

Eigen::RowVectorXd sinusoidal_embedding(double step, int dim) {
  Eigen::RowVectorXd e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e[i] = std::sin(step * freq);
    e[half + i] = std::cos(step * freq);
  }
  return e;
}

}  // namespace handcast::nn
