#include "handcast/denoiser.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "handcast/errors.hpp"

namespace handcast {

void DenoiserConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("denoiser ") + name + " must be positive");
  };
  positive(d_z, "d_z");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_ff, "d_ff");
  positive(T, "T");
  positive(F, "F");
  positive(J, "J");
  positive(n_hand, "n_hand");
  positive(N, "N");
  if (d_img < 0) throw ConfigError("denoiser d_img must be non-negative");
  if (d_z % n_heads != 0) throw ConfigError("denoiser d_z must be divisible by n_heads");
  if (d_z % 2 != 0) throw ConfigError("denoiser d_z must be even");
  if (J < 2 * n_hand) throw ConfigError("denoiser J must cover both hand blocks");
}

std::string DenoiserConfig::to_json() const {
  nlohmann::ordered_json j;
  j["d_z"] = d_z;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["d_ff"] = d_ff;
  j["d_img"] = d_img;
  j["T"] = T;
  j["F"] = F;
  j["J"] = J;
  j["n_hand"] = n_hand;
  j["N"] = N;
  j["schedule"] = to_string(schedule);
  return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DenoiserConfig c;
    c.d_z = j.at("d_z").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.d_img = j.at("d_img").get<int>();
    c.T = j.at("T").get<int>();
    c.F = j.at("F").get<int>();
    c.J = j.at("J").get<int>();
    c.n_hand = j.at("n_hand").get<int>();
    c.N = j.at("N").get<int>();
    c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid denoiser config: ") + e.what());
  }
}

Eigen::RowVectorXd pack_condition(const Eigen::Matrix<double, 9, 1>& c_cam, const Vec2& c_left,
                                  const Vec2& c_right, const Eigen::VectorXd& c_img) {
  Eigen::RowVectorXd row(13 + c_img.size());
  row.head<9>() = c_cam.transpose();
  row.segment<2>(9) = c_left.transpose();
  row.segment<2>(11) = c_right.transpose();
  row.tail(c_img.size()) = c_img.transpose();
  return row;
}

Eigen::MatrixXd sequence_conditions(const Sequence& seq) {
  const int T = seq.T();
  const auto d_img = seq.obs_features.empty() ? 0 : seq.obs_features.front().size();
  Eigen::MatrixXd c(T, 13 + d_img);
  for (int t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    c.row(t) = pack_condition(seq.obs_poses[ut].conditioning(), seq.obs_hands2d[ut].left,
                              seq.obs_hands2d[ut].right, seq.obs_features[ut]);
  }
  return c;
}

DenoiserModel::DenoiserModel(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.d_z;
  obs_in_ = nn::Linear("obs_encoder.0", config_.joint_width() + config_.condition_width(), d, rng);
  obs_out_ = nn::Linear("obs_encoder.1", d, d, rng);
  fut_in_ = nn::Linear("fut_encoder", config_.joint_width(), d, rng);
  step_proj_ = nn::Linear("step_embedding", d, d, rng);
  positional_.name = "positional_embedding";
  positional_.value.resize(config_.tokens(), d);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (Eigen::Index i = 0; i < positional_.value.size(); ++i) {
    positional_.value.data()[i] = normal(rng);
  }
  positional_.zero_grad();
  for (int l = 0; l < config_.n_layers; ++l) {
    blocks_.emplace_back("trunk." + std::to_string(l), d, config_.n_heads, config_.d_ff, rng);
  }
  final_ln_ = nn::LayerNorm("trunk.final_ln", d);
  joint_head_ = nn::Linear("joint_decoder", d, config_.joint_width(), rng);
  vis_head_ = nn::Linear("vis_decoder", d, 2, rng);
}

Eigen::RowVectorXd DenoiserModel::encode_obs(const Points& x_n_t,
                                             const Eigen::Matrix<double, 9, 1>& c_cam,
                                             const Vec2& c_left, const Vec2& c_right,
                                             const Eigen::VectorXd& c_img) const {
  if (x_n_t.rows() != config_.J || c_img.size() != config_.d_img) {
    throw ContractError("encode_obs: input shape does not match the denoiser config");
  }
  Eigen::RowVectorXd in(config_.joint_width() + config_.condition_width());
  for (int j = 0; j < config_.J; ++j) in.segment<3>(3 * j) = x_n_t.row(j);
  in.tail(config_.condition_width()) = pack_condition(c_cam, c_left, c_right, c_img);
  return obs_out_.forward(nn::gelu(obs_in_.forward(in)));
}

Eigen::RowVectorXd DenoiserModel::encode_fut(const Points& x_n_t) const {
  if (x_n_t.rows() != config_.J) {
    throw ContractError("encode_fut: input shape does not match the denoiser config");
  }
  Eigen::RowVectorXd in(config_.joint_width());
  for (int j = 0; j < config_.J; ++j) in.segment<3>(3 * j) = x_n_t.row(j);
  return fut_in_.forward(in);
}

Eigen::MatrixXd DenoiserModel::step_embeddings(const std::vector<int>& steps) const {
  Eigen::MatrixXd e(static_cast<Eigen::Index>(steps.size()), config_.d_z);
  for (std::size_t b = 0; b < steps.size(); ++b) {
    e.row(static_cast<Eigen::Index>(b)) = nn::sinusoidal_embedding(steps[b], config_.d_z);
  }
  return e;
}

DenoiserOutput DenoiserModel::forward(const DenoiserInput& input, DenoiserCache* cache) const {
  const int B = input.batch;
  const int T = config_.T;
  const int F = config_.F;
  const int L = config_.tokens();
  const int W = config_.joint_width();
  if (B <= 0) throw ContractError("denoiser batch must be positive");
  if (input.x_n.rows() != B * L || input.x_n.cols() != W) {
    throw ContractError("denoiser x_n must be (batch*(T+F)) x 3J");
  }
  if (input.conditions.rows() != B * T) {
    throw ContractError("denoiser conditions must cover exactly the T observation frames");
  }
  if (input.conditions.cols() != config_.condition_width()) {
    throw ContractError("denoiser condition width does not match d_img");
  }
  if (static_cast<int>(input.steps.size()) != B) {
    throw ContractError("denoiser needs one diffusion step per sample");
  }
  for (int n : input.steps) {
    if (n < 1 || n > config_.N) throw ContractError("denoiser step outside [1, N]");
  }

  Eigen::MatrixXd obs_input(B * T, W + config_.condition_width());
  Eigen::MatrixXd fut_input(B * F, W);
  for (int b = 0; b < B; ++b) {
    obs_input.block(b * T, 0, T, W) = input.x_n.middleRows(b * L, T);
    obs_input.block(b * T, W, T, config_.condition_width()) = input.conditions.middleRows(b * T, T);
    fut_input.middleRows(b * F, F) = input.x_n.middleRows(b * L + T, F);
  }
  Eigen::MatrixXd obs_pre = obs_in_.forward(obs_input);
  Eigen::MatrixXd obs_hidden = nn::gelu(obs_pre);
  const Eigen::MatrixXd z_obs = obs_out_.forward(obs_hidden);
  const Eigen::MatrixXd z_fut = fut_in_.forward(fut_input);
  Eigen::MatrixXd step_sin = step_embeddings(input.steps);
  const Eigen::MatrixXd step_tok = step_proj_.forward(step_sin);

  Eigen::MatrixXd z(B * L, config_.d_z);
  for (int b = 0; b < B; ++b) {
    z.middleRows(b * L, T) = z_obs.middleRows(b * T, T);
    z.middleRows(b * L + T, F) = z_fut.middleRows(b * F, F);
    z.middleRows(b * L, L).rowwise() += step_tok.row(b);
    z.middleRows(b * L, L) += positional_.value;
  }

  if (cache) cache->blocks.resize(blocks_.size());
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    z = blocks_[l].forward(z, B, L, cache ? &cache->blocks[l] : nullptr);
  }
  nn::LayerNormCache final_cache;
  Eigen::MatrixXd trunk = final_ln_.forward(z, cache ? &final_cache : nullptr);

  DenoiserOutput out;
  out.x0_hat = joint_head_.forward(trunk);
  Eigen::MatrixXd obs_trunk(B * T, config_.d_z);
  for (int b = 0; b < B; ++b) obs_trunk.middleRows(b * T, T) = trunk.middleRows(b * L, T);
  out.vis_logits = vis_head_.forward(obs_trunk);
  out.vis = out.vis_logits.unaryExpr([](double v) { return nn::sigmoid(v); });

  if (cache) {
    cache->batch = B;
    cache->obs_input = std::move(obs_input);
    cache->obs_hidden_pre = std::move(obs_pre);
    cache->obs_hidden = std::move(obs_hidden);
    cache->fut_input = std::move(fut_input);
    cache->step_embedding = std::move(step_sin);
    cache->final_ln = std::move(final_cache);
    cache->trunk = std::move(trunk);
    cache->obs_trunk = std::move(obs_trunk);
  }
  return out;
}

void DenoiserModel::backward(const DenoiserCache& cache, const Tensor& d_x0_hat,
                             const Eigen::MatrixXd& d_vis_logits) {
  const int B = cache.batch;
  const int T = config_.T;
  const int F = config_.F;
  const int L = config_.tokens();
  Eigen::MatrixXd dtrunk = joint_head_.backward(cache.trunk, d_x0_hat);
  const Eigen::MatrixXd dobs_trunk = vis_head_.backward(cache.obs_trunk, d_vis_logits);
  for (int b = 0; b < B; ++b) dtrunk.middleRows(b * L, T) += dobs_trunk.middleRows(b * T, T);

  Eigen::MatrixXd dz = final_ln_.backward(cache.final_ln, dtrunk);
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    dz = blocks_[l].backward(cache.blocks[l], B, L, dz);
  }

  Eigen::MatrixXd dstep(B, config_.d_z);
  Eigen::MatrixXd dz_obs(B * T, config_.d_z);
  Eigen::MatrixXd dz_fut(B * F, config_.d_z);
  for (int b = 0; b < B; ++b) {
    const auto rows = dz.middleRows(b * L, L);
    positional_.grad += rows;
    dstep.row(b) = rows.colwise().sum();
    dz_obs.middleRows(b * T, T) = rows.topRows(T);
    dz_fut.middleRows(b * F, F) = rows.bottomRows(F);
  }
  step_proj_.backward_params(cache.step_embedding, dstep);
  fut_in_.backward_params(cache.fut_input, dz_fut);
  const Eigen::MatrixXd dhidden = obs_out_.backward(cache.obs_hidden, dz_obs);
  obs_in_.backward_params(cache.obs_input, nn::gelu_backward(cache.obs_hidden_pre, dhidden));
}

void DenoiserModel::zero_grad() {
  for_each_param([](nn::Param& p) { p.zero_grad(); });
}

std::size_t DenoiserModel::parameter_count() {
  std::size_t n = 0;
  for_each_param([&](nn::Param& p) { n += static_cast<std::size_t>(p.value.size()); });
  return n;
}

std::vector<nn::Param*> DenoiserModel::parameters() {
  std::vector<nn::Param*> out;
  for_each_param([&](nn::Param& p) { out.push_back(&p); });
  return out;
}

Checkpoint make_checkpoint(DenoiserModel& model, std::vector<NamedTensor> extras,
                           std::string metadata) {
  Checkpoint c;
  c.config = model.config();
  model.for_each_param([&](nn::Param& p) { c.weights.push_back({p.name, p.value}); });
  c.extras = std::move(extras);
  c.metadata = std::move(metadata);
  return c;
}

DenoiserModel model_from_checkpoint(const Checkpoint& ckpt) {
  DenoiserModel model(ckpt.config, 0);
  std::map<std::string, const Eigen::MatrixXd*> by_name;
  for (const auto& t : ckpt.weights) by_name[t.name] = &t.value;
  std::size_t used = 0;
  model.for_each_param([&](nn::Param& p) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IoError("checkpoint is missing tensor '" + p.name + "'");
    if (it->second->rows() != p.value.rows() || it->second->cols() != p.value.cols()) {
      throw IoError("checkpoint tensor '" + p.name + "' has the wrong shape");
    }
    p.value = *it->second;
    p.zero_grad();
    ++used;
  });
  if (used != ckpt.weights.size()) throw IoError("checkpoint contains unknown tensors");
  return model;
}

namespace {

constexpr char kMagic[8] = {'H', 'C', 'C', 'K', 'P', 'T', '\0', '\0'};

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_u64(in);
  if (n > (1ull << 32)) throw IoError("corrupt checkpoint string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IoError("truncated checkpoint");
  return s;
}

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& ts) {
  write_u64(out, ts.size());
  for (const auto& t : ts) {
    write_string(out, t.name);
    write_u64(out, static_cast<std::uint64_t>(t.value.rows()));
    write_u64(out, static_cast<std::uint64_t>(t.value.cols()));
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  const auto n = read_u64(in);
  std::vector<NamedTensor> ts;
  for (std::uint64_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = read_string(in);
    const auto rows = read_u64(in);
    const auto cols = read_u64(in);
    if (rows * cols > (1ull << 31)) throw IoError("corrupt checkpoint tensor shape");
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint");
    ts.push_back(std::move(t));
  }
  return ts;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  write_string(out, ckpt.config.to_json());
  write_tensors(out, ckpt.weights);
  write_tensors(out, ckpt.extras);
  write_string(out, ckpt.metadata);
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.config = DenoiserConfig::from_json(read_string(in));
  c.weights = read_tensors(in);
  c.extras = read_tensors(in);
  c.metadata = read_string(in);
  return c;
}

}  // namespace handcast
