#include "handcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "handcast/errors.hpp"

namespace handcast {

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(lambda_vis >= 0.0) || !(lambda_reproj >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["iterations"] = iterations;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["lambda_vis"] = lambda_vis;
  j["lambda_reproj"] = lambda_reproj;
  j["seed"] = seed;
  j["grad_clip"] = grad_clip;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_eps"] = adam_eps;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TrainConfig c;
    c.iterations = j.at("iterations").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lambda_vis = j.at("lambda_vis").get<double>();
    c.lambda_reproj = j.at("lambda_reproj").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.grad_clip = j.at("grad_clip").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid train config: ") + e.what());
  }
}

JointLossValue joint_loss(const Tensor& x0_hat, const Tensor& x0, const JointMask& mask,
                          bool with_grad) {
  if (x0_hat.rows() != x0.rows() || x0_hat.cols() != x0.cols() || mask.rows() != x0.rows() ||
      3 * mask.cols() != x0.cols()) {
    throw ContractError("joint_loss: shape mismatch");
  }
  JointLossValue out;
  double sum = 0.0;
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (!mask(r, j)) continue;
      for (int k = 0; k < 3; ++k) sum += std::abs(x0_hat(r, 3 * j + k) - x0(r, 3 * j + k));
      out.count += 3;
    }
  }
  if (with_grad) out.grad = Eigen::MatrixXd::Zero(x0.rows(), x0.cols());
  if (out.count == 0) {
    out.empty_mask = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(out.count);
  out.value = sum * inv;
  if (with_grad) {
    for (Eigen::Index r = 0; r < mask.rows(); ++r) {
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        if (!mask(r, j)) continue;
        for (int k = 0; k < 3; ++k) {
          const double d = x0_hat(r, 3 * j + k) - x0(r, 3 * j + k);
          out.grad(r, 3 * j + k) = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
        }
      }
    }
  }
  return out;
}

double visibility_loss(const Eigen::MatrixXd& v_hat, const JointMask& v) {
  if (v_hat.rows() != v.rows() || v_hat.cols() != v.cols() || v.size() == 0) {
    throw ContractError("visibility_loss: shape mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v_hat.size(); ++i) {
    const double p = v_hat.data()[i];
    if (!(p > 0.0 && p < 1.0)) throw ContractError("visibility probability outside (0,1)");
    sum -= v.data()[i] ? std::log(p) : std::log1p(-p);
  }
  return sum / static_cast<double>(v_hat.size());
}

LossValue visibility_loss_from_logits(const Eigen::MatrixXd& logits, const JointMask& v,
                                      bool with_grad) {
  if (logits.rows() != v.rows() || logits.cols() != v.cols() || v.size() == 0) {
    throw ContractError("visibility_loss: shape mismatch");
  }
  const double inv = 1.0 / static_cast<double>(logits.size());
  LossValue out;
  if (with_grad) out.grad.resize(logits.rows(), logits.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double l = logits.data()[i];
    const double y = v.data()[i] ? 1.0 : 0.0;
    // -[y log s(l) + (1-y) log(1-s(l))] = softplus(l) - y l
    const double softplus = l > 0.0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
    sum += softplus - y * l;
    if (with_grad) out.grad.data()[i] = (nn::sigmoid(l) - y) * inv;
  }
  out.value = sum * inv;
  return out;
}

ReprojectionValue reprojection_loss(const Tensor& x0_hat,
                                    const std::vector<HandObservation2D>& hands2d,
                                    const std::vector<CameraPose>& poses, const JointLayout& layout,
                                    bool with_grad) {
  const auto T = static_cast<Eigen::Index>(hands2d.size());
  if (poses.size() != hands2d.size() || x0_hat.rows() < T ||
      x0_hat.cols() != 3 * layout.joints()) {
    throw ContractError("reprojection_loss: shape mismatch");
  }
  ReprojectionValue out;
  if (with_grad) out.grad = Eigen::MatrixXd::Zero(x0_hat.rows(), x0_hat.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& h = hands2d[static_cast<std::size_t>(t)];
    const auto& pose = poses[static_cast<std::size_t>(t)];
    const Mat3 R = pose.rotation_matrix();
    for (Side side : kSides) {
      if (!h.visible(side)) continue;
      const int col = 3 * layout.wrist(side);
      const Vec3 x = x0_hat.row(t).segment<3>(col).transpose();
      const Vec3 xc = R.transpose() * (x - pose.translation);
      if (xc.z() < kMinReprojectionDepth) {
        ++out.skipped;
        continue;
      }
      const double w = pose.image_size.width;
      const double hgt = pose.image_size.height;
      const auto& K = pose.intrinsics;
      const Vec2 proj((K.fx * xc.x() / xc.z() + K.cx) / w, (K.fy * xc.y() / xc.z() + K.cy) / hgt);
      const Vec2 diff = proj - h.location(side);
      out.value += diff.cwiseAbs().sum();
      if (with_grad) {
        const double sx = diff.x() > 0.0 ? 1.0 : (diff.x() < 0.0 ? -1.0 : 0.0);
        const double sy = diff.y() > 0.0 ? 1.0 : (diff.y() < 0.0 ? -1.0 : 0.0);
        const double iz = 1.0 / xc.z();
        Vec3 dxc;
        dxc.x() = sx * K.fx / w * iz;
        dxc.y() = sy * K.fy / hgt * iz;
        dxc.z() = -(sx * K.fx / w * xc.x() + sy * K.fy / hgt * xc.y()) * iz * iz;
        out.grad.row(t).segment<3>(col) += (R * dxc).transpose();
      }
    }
  }
  return out;
}

double total_loss(const LossParts& parts, double lambda_vis, double lambda_reproj) {
  if (!std::isfinite(parts.joint)) throw TrainingAbort("non-finite L_joint");
  if (!std::isfinite(parts.vis)) throw TrainingAbort("non-finite L_vis");
  if (!std::isfinite(parts.reproj)) throw TrainingAbort("non-finite L_reproj");
  return parts.joint + lambda_vis * parts.vis + lambda_reproj * parts.reproj;
}

Tensor joints_tensor(const Sequence& seq) {
  const int L = seq.T() + seq.F();
  const int J = seq.J();
  Tensor x(L, 3 * J);
  for (int t = 0; t < L; ++t) {
    const auto& f = seq.frame(t);
    for (int j = 0; j < J; ++j) x.row(t).segment<3>(3 * j) = f.joints.row(j);
  }
  return x;
}

JointMask joints_mask(const Sequence& seq) {
  const int L = seq.T() + seq.F();
  const int J = seq.J();
  JointMask m(L, J);
  for (int t = 0; t < L; ++t) {
    const auto& f = seq.frame(t);
    for (int j = 0; j < J; ++j) m(t, j) = f.mask[static_cast<std::size_t>(j)];
  }
  return m;
}

JointMask visibility_targets(const Sequence& seq) {
  JointMask v(seq.T(), 2);
  for (int t = 0; t < seq.T(); ++t) {
    const auto& h = seq.obs_hands2d[static_cast<std::size_t>(t)];
    v(t, 0) = h.left_visible;
    v(t, 1) = h.right_visible;
  }
  return v;
}

TrainingBatch make_batch(const std::vector<const Sequence*>& seqs) {
  if (seqs.empty()) throw ContractError("empty training batch");
  const Sequence& first = *seqs.front();
  const int T = first.T();
  const int L = T + first.F();
  const int J = first.J();
  const auto B = static_cast<int>(seqs.size());
  const Eigen::MatrixXd c0 = sequence_conditions(first);
  TrainingBatch batch;
  batch.sequences = seqs;
  batch.x0.resize(B * L, 3 * J);
  batch.mask.resize(B * L, J);
  batch.conditions.resize(B * T, c0.cols());
  batch.visibility.resize(B * T, 2);
  for (int b = 0; b < B; ++b) {
    const Sequence& s = *seqs[static_cast<std::size_t>(b)];
    if (s.T() != T || s.T() + s.F() != L || s.J() != J) {
      throw ContractError("sequences in a batch must share T, F and J");
    }
    const Eigen::MatrixXd c = sequence_conditions(s);
    if (c.cols() != c0.cols()) throw ContractError("sequences in a batch must share d_img");
    batch.x0.middleRows(b * L, L) = joints_tensor(s);
    batch.mask.middleRows(b * L, L) = joints_mask(s);
    batch.conditions.middleRows(b * T, T) = c;
    batch.visibility.middleRows(b * T, T) = visibility_targets(s);
  }
  return batch;
}

LossParts evaluate_losses(DenoiserModel& model, const TrainingBatch& batch, const Tensor& x_n,
                          const std::vector<int>& steps, const TrainConfig& cfg, bool backward,
                          LossDiagnostics* diag) {
  const auto& mc = model.config();
  const int B = batch.size();
  const int L = mc.tokens();
  DenoiserInput input{B, x_n, batch.conditions, steps};
  DenoiserCache cache;
  const DenoiserOutput out = model.forward(input, backward ? &cache : nullptr);

  const JointLossValue lj = joint_loss(out.x0_hat, batch.x0, batch.mask, backward);
  const LossValue lv = visibility_loss_from_logits(out.vis_logits, batch.visibility, backward);
  LossParts parts;
  parts.joint = lj.value;
  parts.vis = lv.value;
  Eigen::MatrixXd d_reproj;
  if (backward) d_reproj = Eigen::MatrixXd::Zero(out.x0_hat.rows(), out.x0_hat.cols());
  std::size_t skipped = 0;
  const JointLayout layout = mc.layout();
  for (int b = 0; b < B; ++b) {
    const Sequence& s = *batch.sequences[static_cast<std::size_t>(b)];
    const ReprojectionValue r = reprojection_loss(out.x0_hat.middleRows(b * L, L), s.obs_hands2d,
                                                  s.obs_poses, layout, backward);
    parts.reproj += r.value / B;
    skipped += r.skipped;
    if (backward) d_reproj.middleRows(b * L, L) = r.grad / B;
  }
  parts.total = total_loss(parts, cfg.lambda_vis, cfg.lambda_reproj);
  if (diag) {
    diag->empty_mask = lj.empty_mask;
    diag->skipped_projections = skipped;
  }
  if (backward) {
    const Tensor d_x0 = lj.grad + cfg.lambda_reproj * d_reproj;
    model.backward(cache, d_x0, cfg.lambda_vis * lv.grad);
  }
  return parts;
}

Adam::Adam(DenoiserModel& model) {
  model.for_each_param([&](nn::Param& p) {
    m_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
  });
}

void Adam::step(DenoiserModel& model, const TrainConfig& cfg) {
  ++t_;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = cfg.learning_rate;
  const double eps = cfg.adam_eps;
  std::size_t i = 0;
  model.for_each_param([&](nn::Param& p) {
    auto& m = m_[i];
    auto& v = v_[i];
    m = b1 * m + (1.0 - b1) * p.grad;
    v = b2 * v + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    ++i;
  });
}

std::vector<NamedTensor> Adam::state(DenoiserModel& model) const {
  std::vector<NamedTensor> out;
  std::size_t i = 0;
  model.for_each_param([&](nn::Param& p) {
    out.push_back({"adam.m." + p.name, m_[i]});
    out.push_back({"adam.v." + p.name, v_[i]});
    ++i;
  });
  return out;
}

void Adam::restore(DenoiserModel& model, const std::vector<NamedTensor>& tensors, std::int64_t t) {
  std::map<std::string, const Eigen::MatrixXd*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.value;
  m_.clear();
  v_.clear();
  model.for_each_param([&](nn::Param& p) {
    auto m = by_name.find("adam.m." + p.name);
    auto v = by_name.find("adam.v." + p.name);
    if (m == by_name.end() || v == by_name.end()) {
      throw IoError("checkpoint lacks optimizer state for '" + p.name + "'");
    }
    m_.push_back(*m->second);
    v_.push_back(*v->second);
  });
  t_ = t;
}

StepResult train_step(DenoiserModel& model, Adam& optimizer, const TrainingBatch& batch,
                      const DiffusionSchedule& schedule, const TrainConfig& cfg,
                      std::mt19937_64& rng) {
  const int B = batch.size();
  const int L = model.config().tokens();
  std::uniform_int_distribution<int> step_dist(1, schedule.N);
  std::vector<int> steps(static_cast<std::size_t>(B));
  for (auto& n : steps) n = step_dist(rng);
  const Tensor eps = gaussian_like(batch.x0.rows(), batch.x0.cols(), rng);
  Tensor x_n(batch.x0.rows(), batch.x0.cols());
  for (int b = 0; b < B; ++b) {
    x_n.middleRows(b * L, L) = q_sample(batch.x0.middleRows(b * L, L),
                                        steps[static_cast<std::size_t>(b)],
                                        eps.middleRows(b * L, L), schedule);
  }

  model.zero_grad();
  StepResult result;
  result.parts = evaluate_losses(model, batch, x_n, steps, cfg, true, &result.diagnostics);

  double sq = 0.0;
  model.for_each_param([&](nn::Param& p) { sq += p.grad.squaredNorm(); });
  result.grad_norm = std::sqrt(sq);
  if (!std::isfinite(result.grad_norm)) {
    std::ostringstream msg;
    msg << "non-finite gradient (L_joint=" << result.parts.joint << ", L_vis=" << result.parts.vis
        << ", L_reproj=" << result.parts.reproj << ")";
    throw TrainingAbort(msg.str());
  }
  if (cfg.grad_clip > 0.0 && result.grad_norm > cfg.grad_clip) {
    const double scale = cfg.grad_clip / result.grad_norm;
    model.for_each_param([&](nn::Param& p) { p.grad *= scale; });
  }
  optimizer.step(model, cfg);
  return result;
}

namespace {

constexpr std::uint64_t kStreamSalt = 0x5eed5eed12345678ull;

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

}  // namespace

Trainer::Trainer(const DenoiserConfig& model_cfg, const TrainConfig& cfg,
                 const std::vector<Sequence>& dataset)
    : cfg_(cfg),
      dataset_(&dataset),
      model_(model_cfg, cfg.seed),
      adam_(model_),
      schedule_(make_schedule(model_cfg.schedule, model_cfg.N)),
      rng_(cfg.seed ^ kStreamSalt) {
  cfg_.validate();
  check_dataset();
}

Trainer::Trainer(const Checkpoint& ckpt, const TrainConfig& cfg,
                 const std::vector<Sequence>& dataset)
    : cfg_(cfg),
      dataset_(&dataset),
      model_(model_from_checkpoint(ckpt)),
      schedule_(make_schedule(ckpt.config.schedule, ckpt.config.N)) {
  cfg_.validate();
  check_dataset();
  try {
    const auto meta = nlohmann::json::parse(ckpt.metadata);
    iteration_ = meta.at("iteration").get<int>();
    empty_batches_ = meta.at("empty_batches").get<std::size_t>();
    std::istringstream rs(meta.at("rng").get<std::string>());
    rs >> rng_;
    adam_.restore(model_, ckpt.extras, meta.at("adam_step").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata cannot be resumed from: ") + e.what());
  }
}

void Trainer::check_dataset() const {
  if (dataset_->empty()) throw ContractError("training dataset is empty");
  const auto& mc = model_.config();
  for (const auto& s : *dataset_) {
    if (s.T() != mc.T || s.F() != mc.F || s.J() != mc.J) {
      throw ContractError("sequence '" + s.id + "' does not match the model's T/F/J");
    }
    if (!s.obs_features.empty() && s.obs_features.front().size() != mc.d_img) {
      throw ContractError("sequence '" + s.id + "' feature width differs from d_img");
    }
  }
}

TrainingBatch Trainer::next_batch() {
  const auto n = dataset_->size();
  std::vector<const Sequence*> picked;
  if (n <= static_cast<std::size_t>(cfg_.batch_size)) {
    for (const auto& s : *dataset_) picked.push_back(&s);
  } else {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < cfg_.batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), n - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[d(rng_)]);
      picked.push_back(&(*dataset_)[idx[static_cast<std::size_t>(i)]]);
    }
  }
  return make_batch(picked);
}

StepResult Trainer::step() {
  const TrainingBatch batch = next_batch();
  StepResult r = train_step(model_, adam_, batch, schedule_, cfg_, rng_);
  if (r.diagnostics.empty_mask) ++empty_batches_;
  ++iteration_;
  return r;
}

Checkpoint Trainer::checkpoint() {
  nlohmann::ordered_json meta;
  meta["iteration"] = iteration_;
  meta["empty_batches"] = empty_batches_;
  meta["adam_step"] = adam_.steps();
  meta["rng"] = rng_state(rng_);
  meta["train_config"] = nlohmann::json::parse(cfg_.to_json());
  return make_checkpoint(model_, adam_.state(model_), meta.dump());
}

Checkpoint train(const std::vector<Sequence>& dataset, const DenoiserConfig& model_cfg,
                 const TrainConfig& cfg, const TrainOptions& options) {
  if (dataset.empty()) throw ContractError("training dataset is empty");
  Trainer trainer = options.resume ? Trainer(*options.resume, cfg, dataset)
                                   : Trainer(model_cfg, cfg, dataset);
  std::ofstream log;
  const bool write_files = !options.out_dir.empty();
  if (write_files) {
    std::filesystem::create_directories(options.out_dir);
    const auto path = options.out_dir / "loss.csv";
    const bool append = options.resume != nullptr && std::filesystem::exists(path);
    log.open(path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write loss log: " + path.string());
    if (!append) log << kLossCsvHeader << '\n';
    log.precision(9);
  }
  while (trainer.iteration() < cfg.iterations) {
    const StepResult r = trainer.step();
    if (write_files) {
      log << trainer.iteration() << ',' << r.parts.joint << ',' << r.parts.vis << ','
          << r.parts.reproj << ',' << r.parts.total << '\n';
    }
    if (options.on_step) options.on_step(trainer.iteration(), r);
    if (write_files && options.checkpoint_every > 0 &&
        trainer.iteration() % options.checkpoint_every == 0 &&
        trainer.iteration() < cfg.iterations) {
      save_checkpoint(options.out_dir / ("checkpoint_" + std::to_string(trainer.iteration()) + ".bin"),
                      trainer.checkpoint());
    }
  }
  Checkpoint final_ckpt = trainer.checkpoint();
  if (write_files) save_checkpoint(options.out_dir / "checkpoint.bin", final_ckpt);
  return final_ckpt;
}

}  // namespace handcast
