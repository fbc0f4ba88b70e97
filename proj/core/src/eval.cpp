#include "handcast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "handcast/diffusion.hpp"
#include "handcast/errors.hpp"

namespace handcast {

namespace {

void check_pair(const Trajectory& pred, const Trajectory& gt) {
  if (pred.rows() != gt.rows()) {
    throw ContractError("trajectory length mismatch: " + std::to_string(pred.rows()) + " vs " +
                        std::to_string(gt.rows()));
  }
  if (gt.rows() < 1) throw ContractError("empty trajectory");
}

void check_frames(const std::vector<Points>& pred, const std::vector<Points>& gt,
                  const FrameMask& mask) {
  if (pred.size() != gt.size()) throw ContractError("frame count mismatch");
  if (gt.empty()) throw ContractError("no frames");
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (pred[t].rows() != gt[t].rows()) throw ContractError("joint count mismatch");
    if (!mask.empty() && mask[t].size() != static_cast<std::size_t>(gt[t].rows())) {
      throw ContractError("mask size mismatch");
    }
  }
  if (!mask.empty() && mask.size() != gt.size()) throw ContractError("mask frame count mismatch");
}

bool annotated(const FrameMask& mask, std::size_t t, Eigen::Index j) {
  return mask.empty() || mask[t][static_cast<std::size_t>(j)];
}

std::optional<double> frame_range_mpjpe(const std::vector<Points>& pred,
                                        const std::vector<Points>& gt, const FrameMask& mask,
                                        std::size_t first) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = first; t < gt.size(); ++t) {
    for (Eigen::Index j = 0; j < gt[t].rows(); ++j) {
      if (!annotated(mask, t, j)) continue;
      sum += (pred[t].row(j) - gt[t].row(j)).norm();
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

Points block(const Points& joints, int begin, int count) { return joints.middleRows(begin, count); }

std::vector<bool> block_mask(const std::vector<bool>& mask, int begin, int count) {
  return {mask.begin() + begin, mask.begin() + begin + count};
}

void check_forecast(const Sequence& seq, const Forecast& f) {
  const auto L = static_cast<std::size_t>(seq.T() + seq.F());
  if (f.joints.size() != L) {
    throw ContractError("forecast for '" + seq.id + "' has " + std::to_string(f.joints.size()) +
                        " frames, expected " + std::to_string(L));
  }
  for (const auto& p : f.joints) {
    if (p.rows() != seq.J()) throw ContractError("forecast for '" + seq.id + "' has wrong J");
  }
}

void check_compatible(const DenoiserConfig& cfg, const Sequence& seq) {
  auto mismatch = [&](const char* field, long want, long got) {
    if (want != got) {
      throw ConfigError(std::string(field) + " mismatch: checkpoint has " + std::to_string(want) +
                        ", data record '" + seq.id + "' has " + std::to_string(got));
    }
  };
  mismatch("T", cfg.T, seq.T());
  mismatch("F", cfg.F, seq.F());
  mismatch("J", cfg.J, seq.J());
  const long d_img = seq.obs_features.empty() ? 0 : static_cast<long>(seq.obs_features.front().size());
  mismatch("d_img", cfg.d_img, d_img);
}

}  // namespace

double ade(const Trajectory& pred, const Trajectory& gt) {
  check_pair(pred, gt);
  return (pred - gt).rowwise().norm().mean();
}

double fde(const Trajectory& pred, const Trajectory& gt) {
  check_pair(pred, gt);
  const Eigen::Index last = gt.rows() - 1;
  return (pred.row(last) - gt.row(last)).norm();
}

std::optional<double> mpjpe(const std::vector<Points>& pred, const std::vector<Points>& gt,
                            const FrameMask& mask) {
  check_frames(pred, gt, mask);
  return frame_range_mpjpe(pred, gt, mask, 0);
}

std::optional<double> mpjpe_f(const std::vector<Points>& pred, const std::vector<Points>& gt,
                              const FrameMask& mask) {
  check_frames(pred, gt, mask);
  return frame_range_mpjpe(pred, gt, mask, gt.size() - 1);
}

std::optional<double> mpjve(const std::vector<Points>& pred, const std::vector<Points>& gt,
                            double fps, const FrameMask& mask) {
  if (gt.size() < 2 || pred.size() < 2) throw ContractError("mpjve needs at least 2 frames");
  check_frames(pred, gt, mask);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 1; t < gt.size(); ++t) {
    for (Eigen::Index j = 0; j < gt[t].rows(); ++j) {
      if (!annotated(mask, t, j) || !annotated(mask, t - 1, j)) continue;
      const Eigen::RowVector3d dv = (pred[t].row(j) - pred[t - 1].row(j)) -
                                    (gt[t].row(j) - gt[t - 1].row(j));
      sum += dv.norm() * fps;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> wrist_relative_mpjpe(const Points& pred_hand, const Points& gt_hand,
                                           const std::vector<bool>& mask) {
  if (pred_hand.rows() != gt_hand.rows() || gt_hand.rows() < 1) {
    throw ContractError("hand block shape mismatch");
  }
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(gt_hand.rows())) {
    throw ContractError("mask size mismatch");
  }
  if (!mask.empty() && !mask[0]) return std::nullopt;
  const Eigen::RowVector3d pw = pred_hand.row(0);
  const Eigen::RowVector3d gw = gt_hand.row(0);
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index j = 1; j < gt_hand.rows(); ++j) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(j)]) continue;
    sum += ((pred_hand.row(j) - pw) - (gt_hand.row(j) - gw)).norm();
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double oov_ratio(const Sequence& seq, Side side) {
  if (seq.T() == 0) return 0.0;
  int hidden = 0;
  for (const auto& h : seq.obs_hands2d) hidden += h.visible(side) ? 0 : 1;
  return static_cast<double>(hidden) / seq.T();
}

int bin_gamma(double gamma) {
  if (!(gamma > 0.0)) return -1;
  // Small slack so h/T values on a boundary (e.g. 4/20) land in the lower bin.
  const int bin = static_cast<int>(std::ceil(gamma * kGammaBins - 1e-9)) - 1;
  return std::clamp(bin, 0, kGammaBins - 1);
}

std::string gamma_bin_label(int bin) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "(%.1f, %.1f]", 0.2 * bin, 0.2 * (bin + 1));
  return buf;
}

Forecast baseline_static(const Sequence& seq, const DatasetStats& stats) {
  if (stats.mean_pose.rows() != seq.J()) throw ContractError("mean pose J mismatch");
  if (seq.T() < 1) throw ContractError("sequence has no observation frames");
  const CameraPose& cam = seq.obs_poses.back();
  const Mat3 Rz = yaw_matrix(yaw_of(cam.rotation_matrix()));
  const Vec3 head = stats.mean_pose.row(body::kNose).transpose();
  Points anchored(stats.mean_pose.rows(), 3);
  for (Eigen::Index j = 0; j < anchored.rows(); ++j) {
    const Vec3 p = stats.mean_pose.row(j).transpose();
    anchored.row(j) = (Rz * (p - head) + cam.translation).transpose();
  }
  Forecast f;
  f.joints.assign(static_cast<std::size_t>(seq.T() + seq.F()), anchored);
  return f;
}

Trajectory baseline_cvm(const Trajectory& past, int F) {
  if (past.rows() < 2) throw ContractError("constant velocity needs at least 2 past positions");
  if (F < 0) throw ContractError("negative horizon");
  const Eigen::RowVector3d last = past.row(past.rows() - 1);
  const Eigen::RowVector3d v = last - past.row(past.rows() - 2);
  Trajectory out(F, 3);
  for (int k = 0; k < F; ++k) out.row(k) = last + (k + 1) * v;
  return out;
}

Forecast baseline_cvm(const Sequence& seq) {
  const int T = seq.T();
  if (T < 2) throw ContractError("constant velocity needs at least 2 observation frames");
  Forecast f;
  for (int t = 0; t < T; ++t) f.joints.push_back(seq.obs_joints[static_cast<std::size_t>(t)].joints);
  const JointFrame& a = seq.obs_joints[static_cast<std::size_t>(T - 2)];
  const JointFrame& b = seq.obs_joints[static_cast<std::size_t>(T - 1)];
  for (int k = 1; k <= seq.F(); ++k) {
    Points p = Points::Zero(seq.J(), 3);
    for (int j = 0; j < seq.J(); ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (!b.mask[uj]) continue;
      Trajectory past(2, 3);
      past.row(0) = a.mask[uj] ? a.joints.row(j) : b.joints.row(j);
      past.row(1) = b.joints.row(j);
      p.row(j) = baseline_cvm(past, k).row(k - 1);
    }
    f.joints.push_back(std::move(p));
  }
  return f;
}

Forecast ground_truth_forecast(const Sequence& seq) {
  Forecast f;
  for (int t = 0; t < seq.T() + seq.F(); ++t) f.joints.push_back(seq.frame(t).joints);
  Eigen::MatrixXd vis(seq.T(), 2);
  for (int t = 0; t < seq.T(); ++t) {
    for (Side s : kSides) {
      vis(t, static_cast<int>(s)) = seq.obs_hands2d[static_cast<std::size_t>(t)].visible(s) ? 1.0 : 0.0;
    }
  }
  f.vis = std::move(vis);
  return f;
}

std::vector<Forecast> model_forecasts(const DenoiserModel& model, const std::vector<Sequence>& data,
                                      std::uint64_t seed, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  const DenoiserConfig& cfg = model.config();
  for (const auto& s : data) check_compatible(cfg, s);
  const DiffusionSchedule schedule = make_schedule(cfg.schedule, cfg.N);
  const int T = cfg.T;
  const int L = cfg.tokens();
  const int J = cfg.J;
  std::mt19937_64 rng(seed);
  std::vector<Forecast> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const int B = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                                                         data.size() - start));
    Eigen::MatrixXd cond(B * T, cfg.condition_width());
    for (int b = 0; b < B; ++b) {
      cond.middleRows(b * T, T) = sequence_conditions(data[start + static_cast<std::size_t>(b)]);
    }
    DenoiseFn fn = [&](const Tensor& x_n, int n) {
      DenoiserInput in{B, x_n, cond, std::vector<int>(static_cast<std::size_t>(B), n)};
      DenoiserOutput o = model.forward(in);
      return DenoiseOutput{std::move(o.x0_hat), std::move(o.vis)};
    };
    const Tensor init = gaussian_like(B * L, 3 * J, rng);
    const DenoiseOutput res = sample(fn, init, schedule, rng);
    for (int b = 0; b < B; ++b) {
      Forecast f;
      for (int t = 0; t < L; ++t) {
        Points p(J, 3);
        for (int j = 0; j < J; ++j) p.row(j) = res.x0_hat.row(b * L + t).segment<3>(3 * j);
        f.joints.push_back(std::move(p));
      }
      f.vis = res.vis.middleRows(b * T, T);
      out.push_back(std::move(f));
    }
  }
  return out;
}

void MetricCell::merge(const MetricCell& o) {
  pairs += o.pairs;
  ade.merge(o.ade);
  fde.merge(o.fde);
  mpjpe.merge(o.mpjpe);
  mpjpe_f.merge(o.mpjpe_f);
  mpjve.merge(o.mpjve);
}

const char* partition_name(Partition p) {
  switch (p) {
    case Partition::kInView: return "in_view";
    case Partition::kOutOfView: return "out_of_view";
    case Partition::kAll: return "all";
  }
  return "unknown";
}

MethodReport evaluate(const std::string& method, const std::vector<Sequence>& data,
                      const std::vector<Forecast>& forecasts, const EvalOptions& opt) {
  if (forecasts.size() != data.size()) {
    throw ContractError("got " + std::to_string(forecasts.size()) + " forecasts for " +
                        std::to_string(data.size()) + " sequences");
  }
  MethodReport rep;
  rep.method = method;
  const int F = data.empty() ? 0 : data.front().F();
  rep.ade_per_timestep.resize(static_cast<std::size_t>(F));

  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sequence& seq = data[i];
    const Forecast& fc = forecasts[i];
    check_forecast(seq, fc);
    if (seq.F() != F) throw ContractError("inconsistent F across sequences");
    const int T = seq.T();
    const JointLayout& layout = opt.layout;
    if (layout.joints() != seq.J()) {
      throw ContractError("record '" + seq.id + "' has J=" + std::to_string(seq.J()) +
                          ", layout expects " + std::to_string(layout.joints()));
    }
    const int n_hand = layout.n_hand;

    for (Side side : kSides) {
      const int w = layout.wrist(side);
      MetricCell c;
      c.pairs = 1;
      std::vector<Eigen::RowVector3d> pw, gw;
      for (int k = 0; k < F; ++k) {
        const auto& g = seq.fut_joints[static_cast<std::size_t>(k)];
        if (!g.mask[static_cast<std::size_t>(w)]) continue;
        pw.push_back(fc.joints[static_cast<std::size_t>(T + k)].row(w));
        gw.push_back(g.joints.row(w));
        const double d = (pw.back() - gw.back()).norm();
        rep.ade_per_timestep[static_cast<std::size_t>(k)].add(d);
      }
      if (!pw.empty()) {
        Trajectory p(static_cast<Eigen::Index>(pw.size()), 3), g(p.rows(), 3);
        for (std::size_t r = 0; r < pw.size(); ++r) {
          p.row(static_cast<Eigen::Index>(r)) = pw[r];
          g.row(static_cast<Eigen::Index>(r)) = gw[r];
        }
        c.ade.add(ade(p, g));
        if (seq.fut_joints.back().mask[static_cast<std::size_t>(w)]) c.fde.add(fde(p, g));
      }
      std::vector<Points> ph, gh;
      FrameMask mh;
      for (int k = 0; k < F; ++k) {
        const auto& g = seq.fut_joints[static_cast<std::size_t>(k)];
        ph.push_back(block(fc.joints[static_cast<std::size_t>(T + k)], w, n_hand));
        gh.push_back(block(g.joints, w, n_hand));
        mh.push_back(block_mask(g.mask, w, n_hand));
      }
      if (F >= 1) {
        if (auto v = mpjpe(ph, gh, mh)) c.mpjpe.add(*v);
        if (auto v = mpjpe_f(ph, gh, mh)) c.mpjpe_f.add(*v);
      }
      if (F >= 2) {
        if (auto v = mpjve(ph, gh, opt.fps, mh)) c.mpjve.add(*v);
      }

      const bool in = side_in_view(seq, side);
      const auto part = static_cast<std::size_t>(in ? Partition::kInView : Partition::kOutOfView);
      const auto all = static_cast<std::size_t>(Partition::kAll);
      const auto sd = static_cast<std::size_t>(side);
      rep.cells[part][sd].merge(c);
      rep.cells[part][kPooled].merge(c);
      rep.cells[all][sd].merge(c);
      rep.cells[all][kPooled].merge(c);
      const int bin = bin_gamma(oov_ratio(seq, side));
      if (bin >= 0) rep.gamma[static_cast<std::size_t>(bin)].merge(c);

      if (in) {
        for (int t = 0; t < T; ++t) {
          const auto& g = seq.obs_joints[static_cast<std::size_t>(t)];
          if (auto v = wrist_relative_mpjpe(block(fc.joints[static_cast<std::size_t>(t)], w, n_hand),
                                            block(g.joints, w, n_hand),
                                            block_mask(g.mask, w, n_hand))) {
            rep.obs_wrist_relative.add(*v);
          }
        }
      }
      if (fc.vis.rows() == T && fc.vis.cols() == 2) {
        for (int t = 0; t < T; ++t) {
          const bool pred = fc.vis(t, static_cast<int>(side)) > 0.5;
          rep.vis_accuracy.add(pred == seq.obs_hands2d[static_cast<std::size_t>(t)].visible(side) ? 1.0 : 0.0);
        }
      }
    }

    if (F >= 1 && layout.n_body > 0) {
      std::vector<Points> pb, gb;
      FrameMask mb;
      for (int k = 0; k < F; ++k) {
        const auto& g = seq.fut_joints[static_cast<std::size_t>(k)];
        pb.push_back(block(fc.joints[static_cast<std::size_t>(T + k)], 0, layout.n_body));
        gb.push_back(block(g.joints, 0, layout.n_body));
        mb.push_back(block_mask(g.mask, 0, layout.n_body));
      }
      if (auto v = mpjpe(pb, gb, mb)) rep.body_mpjpe.add(*v);
    }
  }
  return rep;
}

namespace {

using json = nlohmann::ordered_json;

json mean_json(const Mean& m) {
  return m.count ? json(m.value()) : json(nullptr);
}

json cell_json(const MetricCell& c) {
  json j;
  j["pairs"] = c.pairs;
  for (auto [name, m] : {std::pair{"ade", &c.ade}, {"fde", &c.fde}, {"mpjpe", &c.mpjpe},
                         {"mpjpe_f", &c.mpjpe_f}, {"mpjve", &c.mpjve}}) {
    j[name] = mean_json(*m);
    j[std::string(name) + "_count"] = m->count;
  }
  return j;
}

std::string fmt(const Mean& m, int width = 9) {
  char buf[32];
  if (m.count == 0) {
    std::snprintf(buf, sizeof buf, "%*s", width, "-");
  } else {
    std::snprintf(buf, sizeof buf, "%*.4f", width, m.value());
  }
  return buf;
}

}  // namespace

std::string MetricsReport::to_json() const {
  json j;
  j["n_sequences"] = n_sequences;
  j["T"] = T;
  j["F"] = F;
  j["fps"] = fps;
  j["seed"] = seed;
  json methods_json = json::array();
  for (const auto& m : methods) {
    json mj;
    mj["method"] = m.method;
    mj["oracle_privileged"] = m.oracle_privileged;
    json cells;
    for (Partition p : {Partition::kInView, Partition::kOutOfView, Partition::kAll}) {
      json pj;
      pj["left"] = cell_json(m.cell(p, 0));
      pj["right"] = cell_json(m.cell(p, 1));
      pj["pooled"] = cell_json(m.cell(p, kPooled));
      cells[partition_name(p)] = std::move(pj);
    }
    mj["cells"] = std::move(cells);
    json gamma = json::array();
    for (int b = 0; b < kGammaBins; ++b) {
      json gj = cell_json(m.gamma[static_cast<std::size_t>(b)]);
      gj["interval"] = gamma_bin_label(b);
      gamma.push_back(std::move(gj));
    }
    mj["gamma"] = std::move(gamma);
    json per_t = json::array();
    for (const auto& v : m.ade_per_timestep) per_t.push_back(mean_json(v));
    mj["ade_per_timestep"] = std::move(per_t);
    mj["body_mpjpe"] = mean_json(m.body_mpjpe);
    mj["obs_wrist_relative_mpjpe"] = mean_json(m.obs_wrist_relative);
    mj["vis_accuracy"] = mean_json(m.vis_accuracy);
    mj["vis_count"] = m.vis_accuracy.count;
    methods_json.push_back(std::move(mj));
  }
  j["methods"] = std::move(methods_json);
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  char line[256];
  os << "sequences " << n_sequences << ", T " << T << ", F " << F << ", fps " << fps << "\n\n";
  std::snprintf(line, sizeof line, "%-10s %-12s %-7s %6s %9s %9s %9s %9s %9s\n", "method",
                "partition", "side", "pairs", "ADE", "FDE", "MPJPE", "MPJPE-F", "MPJVE");
  os << line;
  static const char* sides[] = {"left", "right", "pooled"};
  for (const auto& m : methods) {
    for (Partition p : {Partition::kInView, Partition::kOutOfView, Partition::kAll}) {
      for (int s = 0; s < 3; ++s) {
        const MetricCell& c = m.cell(p, s);
        std::snprintf(line, sizeof line, "%-10s %-12s %-7s %6zu %s %s %s %s %s\n", m.method.c_str(),
                      partition_name(p), sides[s], c.pairs, fmt(c.ade).c_str(), fmt(c.fde).c_str(),
                      fmt(c.mpjpe).c_str(), fmt(c.mpjpe_f).c_str(), fmt(c.mpjve).c_str());
        os << line;
      }
    }
  }
  os << "\nout-of-view ratio bins (ADE / FDE, both hands)\n";
  std::snprintf(line, sizeof line, "%-10s", "method");
  os << line;
  for (int b = 0; b < kGammaBins; ++b) {
    std::snprintf(line, sizeof line, " %19s", gamma_bin_label(b).c_str());
    os << line;
  }
  os << "\n";
  for (const auto& m : methods) {
    std::snprintf(line, sizeof line, "%-10s", m.method.c_str());
    os << line;
    for (const auto& c : m.gamma) os << " " << fmt(c.ade) << " " << fmt(c.fde);
    os << "\n";
  }
  os << "\n";
  for (const auto& m : methods) {
    os << m.method << ": body MPJPE" << fmt(m.body_mpjpe) << ", observed wrist-relative MPJPE"
       << fmt(m.obs_wrist_relative) << ", visibility accuracy" << fmt(m.vis_accuracy)
       << (m.oracle_privileged ? "  (reads ground-truth observed joints)" : "") << "\n";
  }
  return os.str();
}

}  // namespace handcast
