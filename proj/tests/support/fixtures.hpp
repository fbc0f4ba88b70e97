#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "handcast/data.hpp"
#include "handcast/denoiser.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace handcast;

// Random canonical sequence; hand visibility follows the in_view predicate
// of the wrist so that the 2D conditions are consistent with the 3D joints.
inline Sequence random_sequence(int T, int F, const JointLayout& layout, int d_img,
                                std::uint64_t seed, bool mask_some = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Sequence s;
  s.id = "fx_" + std::to_string(seed);
  s.activity = "random";
  s.intrinsics = {100.0, 100.0, 50.0, 50.0};
  s.image_size = {100, 100};
  const int J = layout.joints();
  for (int t = 0; t < T; ++t) {
    CameraPose p;
    // Look roughly forward along +x with some jitter.
    Mat3 base;
    base << 0, 0, 1, -1, 0, 0, 0, -1, 0;
    const Mat3 jitter = Eigen::AngleAxisd(0.2 * u(rng), Vec3(u(rng), u(rng), u(rng)).normalized()).toRotationMatrix();
    p.rotation = matrix_to_rotation_6d(jitter * base);
    p.translation = Vec3(0.1 * u(rng), 0.1 * u(rng), 1.5 + 0.05 * u(rng));
    p.intrinsics = s.intrinsics;
    p.image_size = s.image_size;
    s.obs_poses.push_back(p);
    Eigen::VectorXd f(d_img);
    for (int k = 0; k < d_img; ++k) f[k] = u(rng);
    s.obs_features.push_back(f);
  }
  for (int t = 0; t < T + F; ++t) {
    JointFrame jf;
    jf.joints = Points(J, 3);
    jf.mask.assign(static_cast<std::size_t>(J), true);
    for (int j = 0; j < J; ++j) {
      jf.joints.row(j) << 0.6 + 0.4 * u(rng), 0.4 * u(rng), 1.1 + 0.4 * u(rng);
      if (mask_some && unit(rng) < 0.2) jf.mask[static_cast<std::size_t>(j)] = false;
    }
    jf.zero_masked();
    (t < T ? s.obs_joints : s.fut_joints).push_back(jf);
  }
  for (int t = 0; t < T; ++t) {
    HandObservation2D h;
    for (Side side : kSides) {
      const Vec3 w = s.obs_joints[static_cast<std::size_t>(t)].joints.row(layout.wrist(side)).transpose();
      const CameraPose& cam = s.obs_poses[static_cast<std::size_t>(t)];
      if (in_view(cam, w) && unit(rng) < 0.8) {
        const Projection pr = project_point(cam, w);
        h.set(side, normalize_2d({pr.u, pr.v}, cam.image_size, true), true);
      }
    }
    s.obs_hands2d.push_back(h);
  }
  return canonicalize(s);
}

inline DenoiserConfig tiny_config() {
  DenoiserConfig c;
  c.T = 3;
  c.F = 2;
  c.J = 6;
  c.n_hand = 2;
  c.d_z = 16;
  c.n_layers = 1;
  c.n_heads = 1;
  c.d_ff = 32;
  c.d_img = 4;
  c.N = 10;
  c.schedule = ScheduleKind::kScaledLinear;
  return c;
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("handcast_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& s) const { return path / s; }
};

}  // namespace fixture
