#include "handcast/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "handcast/errors.hpp"

namespace handcast {

const char* archetype_name(Archetype a) {
  switch (a) {
    case Archetype::kReach: return "reach";
    case Archetype::kCarry: return "carry";
    case Archetype::kTurnAndReach: return "turn-and-reach";
    case Archetype::kIdleSway: return "idle-sway";
  }
  return "unknown";
}

FeatureMode parse_feature_mode(const std::string& name) {
  if (name == "zeros") return FeatureMode::kZeros;
  if (name == "scene-encoding") return FeatureMode::kSceneEncoding;
  throw ConfigError("unknown feature mode '" + name + "' (expected zeros or scene-encoding)");
}

std::string to_string(FeatureMode mode) {
  return mode == FeatureMode::kZeros ? "zeros" : "scene-encoding";
}

void GenConfig::validate() const {
  if (n_sequences < 1) throw ConfigError("n_sequences must be at least 1");
  if (T <= 0 || F <= 0) throw ConfigError("T and F must be positive");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  if (d_img < 0) throw ConfigError("d_img must be non-negative");
  double sum = 0.0;
  for (double p : motion_mix) {
    if (!(p >= 0.0)) throw ConfigError("motion_mix proportions must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("motion_mix proportions must sum to 1");
  if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) {
    throw ConfigError("focal lengths must be positive");
  }
  if (image_size.width <= 0 || image_size.height <= 0) {
    throw ConfigError("image size must be positive");
  }
}

namespace {

using std::numbers::pi;

struct FingerSpec {
  double along;
  double lateral;
  double normal;
  std::array<double, 3> lengths;
};

// Thumb, index, middle, ring, pinky. Lateral offsets are for the right
// hand; the left hand mirrors them.
constexpr std::array<FingerSpec, 5> kFingers{{
    {0.025, 0.035, 0.010, {0.035, 0.030, 0.025}},
    {0.085, 0.025, 0.0, {0.040, 0.025, 0.020}},
    {0.088, 0.008, 0.0, {0.045, 0.028, 0.022}},
    {0.084, -0.009, 0.0, {0.042, 0.026, 0.020}},
    {0.078, -0.025, 0.0, {0.033, 0.020, 0.018}},
}};
constexpr std::array<double, 3> kFlexProfile{0.6, 1.2, 1.6};

// Face points in the head frame (x right, y down, z forward).
const Vec3 kNoseOffset{0.0, 0.02, 0.11};
const Vec3 kLeftEyeOffset{-0.035, -0.01, 0.09};
const Vec3 kRightEyeOffset{0.035, -0.01, 0.09};
const Vec3 kLeftEarOffset{-0.075, 0.0, 0.0};
const Vec3 kRightEarOffset{0.075, 0.0, 0.0};

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

double ramp(double t, double start, double duration) { return min_jerk((t - start) / duration); }

Vec3 facing(double yaw) { return {std::cos(yaw), std::sin(yaw), 0.0}; }
Vec3 rightward(double yaw) { return {std::sin(yaw), -std::cos(yaw), 0.0}; }

// +1 for the right side, -1 for the left.
double side_sign(Side s) { return s == Side::kRight ? 1.0 : -1.0; }

double wrap_angle(double a) { return std::remainder(a, 2.0 * pi); }

Mat3 head_rotation(double yaw, double pitch) {
  const Vec3 f = facing(yaw);
  const Vec3 r = rightward(yaw);
  const Vec3 fwd = std::cos(pitch) * f - std::sin(pitch) * kWorldUp;
  const Vec3 down = -std::cos(pitch) * kWorldUp - std::sin(pitch) * f;
  Mat3 R;
  R.col(0) = r;
  R.col(1) = down;
  R.col(2) = fwd;
  return R;
}

// Two-bone inverse kinematics; the end point is clamped into the reachable
// shell so both segment lengths are exact.
std::pair<Vec3, Vec3> two_bone(const Vec3& root, const Vec3& target, double l1, double l2,
                               const Vec3& pole) {
  Vec3 to = target - root;
  double d = to.norm();
  const double lo = std::abs(l1 - l2) + 1e-3;
  const double hi = 0.999 * (l1 + l2);
  Vec3 u = d > 1e-9 ? Vec3(to / d) : Vec3(-kWorldUp);
  d = std::clamp(d, lo, hi);
  const double a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
  const double h = std::sqrt(std::max(0.0, l1 * l1 - a * a));
  Vec3 p = pole - pole.dot(u) * u;
  if (p.norm() < 1e-9) p = u.unitOrthogonal();
  p.normalize();
  const Vec3 mid = root + a * u + h * p;
  return {mid, root + d * u};
}

struct Frame {
  Vec3 pelvis = Vec3::Zero();
  double yaw = 0.0;
  double head_yaw = 0.0;
  double head_pitch = 0.0;
  std::array<Vec3, 2> wrist_target{Vec3::Zero(), Vec3::Zero()};
  std::array<double, 2> curl{0.3, 0.3};
  double gait_phase = 0.0;
};

struct Posed {
  Points joints;
  Mat3 head_rotation;
  Vec3 head_centre;
  std::array<Vec3, 2> shoulders;
};

Vec3 body_point(const Frame& f, double forward, double lateral, double up) {
  return f.pelvis + forward * facing(f.yaw) + lateral * rightward(f.yaw) + up * kWorldUp;
}

void pose_hand(Points& J, int begin, Side side, const Vec3& wrist, const Vec3& elbow,
               double curl) {
  const double mirror = side_sign(side);
  const Vec3 d = (wrist - elbow).normalized();
  Vec3 n = -kWorldUp - (-kWorldUp).dot(d) * d;
  if (n.norm() < 1e-6) n = d.unitOrthogonal();
  n.normalize();
  const Vec3 lat = d.cross(n) * mirror;
  J.row(begin) = wrist.transpose();
  for (std::size_t k = 0; k < kFingers.size(); ++k) {
    const FingerSpec& fs = kFingers[k];
    Vec3 p = wrist + fs.along * d + fs.lateral * lat + fs.normal * n;
    const int base = begin + 1 + 4 * static_cast<int>(k);
    J.row(base) = p.transpose();
    const Vec3 axis = k == 0 ? Vec3((d + 0.8 * lat).normalized()) : d;
    const double flex_scale = k == 0 ? 0.5 : 1.0;
    for (int s = 0; s < 3; ++s) {
      const double theta = curl * flex_scale * kFlexProfile[static_cast<std::size_t>(s)];
      const Vec3 dir = std::cos(theta) * axis + std::sin(theta) * n;
      p += fs.lengths[static_cast<std::size_t>(s)] * dir;
      J.row(base + 1 + s) = p.transpose();
    }
  }
}

Posed pose_skeleton(const Frame& f, const LimbLengths& L, const JointLayout& layout) {
  Posed out;
  Points J = Points::Zero(layout.joints(), 3);
  const Vec3 fw = facing(f.yaw);
  const Vec3 rt = rightward(f.yaw);

  const Vec3 neck = f.pelvis + L.torso * kWorldUp;
  const Vec3 head = neck + L.neck * kWorldUp;
  const Mat3 Rh = head_rotation(f.head_yaw, f.head_pitch);
  J.row(body::kNose) = (head + Rh * kNoseOffset).transpose();
  J.row(body::kLeftEye) = (head + Rh * kLeftEyeOffset).transpose();
  J.row(body::kRightEye) = (head + Rh * kRightEyeOffset).transpose();
  J.row(body::kLeftEar) = (head + Rh * kLeftEarOffset).transpose();
  J.row(body::kRightEar) = (head + Rh * kRightEarOffset).transpose();

  for (Side side : kSides) {
    const double sg = side_sign(side);
    const bool left = side == Side::kLeft;
    const Vec3 shoulder = neck + sg * L.shoulder_half_width * rt;
    const Vec3 pole = -kWorldUp + 0.4 * sg * rt - 0.3 * fw;
    const auto [elbow, wrist] =
        two_bone(shoulder, f.wrist_target[static_cast<std::size_t>(side)], L.upper_arm,
                 L.forearm, pole);
    J.row(left ? body::kLeftShoulder : body::kRightShoulder) = shoulder.transpose();
    J.row(left ? body::kLeftElbow : body::kRightElbow) = elbow.transpose();
    pose_hand(J, layout.hand_begin(side), side, wrist, elbow,
              f.curl[static_cast<std::size_t>(side)]);
    out.shoulders[static_cast<std::size_t>(side)] = shoulder;

    const Vec3 hip = f.pelvis + sg * L.hip_half_width * rt;
    const double phase = f.gait_phase + (left ? 0.0 : pi);
    const Vec3 ankle_target(hip.x(), hip.y(), 0.08);
    const Vec3 ankle_goal =
        ankle_target + 0.15 * std::sin(phase) * fw + 0.06 * std::max(0.0, std::cos(phase)) * kWorldUp;
    const auto [knee, ankle] = two_bone(hip, ankle_goal, L.thigh, L.shin, fw + 0.1 * sg * rt);
    J.row(left ? body::kLeftHip : body::kRightHip) = hip.transpose();
    J.row(left ? body::kLeftKnee : body::kRightKnee) = knee.transpose();
    J.row(left ? body::kLeftAnkle : body::kRightAnkle) = ankle.transpose();
  }
  out.joints = std::move(J);
  out.head_rotation = Rh;
  out.head_centre = head;
  return out;
}

class Script {
 public:
  Script(const GenConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Side random_side() { return uniform(0.0, 1.0) < 0.5 ? Side::kLeft : Side::kRight; }

  Frame base_frame() {
    Frame f;
    f.pelvis = Vec3(uniform(-2.0, 2.0), uniform(-2.0, 2.0), cfg_.limbs.pelvis_height);
    f.yaw = uniform(-pi, pi);
    f.head_yaw = f.yaw;
    return f;
  }

  Vec3 hold_point(const Frame& f, Side s) const {
    return body_point(f, 0.32, side_sign(s) * 0.17, 0.22);
  }
  Vec3 rest_point(const Frame& f, Side s) const {
    return body_point(f, 0.02, side_sign(s) * 0.24, -0.02);
  }
  Vec3 head_centre(const Frame& f) const {
    return f.pelvis + (cfg_.limbs.torso + cfg_.limbs.neck) * kWorldUp;
  }

  // Yaw and pitch that point the head at `target`.
  std::pair<double, double> gaze_to(const Frame& f, const Vec3& target) const {
    const Vec3 d = target - head_centre(f);
    return {std::atan2(d.y(), d.x()), std::atan2(-d.z(), d.head<2>().norm())};
  }

  struct Wobble {
    Vec3 amp;
    Vec3 phase;
    double freq;
  };
  Wobble wobble(double lo, double hi) {
    return {Vec3(uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)),
            Vec3(uniform(0, 2 * pi), uniform(0, 2 * pi), uniform(0, 2 * pi)), uniform(0.3, 0.9)};
  }
  static Vec3 eval(const Wobble& w, const Frame& f, double t) {
    const double a = 2.0 * pi * w.freq * t;
    return w.amp.x() * std::sin(a + w.phase.x()) * facing(f.yaw) +
           w.amp.y() * std::sin(a + w.phase.y()) * rightward(f.yaw) +
           w.amp.z() * std::sin(a + w.phase.z()) * kWorldUp;
  }

  std::vector<Frame> idle_sway(const std::vector<double>& times) {
    Frame f0 = base_frame();
    const double pitch = uniform(0.6, 0.8);
    const double sway_amp = uniform(0.01, 0.03);
    const double sway_freq = uniform(0.2, 0.5);
    const double sway_phase = uniform(0.0, 2 * pi);
    const double yaw_amp = uniform(0.02, 0.08);
    std::array<Wobble, 2> hands{wobble(0.02, 0.05), wobble(0.02, 0.05)};
    std::vector<Frame> frames;
    for (double t : times) {
      Frame f = f0;
      const double s = std::sin(2 * pi * sway_freq * t + sway_phase);
      f.pelvis += sway_amp * s * rightward(f0.yaw);
      f.yaw = f0.yaw + 0.5 * yaw_amp * s;
      f.head_yaw = f0.yaw + yaw_amp * s;
      f.head_pitch = pitch + 0.05 * std::sin(2 * pi * sway_freq * t);
      for (Side side : kSides) {
        const auto i = static_cast<std::size_t>(side);
        f.wrist_target[i] = hold_point(f, side) + eval(hands[i], f, t);
        f.curl[i] = 0.35 + 0.15 * std::sin(2 * pi * hands[i].freq * t + hands[i].phase.x());
      }
      frames.push_back(f);
    }
    return frames;
  }

  std::vector<Frame> reach(const std::vector<double>& times, Vec3& target) {
    Frame f0 = base_frame();
    const Side side = random_side();
    const double sg = side_sign(side);
    const double fwd = uniform(0.4, 1.0);
    target = body_point(f0, fwd, sg * uniform(0.0, 0.4), 0.0);
    target.z() = uniform(0.85, 1.35);
    const double step = std::max(0.0, fwd - 0.55);
    const double t_step = uniform(0.3, 1.2);
    const double t_reach = std::max(uniform(0.9, 1.7), t_step + 0.4);
    const double reach_dur = uniform(0.8, 1.3);
    const double pitch0 = uniform(0.55, 0.75);
    std::array<Wobble, 2> hands{wobble(0.01, 0.03), wobble(0.01, 0.03)};
    std::vector<Frame> frames;
    for (double t : times) {
      Frame f = f0;
      const double st = ramp(t, t_step, 0.9);
      f.pelvis += step * st * facing(f0.yaw);
      f.gait_phase = 2.0 * pi * step * st / 0.6;
      const double s = ramp(t, t_reach, reach_dur);
      const double g = ramp(t, t_reach - 0.3, 0.6);
      const auto [gaze_yaw, gaze_pitch] = gaze_to(f, target);
      f.head_yaw = f0.yaw + g * wrap_angle(gaze_yaw - f0.yaw);
      f.head_pitch = (1.0 - g) * pitch0 + g * gaze_pitch;
      for (Side hs : kSides) {
        const auto i = static_cast<std::size_t>(hs);
        const Vec3 hold = hold_point(f, hs) + eval(hands[i], f, t);
        if (hs == side) {
          f.wrist_target[i] = (1.0 - s) * hold + s * target;
          f.curl[i] = 0.3 + 0.5 * s * s - 0.25 * std::sin(pi * s);
        } else {
          f.wrist_target[i] = hold;
          f.curl[i] = 0.35;
        }
      }
      frames.push_back(f);
    }
    return frames;
  }

  std::vector<Frame> carry(const std::vector<double>& times) {
    Frame f0 = base_frame();
    const double speed = uniform(0.3, 0.9);
    const double t_start = uniform(0.0, 1.5);
    const double yaw_rate = uniform(-0.5, 0.5);
    const double pitch = uniform(0.5, 0.7);
    const double bob = uniform(0.005, 0.02);
    std::vector<Frame> frames;
    // Integrate heading and position on a fine grid for exactness across fps.
    Vec3 pos = f0.pelvis;
    double yaw = f0.yaw;
    double travelled = 0.0;
    double clock = 0.0;
    constexpr double dt = 1e-3;
    for (double t : times) {
      while (clock + 0.5 * dt < t) {
        const double v = speed * ramp(clock, t_start, 0.8);
        yaw += yaw_rate * ramp(clock, t_start, 0.8) * dt;
        pos += v * dt * facing(yaw);
        travelled += v * dt;
        clock += dt;
      }
      Frame f = f0;
      f.pelvis = pos;
      f.pelvis.z() = f0.pelvis.z() + bob * std::sin(2.0 * pi * travelled / 0.6);
      f.yaw = yaw;
      f.head_yaw = yaw + 0.1 * yaw_rate;
      f.head_pitch = pitch;
      f.gait_phase = 2.0 * pi * travelled / 1.2;
      for (Side side : kSides) {
        f.wrist_target[static_cast<std::size_t>(side)] =
            body_point(f, 0.35, side_sign(side) * 0.15, 0.20);
        f.curl[static_cast<std::size_t>(side)] = 0.7;
      }
      frames.push_back(f);
    }
    return frames;
  }

  std::vector<Frame> turn_and_reach(const std::vector<double>& times, Vec3& target) {
    Frame f0 = base_frame();
    const Side side = random_side();
    const double sg = side_sign(side);
    const double turn = (uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(1.0, 2.0);
    const double t_turn = uniform(0.2, 0.8);
    const double t_reach = t_turn + uniform(0.6, 1.0);
    const double reach_dur = uniform(0.8, 1.2);
    const double pitch0 = uniform(0.1, 0.3);
    Frame final_frame = f0;
    final_frame.yaw = f0.yaw + turn;
    target = body_point(final_frame, uniform(0.45, 0.7), sg * uniform(0.0, 0.3), 0.0);
    target.z() = uniform(0.9, 1.3);
    std::vector<Frame> frames;
    for (double t : times) {
      Frame f = f0;
      const double tb = ramp(t, t_turn, 1.0);
      f.yaw = f0.yaw + turn * tb;
      f.gait_phase = 0.5 * std::abs(turn) * tb * 2.0 * pi;
      const double th = ramp(t, t_turn - 0.2, 0.9);
      const double s = ramp(t, t_reach, reach_dur);
      const double g = ramp(t, t_reach - 0.3, 0.6);
      const auto [gaze_yaw, gaze_pitch] = gaze_to(f, target);
      const double turned_yaw = f0.yaw + turn * th;
      f.head_yaw = turned_yaw + g * wrap_angle(gaze_yaw - turned_yaw);
      f.head_pitch = (1.0 - g) * pitch0 + g * gaze_pitch;
      for (Side hs : kSides) {
        const auto i = static_cast<std::size_t>(hs);
        const Vec3 rest = rest_point(f, hs);
        if (hs == side) {
          f.wrist_target[i] = (1.0 - s) * rest + s * target;
          f.curl[i] = 0.2 + 0.6 * s * s - 0.15 * std::sin(pi * s);
        } else {
          f.wrist_target[i] = rest;
          f.curl[i] = 0.2;
        }
      }
      frames.push_back(f);
    }
    return frames;
  }

 private:
  const GenConfig& cfg_;
  std::mt19937_64& rng_;
};

Archetype pick_archetype(const GenConfig& cfg, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = 0;
  for (int a = 0; a < kNumArchetypes; ++a) {
    if (cfg.motion_mix[static_cast<std::size_t>(a)] <= 0.0) continue;
    last = a;
    acc += cfg.motion_mix[static_cast<std::size_t>(a)];
    if (u < acc) return static_cast<Archetype>(a);
  }
  return static_cast<Archetype>(last);
}

HandObservation2D observe(const CameraPose& cam, const Points& joints, const JointLayout& layout) {
  HandObservation2D h;
  for (Side s : kSides) {
    const Vec3 w = joints.row(layout.wrist(s)).transpose();
    const bool vis = in_view(cam, w);
    if (vis) {
      const Projection p = project_point(cam, w);
      h.set(s, normalize_2d(Vec2(p.u, p.v), cam.image_size, true), true);
    } else {
      h.set(s, kInvisible2D, false);
    }
  }
  return h;
}

bool accept(Archetype a, const WorldSequence& ws, const GenConfig& cfg, const JointLayout& layout) {
  if (a != Archetype::kIdleSway && a != Archetype::kTurnAndReach) return true;
  bool all_visible = true;
  for (int t = 0; t < cfg.T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    for (Side s : kSides) {
      if (!in_view(ws.cameras[ut], Vec3(ws.joints[ut].row(layout.wrist(s)).transpose()))) {
        all_visible = false;
      }
    }
  }
  return a == Archetype::kIdleSway ? all_visible : !all_visible;
}

}  // namespace

std::vector<std::pair<int, int>> skeleton_bones(const JointLayout& layout) {
  using namespace body;
  std::vector<std::pair<int, int>> bones{
      {kNose, kLeftEye},          {kNose, kRightEye},        {kLeftEye, kLeftEar},
      {kRightEye, kRightEar},     {kLeftEar, kRightEar},     {kLeftShoulder, kRightShoulder},
      {kLeftShoulder, kLeftElbow}, {kRightShoulder, kRightElbow}, {kLeftHip, kRightHip},
      {kLeftHip, kLeftKnee},      {kRightHip, kRightKnee},   {kLeftKnee, kLeftAnkle},
      {kRightKnee, kRightAnkle},
      {kLeftElbow, layout.left_wrist()}, {kRightElbow, layout.right_wrist()},
  };
  for (Side s : kSides) {
    const int w = layout.wrist(s);
    for (int k = 0; k < 5; ++k) {
      const int base = w + 1 + 4 * k;
      bones.emplace_back(w, base);
      for (int i = 0; i < 3; ++i) bones.emplace_back(base + i, base + i + 1);
    }
  }
  return bones;
}

WorldSequence generate_world_sequence(const GenConfig& cfg, std::uint64_t index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  const JointLayout layout;
  const int L = cfg.T + cfg.F;
  std::vector<double> times(static_cast<std::size_t>(L));
  for (int k = 0; k < L; ++k) times[static_cast<std::size_t>(k)] = k / cfg.fps;

  const Archetype arch = pick_archetype(cfg, rng);
  Script script(cfg, rng);
  constexpr int kMaxAttempts = 200;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    WorldSequence ws;
    ws.archetype = arch;
    std::vector<Frame> frames;
    switch (arch) {
      case Archetype::kIdleSway: frames = script.idle_sway(times); break;
      case Archetype::kCarry: frames = script.carry(times); break;
      case Archetype::kReach:
        frames = script.reach(times, ws.target);
        ws.has_target = true;
        break;
      case Archetype::kTurnAndReach:
        frames = script.turn_and_reach(times, ws.target);
        ws.has_target = true;
        break;
    }
    for (const Frame& f : frames) {
      Posed p = pose_skeleton(f, cfg.limbs, layout);
      CameraPose cam;
      cam.rotation = matrix_to_rotation_6d(p.head_rotation);
      cam.translation = p.head_centre + p.head_rotation * kHeadToCamera;
      cam.intrinsics = cfg.intrinsics;
      cam.image_size = cfg.image_size;
      ws.cameras.push_back(cam);
      ws.head_rotations.push_back(p.head_rotation);
      ws.head_centres.push_back(p.head_centre);
      ws.shoulders[0].push_back(p.shoulders[0]);
      ws.shoulders[1].push_back(p.shoulders[1]);
      ws.joints.push_back(std::move(p.joints));
    }
    if (accept(arch, ws, cfg, layout)) return ws;
  }
  throw Error(std::string("synthetic generator could not satisfy the ") + archetype_name(arch) +
              " constraints");
}

Sequence generate_sequence(const GenConfig& cfg, std::uint64_t index) {
  const WorldSequence ws = generate_world_sequence(cfg, index);
  const JointLayout layout;
  Sequence seq;
  seq.id = cfg.id_prefix + "_" + std::to_string(cfg.seed) + "_" + std::to_string(index);
  seq.activity = archetype_name(ws.archetype);
  seq.intrinsics = cfg.intrinsics;
  seq.image_size = cfg.image_size;
  const int L = cfg.T + cfg.F;
  for (int t = 0; t < L; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    JointFrame jf;
    jf.joints = ws.joints[ut];
    jf.mask.assign(static_cast<std::size_t>(layout.joints()), true);
    if (t < cfg.T) {
      seq.obs_poses.push_back(ws.cameras[ut]);
      seq.obs_hands2d.push_back(observe(ws.cameras[ut], ws.joints[ut], layout));
      seq.obs_joints.push_back(std::move(jf));
    } else {
      seq.fut_joints.push_back(std::move(jf));
    }
  }
  const CanonicalTransform tf = canonical_transform_for(seq.obs_poses.front());
  Sequence canon = canonicalize(seq);
  Eigen::VectorXd feat = Eigen::VectorXd::Zero(cfg.d_img);
  if (cfg.feature_mode == FeatureMode::kSceneEncoding && ws.has_target) {
    const Vec3 target = tf.apply(ws.target);
    for (int k = 0; k < std::min(3, cfg.d_img); ++k) feat[k] = target[k];
  }
  canon.obs_features.assign(static_cast<std::size_t>(cfg.T), feat);
  return canon;
}

std::vector<Sequence> generate_sequences(const GenConfig& cfg) {
  cfg.validate();
  std::vector<Sequence> out;
  out.reserve(static_cast<std::size_t>(cfg.n_sequences));
  for (int i = 0; i < cfg.n_sequences; ++i) {
    out.push_back(generate_sequence(cfg, static_cast<std::uint64_t>(i)));
  }
  return out;
}

GenSummary generate_dataset(const GenConfig& cfg, const std::filesystem::path& out_path) {
  const auto seqs = generate_sequences(cfg);
  save_dataset(out_path, seqs);
  const auto part = partition_by_view(seqs);
  return {seqs.size(), part.in_view.size(), part.out_of_view.size()};
}

}  // namespace handcast
