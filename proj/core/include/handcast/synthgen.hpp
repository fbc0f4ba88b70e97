#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "handcast/data.hpp"

namespace handcast {

enum class Archetype { kReach = 0, kCarry = 1, kTurnAndReach = 2, kIdleSway = 3 };
inline constexpr int kNumArchetypes = 4;
const char* archetype_name(Archetype a);

enum class FeatureMode { kZeros, kSceneEncoding };
FeatureMode parse_feature_mode(const std::string& name);
std::string to_string(FeatureMode mode);

// Segment lengths in meters.
struct LimbLengths {
  double upper_arm = 0.30;
  double forearm = 0.27;
  double shoulder_half_width = 0.19;
  double hip_half_width = 0.11;
  double thigh = 0.45;
  double shin = 0.43;
  double torso = 0.52;  // pelvis centre to neck base
  double neck = 0.17;   // neck base to head centre
  double pelvis_height = 0.85;
};

struct GenConfig {
  std::uint64_t seed = 0;
  int n_sequences = 64;
  double fps = 10.0;
  int T = 20;
  int F = 10;
  // Proportions of reach, carry, turn-and-reach, idle-sway.
  std::array<double, kNumArchetypes> motion_mix{0.3, 0.2, 0.3, 0.2};
  LimbLengths limbs;
  ImageSize image_size{256, 256};
  Intrinsics intrinsics{128.0, 128.0, 128.0, 128.0};
  FeatureMode feature_mode = FeatureMode::kZeros;
  int d_img = 384;
  std::string id_prefix = "syn";

  // Throws ConfigError.
  void validate() const;
};

// Fixed camera placement in the head frame (x right, y down, z forward).
inline const Vec3 kHeadToCamera{0.0, 0.05, 0.1};

// Bones whose lengths are constant for every generated frame.
std::vector<std::pair<int, int>> skeleton_bones(const JointLayout& layout = {});

// World-frame (pre-canonicalization) output of the motion scripts.
struct WorldSequence {
  Archetype archetype = Archetype::kIdleSway;
  std::vector<Points> joints;        // T+F frames
  std::vector<CameraPose> cameras;   // T+F frames
  std::vector<Mat3> head_rotations;  // T+F frames, world-from-head
  std::vector<Vec3> head_centres;
  std::vector<Vec3> shoulders[2];    // per side, T+F frames
  Vec3 target = Vec3::Zero();
  bool has_target = false;
};

// Deterministic in (cfg.seed, index).
WorldSequence generate_world_sequence(const GenConfig& cfg, std::uint64_t index);

Sequence generate_sequence(const GenConfig& cfg, std::uint64_t index);

struct GenSummary {
  std::size_t n_sequences = 0;
  std::size_t n_in_view_pairs = 0;
  std::size_t n_out_of_view_pairs = 0;
};

std::vector<Sequence> generate_sequences(const GenConfig& cfg);
// Writes the dataset file; throws IoError on write failure.
GenSummary generate_dataset(const GenConfig& cfg, const std::filesystem::path& out_path);

}  // namespace handcast
