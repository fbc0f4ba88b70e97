#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "handcast/geometry.hpp"

namespace handcast {

enum class Side { kLeft = 0, kRight = 1 };
inline constexpr Side kSides[] = {Side::kLeft, Side::kRight};
const char* side_name(Side s);

// Joint ordering: body joints first (COCO keypoints without the wrists:
// nose, eyes, ears, shoulders, elbows, hips, knees, ankles), then the left
// hand block and the right hand block. Each hand block starts with the wrist
// followed by thumb, index, middle, ring and pinky chains of four joints.
struct JointLayout {
  int n_body = 15;
  int n_hand = 21;

  int joints() const { return n_body + 2 * n_hand; }
  int hand_begin(Side s) const { return n_body + (s == Side::kLeft ? 0 : n_hand); }
  int wrist(Side s) const { return hand_begin(s); }
  int left_wrist() const { return wrist(Side::kLeft); }
  int right_wrist() const { return wrist(Side::kRight); }

  friend bool operator==(const JointLayout&, const JointLayout&) = default;
};

inline constexpr int kNumJoints = 57;
inline constexpr int kLeftWrist = 15;
inline constexpr int kRightWrist = 36;

namespace body {
inline constexpr int kNose = 0, kLeftEye = 1, kRightEye = 2, kLeftEar = 3, kRightEar = 4,
                     kLeftShoulder = 5, kRightShoulder = 6, kLeftElbow = 7, kRightElbow = 8,
                     kLeftHip = 9, kRightHip = 10, kLeftKnee = 11, kRightKnee = 12,
                     kLeftAnkle = 13, kRightAnkle = 14;
}  // namespace body

// 3D joints at one timestep plus the per-joint annotation mask. Unannotated
// joints hold (0, 0, 0).
struct JointFrame {
  Points joints;
  std::vector<bool> mask;

  static JointFrame zeros(int n_joints);
  int size() const { return static_cast<int>(joints.rows()); }
  // Reset unannotated joints to the zero fill.
  void zero_masked();

  friend bool operator==(const JointFrame& a, const JointFrame& b) {
    return a.mask == b.mask && a.joints == b.joints;
  }
};

inline const Vec2 kInvisible2D{-1.0, -1.0};

// Normalized [0,1] hand locations; an invisible side holds exactly (-1, -1).
struct HandObservation2D {
  Vec2 left = kInvisible2D;
  Vec2 right = kInvisible2D;
  bool left_visible = false;
  bool right_visible = false;

  const Vec2& location(Side s) const { return s == Side::kLeft ? left : right; }
  bool visible(Side s) const { return s == Side::kLeft ? left_visible : right_visible; }
  void set(Side s, const Vec2& loc, bool vis);
  // Throws ContractError when the sentinel convention is violated.
  void validate() const;

  friend bool operator==(const HandObservation2D&, const HandObservation2D&) = default;
};

struct Sequence {
  std::string id;
  std::string activity;
  Intrinsics intrinsics;
  ImageSize image_size;
  std::vector<CameraPose> obs_poses;
  std::vector<HandObservation2D> obs_hands2d;
  std::vector<Eigen::VectorXd> obs_features;
  std::vector<JointFrame> obs_joints;
  std::vector<JointFrame> fut_joints;

  int T() const { return static_cast<int>(obs_poses.size()); }
  int F() const { return static_cast<int>(fut_joints.size()); }
  int J() const { return obs_joints.empty() ? 0 : obs_joints.front().size(); }
  const JointFrame& frame(int t) const { return t < T() ? obs_joints[t] : fut_joints[t - T()]; }

  friend bool operator==(const Sequence& a, const Sequence& b);
};

// Expected record dimensions. `J` or `feature_dim` < 0 accepts any value as
// long as it is consistent across frames and records.
struct DatasetShape {
  int T = 20;
  int F = 10;
  int J = kNumJoints;
  int feature_dim = -1;
};

inline constexpr const char* kDatasetVersion = "v1";

// One newline-free record in the dataset file format.
std::string serialize_record(const Sequence& seq);
// Parses and validates one record; canonicalizes its 3D content.
Sequence parse_record(const std::string& line, const DatasetShape& shape = {},
                      std::size_t line_number = 0);

// Throws IoError on a missing file and LoadError naming every invalid
// record (line number and id) otherwise.
std::vector<Sequence> load_dataset(const std::filesystem::path& path,
                                   const DatasetShape& shape = {});
void save_dataset(const std::filesystem::path& path, const std::vector<Sequence>& seqs);

// Applies canonicalize_sequence to poses and all joints, keeping masked
// joints at the zero fill.
Sequence canonicalize(const Sequence& seq);

// Pixel to normalized image coordinates; the sentinel when not visible.
// Throws ContractError for a visible pixel outside the image.
Vec2 normalize_2d(const Vec2& pixel, const ImageSize& image_size, bool visible);

struct SideRef {
  std::size_t sequence = 0;
  Side side = Side::kLeft;

  friend bool operator==(const SideRef&, const SideRef&) = default;
};

struct ViewPartition {
  std::vector<SideRef> in_view;
  std::vector<SideRef> out_of_view;
};

// A (sequence, side) pair is in view iff that hand is visible in every
// observation frame.
bool side_in_view(const Sequence& seq, Side side);
ViewPartition partition_by_view(const std::vector<Sequence>& seqs);

struct DatasetStats {
  Points mean_pose;
  std::size_t count = 0;
};

// Per-joint mean over every annotated frame (observation and future).
// Throws ContractError listing joint indices that are never annotated.
DatasetStats compute_stats(const std::vector<Sequence>& train);

}  // namespace handcast
