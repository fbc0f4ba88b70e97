#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace handcast {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// J x 3 block of 3D points, one row per joint.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// World vertical axis is +z. Camera axes follow the pinhole convention:
// x right, y down, z along the optical axis.
inline const Vec3 kWorldUp{0.0, 0.0, 1.0};

// Continuous rotation encoding: the first two columns of the rotation
// matrix, stored column after column (c0x, c0y, c0z, c1x, c1y, c1z).
struct Rotation6D {
  std::array<double, 6> r{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  friend bool operator==(const Rotation6D&, const Rotation6D&) = default;
};

// Gram-Schmidt decoding. Throws InvalidRotationError when either column is
// (near) zero or the two are (near) parallel.
Mat3 rotation_6d_to_matrix(const Rotation6D& r);

// Inverse of the decoding. Throws InvalidRotationError unless R is
// orthonormal with det +1 to within 1e-6.
Rotation6D matrix_to_rotation_6d(const Mat3& R);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

struct ImageSize {
  int width = 1;
  int height = 1;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

// Per-frame camera: world-from-camera rotation, camera centre in world
// coordinates (meters), pinhole intrinsics in pixels.
struct CameraPose {
  Rotation6D rotation;
  Vec3 translation = Vec3::Zero();
  Intrinsics intrinsics;
  ImageSize image_size;

  Mat3 rotation_matrix() const { return rotation_6d_to_matrix(rotation); }
  Vec3 world_to_camera(const Vec3& x_world) const;
  Vec3 camera_to_world(const Vec3& x_cam) const;
  // 9-vector conditioning signal: 6D rotation followed by translation.
  Eigen::Matrix<double, 9, 1> conditioning() const;
  // Throws ContractError on non-positive focal lengths or image size.
  void validate() const;

  friend bool operator==(const CameraPose& a, const CameraPose& b) {
    return a.rotation == b.rotation && a.translation == b.translation &&
           a.intrinsics == b.intrinsics && a.image_size == b.image_size;
  }
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// Pinhole projection. Depth is reported with its sign; throws
// CameraPlaneError when |depth| < 1e-9.
Projection project_point(const CameraPose& pose, const Vec3& x_world);

// Inverse of project_point for a known depth.
Vec3 lift_point(const CameraPose& pose, const Projection& p);

// depth > 0, 0 <= u < width, 0 <= v < height. Points on the camera plane
// are not in view.
bool in_view(const CameraPose& pose, const Vec3& x_world);
bool in_view(const CameraPose& pose, const Projection& p);

// Heading of a rotation about the world vertical axis, taken from the
// horizontal projection of the camera x axis.
double yaw_of(const Mat3& R);
Mat3 yaw_matrix(double yaw);

// Rigid transform that removes a heading and a horizontal offset:
//   x' = Rz(-yaw) * (x - (ox, oy, 0))
// The vertical coordinate is never changed.
struct CanonicalTransform {
  double yaw = 0.0;
  Vec2 horizontal_offset = Vec2::Zero();

  Mat3 yaw_rotation() const { return yaw_matrix(yaw); }
  bool is_identity() const { return yaw == 0.0 && horizontal_offset.isZero(0.0); }

  Vec3 apply(const Vec3& x) const;
  Vec3 invert(const Vec3& x) const;
  Points apply(const Points& pts) const;
  Points invert(const Points& pts) const;
  CameraPose apply(const CameraPose& pose) const;
  CameraPose invert(const CameraPose& pose) const;
};

// Transform that maps `reference` to zero heading at the horizontal origin.
// Headings and offsets below 1e-12 snap to exactly zero so canonical input
// maps to itself bit for bit.
CanonicalTransform canonical_transform_for(const CameraPose& reference);

struct CanonicalizedSequence {
  std::vector<CameraPose> poses;
  std::vector<Points> points;
  CanonicalTransform transform;
};

// Re-express poses and point sets relative to the first camera's heading and
// horizontal position. Throws ContractError on an empty pose list.
CanonicalizedSequence canonicalize_sequence(const std::vector<CameraPose>& poses,
                                            const std::vector<Points>& points);

}  // namespace handcast
