#include "handcast/geometry.hpp"

#include <cmath>

#include "handcast/errors.hpp"

namespace handcast {

namespace {

constexpr double kDegenerateNorm = 1e-12;
constexpr double kOrthonormalTol = 1e-6;
constexpr double kPlaneTol = 1e-9;
constexpr double kSnapTol = 1e-12;

}  // namespace

Mat3 rotation_6d_to_matrix(const Rotation6D& r) {
  const Vec3 a(r.r[0], r.r[1], r.r[2]);
  const Vec3 b(r.r[3], r.r[4], r.r[5]);
  const double na = a.norm();
  if (!(na > kDegenerateNorm) || !(b.norm() > kDegenerateNorm)) {
    throw InvalidRotationError("6D rotation has a zero column");
  }
  const Vec3 c0 = a / na;
  const Vec3 b_perp = b - c0.dot(b) * c0;
  const double nb = b_perp.norm();
  if (!(nb > kDegenerateNorm * b.norm())) {
    throw InvalidRotationError("6D rotation columns are parallel");
  }
  const Vec3 c1 = b_perp / nb;
  Mat3 R;
  R.col(0) = c0;
  R.col(1) = c1;
  R.col(2) = c0.cross(c1);
  return R;
}

Rotation6D matrix_to_rotation_6d(const Mat3& R) {
  if (!R.allFinite() || !(R.transpose() * R).isApprox(Mat3::Identity(), kOrthonormalTol) ||
      std::abs(R.determinant() - 1.0) > kOrthonormalTol) {
    throw InvalidRotationError("matrix is not a proper rotation");
  }
  Rotation6D out;
  out.r = {R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1)};
  return out;
}

Vec3 CameraPose::world_to_camera(const Vec3& x_world) const {
  return rotation_matrix().transpose() * (x_world - translation);
}

Vec3 CameraPose::camera_to_world(const Vec3& x_cam) const {
  return rotation_matrix() * x_cam + translation;
}

Eigen::Matrix<double, 9, 1> CameraPose::conditioning() const {
  Eigen::Matrix<double, 9, 1> c;
  for (int i = 0; i < 6; ++i) c[i] = rotation.r[i];
  c.tail<3>() = translation;
  return c;
}

void CameraPose::validate() const {
  if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) {
    throw ContractError("camera focal lengths must be positive");
  }
  if (image_size.width <= 0 || image_size.height <= 0) {
    throw ContractError("camera image size must be positive");
  }
}

Projection project_point(const CameraPose& pose, const Vec3& x_world) {
  const Vec3 xc = pose.world_to_camera(x_world);
  if (std::abs(xc.z()) < kPlaneTol) {
    throw CameraPlaneError("point lies on the camera plane");
  }
  const auto& K = pose.intrinsics;
  return {K.fx * xc.x() / xc.z() + K.cx, K.fy * xc.y() / xc.z() + K.cy, xc.z()};
}

Vec3 lift_point(const CameraPose& pose, const Projection& p) {
  const auto& K = pose.intrinsics;
  const Vec3 xc((p.u - K.cx) / K.fx * p.depth, (p.v - K.cy) / K.fy * p.depth, p.depth);
  return pose.camera_to_world(xc);
}

bool in_view(const CameraPose& pose, const Projection& p) {
  return p.depth > 0.0 && p.u >= 0.0 && p.u < pose.image_size.width && p.v >= 0.0 &&
         p.v < pose.image_size.height;
}

bool in_view(const CameraPose& pose, const Vec3& x_world) {
  const Vec3 xc = pose.world_to_camera(x_world);
  if (std::abs(xc.z()) < kPlaneTol) return false;
  return in_view(pose, project_point(pose, x_world));
}

double yaw_of(const Mat3& R) { return std::atan2(R(1, 0), R(0, 0)); }

Mat3 yaw_matrix(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 Rz;
  Rz << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return Rz;
}

Vec3 CanonicalTransform::apply(const Vec3& x) const {
  if (is_identity()) return x;
  const Vec3 shifted(x.x() - horizontal_offset.x(), x.y() - horizontal_offset.y(), x.z());
  Vec3 out = yaw_rotation().transpose() * shifted;
  out.z() = x.z();
  return out;
}

Vec3 CanonicalTransform::invert(const Vec3& x) const {
  if (is_identity()) return x;
  Vec3 out = yaw_rotation() * x;
  out.x() += horizontal_offset.x();
  out.y() += horizontal_offset.y();
  out.z() = x.z();
  return out;
}

Points CanonicalTransform::apply(const Points& pts) const {
  if (is_identity()) return pts;
  Points out(pts.rows(), 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) out.row(i) = apply(Vec3(pts.row(i))).transpose();
  return out;
}

Points CanonicalTransform::invert(const Points& pts) const {
  if (is_identity()) return pts;
  Points out(pts.rows(), 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) out.row(i) = invert(Vec3(pts.row(i))).transpose();
  return out;
}

CameraPose CanonicalTransform::apply(const CameraPose& pose) const {
  if (is_identity()) return pose;
  CameraPose out = pose;
  out.rotation = matrix_to_rotation_6d(yaw_rotation().transpose() * pose.rotation_matrix());
  out.translation = apply(pose.translation);
  return out;
}

CameraPose CanonicalTransform::invert(const CameraPose& pose) const {
  if (is_identity()) return pose;
  CameraPose out = pose;
  out.rotation = matrix_to_rotation_6d(yaw_rotation() * pose.rotation_matrix());
  out.translation = invert(pose.translation);
  return out;
}

CanonicalTransform canonical_transform_for(const CameraPose& reference) {
  CanonicalTransform t;
  t.yaw = yaw_of(reference.rotation_matrix());
  t.horizontal_offset = reference.translation.head<2>();
  if (std::abs(t.yaw) < kSnapTol) t.yaw = 0.0;
  if (std::abs(t.horizontal_offset.x()) < kSnapTol) t.horizontal_offset.x() = 0.0;
  if (std::abs(t.horizontal_offset.y()) < kSnapTol) t.horizontal_offset.y() = 0.0;
  return t;
}

CanonicalizedSequence canonicalize_sequence(const std::vector<CameraPose>& poses,
                                            const std::vector<Points>& points) {
  if (poses.empty()) throw ContractError("cannot canonicalize an empty sequence");
  CanonicalizedSequence out;
  out.transform = canonical_transform_for(poses.front());
  out.poses.reserve(poses.size());
  for (const auto& p : poses) out.poses.push_back(out.transform.apply(p));
  out.points.reserve(points.size());
  for (const auto& p : points) out.points.push_back(out.transform.apply(p));
  return out;
}

}  // namespace handcast
