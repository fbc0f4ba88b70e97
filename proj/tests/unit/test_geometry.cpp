#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "handcast/errors.hpp"
#include "handcast/geometry.hpp"
#include "oracles.hpp"

using namespace handcast;

namespace {

CameraPose make_pose(const Mat3& R, const Vec3& t, Intrinsics K = {100, 100, 50, 50},
                     ImageSize size = {100, 100}) {
  CameraPose p;
  p.rotation = matrix_to_rotation_6d(R);
  p.translation = t;
  p.intrinsics = K;
  p.image_size = size;
  return p;
}

Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

}  // namespace

TEST(Rotation6D, IdentityDecodes) {
  EXPECT_TRUE(rotation_6d_to_matrix({{1, 0, 0, 0, 1, 0}}).isApprox(Mat3::Identity(), 0.0));
}

TEST(Rotation6D, ScaleIsAbsorbed) {
  const Mat3 R = rotation_6d_to_matrix({{2, 0, 0, 0, 3, 0}});
  EXPECT_LT((R - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rotation6D, DegenerateInputThrows) {
  EXPECT_THROW(rotation_6d_to_matrix({{0, 0, 0, 0, 1, 0}}), InvalidRotationError);
  EXPECT_THROW(rotation_6d_to_matrix({{1, 0, 0, 0, 0, 0}}), InvalidRotationError);
  EXPECT_THROW(rotation_6d_to_matrix({{1, 2, 3, 2, 4, 6}}), InvalidRotationError);
}

TEST(Rotation6D, EncodeIdentity) {
  const Rotation6D r = matrix_to_rotation_6d(Mat3::Identity());
  const std::array<double, 6> want{1, 0, 0, 0, 1, 0};
  EXPECT_EQ(r.r, want);
}

TEST(Rotation6D, EncodeYawTakesFirstTwoColumns) {
  const Mat3 R = rot_z(std::numbers::pi / 2);
  const Rotation6D r = matrix_to_rotation_6d(R);
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(r.r[static_cast<std::size_t>(i)], R(i, 0));
    EXPECT_DOUBLE_EQ(r.r[static_cast<std::size_t>(3 + i)], R(i, 1));
  }
}

TEST(Rotation6D, NonOrthonormalEncodeThrows) {
  Mat3 R = Mat3::Identity();
  R(0, 0) = 1.01;
  EXPECT_THROW(matrix_to_rotation_6d(R), InvalidRotationError);
  EXPECT_THROW(matrix_to_rotation_6d(-Mat3::Identity()), InvalidRotationError);
}

TEST(Rotation6D, RandomRoundTrips) {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Mat3 R = oracle::random_rotation(rng);
    const Mat3 back = rotation_6d_to_matrix(matrix_to_rotation_6d(R));
    worst = std::max(worst, (back - R).cwiseAbs().maxCoeff());
    EXPECT_NEAR(back.determinant(), 1.0, 1e-9);
    EXPECT_LT((back.transpose() * back - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Rotation6D, DecodeOfPerturbedColumnsIsOrthonormal) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Rotation6D r;
    for (auto& v : r.r) v = n(rng);
    const Mat3 R = rotation_6d_to_matrix(r);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-9);
    const Vec3 a(r.r[0], r.r[1], r.r[2]);
    EXPECT_LT((R.col(0) - a.normalized()).norm(), 1e-12);
    // decode -> encode -> decode is stable
    EXPECT_LT((rotation_6d_to_matrix(matrix_to_rotation_6d(R)) - R).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Projection, OpticalAxis) {
  const CameraPose p = make_pose(Mat3::Identity(), Vec3::Zero());
  const Projection pr = project_point(p, {0, 0, 2});
  EXPECT_DOUBLE_EQ(pr.u, 50.0);
  EXPECT_DOUBLE_EQ(pr.v, 50.0);
  EXPECT_DOUBLE_EQ(pr.depth, 2.0);
}

TEST(Projection, OffAxis) {
  const Projection pr = project_point(make_pose(Mat3::Identity(), Vec3::Zero()), {1, 0, 2});
  EXPECT_DOUBLE_EQ(pr.u, 100.0);
  EXPECT_DOUBLE_EQ(pr.v, 50.0);
  EXPECT_DOUBLE_EQ(pr.depth, 2.0);
}

TEST(Projection, BehindCameraKeepsSign) {
  const Projection pr = project_point(make_pose(Mat3::Identity(), Vec3::Zero()), {0, 0, -1});
  EXPECT_DOUBLE_EQ(pr.depth, -1.0);
}

TEST(Projection, CameraPlaneThrows) {
  EXPECT_THROW(project_point(make_pose(Mat3::Identity(), Vec3::Zero()), {1, 0, 0}), CameraPlaneError);
}

TEST(Projection, LiftRoundTripRandom) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const CameraPose pose = make_pose(oracle::random_rotation(rng), {u(rng), u(rng), u(rng)},
                                      {120, 90, 64, 48}, {128, 96});
    const Vec3 x(u(rng), u(rng), u(rng));
    const Projection pr = project_point(pose, x);
    if (std::abs(pr.depth) < 1e-3) continue;
    worst = std::max(worst, (lift_point(pose, pr) - x).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Projection, ManualPinholeOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const Mat3 R = oracle::random_rotation(rng);
    const Vec3 t(u(rng), u(rng), u(rng));
    const CameraPose pose = make_pose(R, t, {110, 95, 40, 30}, {80, 60});
    const Vec3 x(u(rng), u(rng), u(rng));
    // x_cam = R^T (x - t), written out.
    double c[3] = {0, 0, 0};
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) c[r] += R(k, r) * (x[k] - t[k]);
    if (std::abs(c[2]) < 1e-3) continue;
    const Projection pr = project_point(pose, x);
    EXPECT_NEAR(pr.u, 110 * c[0] / c[2] + 40, 1e-9);
    EXPECT_NEAR(pr.v, 95 * c[1] / c[2] + 30, 1e-9);
    EXPECT_NEAR(pr.depth, c[2], 1e-12);
  }
}

TEST(InView, Basics) {
  const CameraPose p = make_pose(Mat3::Identity(), Vec3::Zero());
  EXPECT_TRUE(in_view(p, Vec3(0, 0, 2)));
  EXPECT_FALSE(in_view(p, Vec3(0, 0, -2)));
  // u = 100*x/2 + 50 = 100 = width: exclusive
  EXPECT_FALSE(in_view(p, Vec3(1, 0, 2)));
  // u = 0: inclusive
  EXPECT_TRUE(in_view(p, Vec3(-1, 0, 2)));
  EXPECT_FALSE(in_view(p, Vec3(1, 0, 0)));
}

TEST(InView, AgreesWithProjection) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const CameraPose pose = make_pose(oracle::random_rotation(rng), {0.1, 0.2, 0.3});
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const Projection pr = project_point(pose, x);
    const bool want = pr.depth > 0 && pr.u >= 0 && pr.u < 100 && pr.v >= 0 && pr.v < 100;
    EXPECT_EQ(in_view(pose, x), want);
    EXPECT_EQ(in_view(pose, pr), want);
  }
}

TEST(CameraPose, ConditioningIsRotationThenTranslation) {
  const CameraPose p = make_pose(rot_z(0.3), {1, 2, 3});
  const auto c = p.conditioning();
  for (int i = 0; i < 6; ++i) EXPECT_EQ(c[i], p.rotation.r[static_cast<std::size_t>(i)]);
  EXPECT_EQ(c[6], 1);
  EXPECT_EQ(c[7], 2);
  EXPECT_EQ(c[8], 3);
}

TEST(CameraPose, ValidateRejectsBadIntrinsics) {
  CameraPose p = make_pose(Mat3::Identity(), Vec3::Zero());
  p.intrinsics.fx = 0;
  EXPECT_THROW(p.validate(), ContractError);
  p = make_pose(Mat3::Identity(), Vec3::Zero());
  p.image_size.height = 0;
  EXPECT_THROW(p.validate(), ContractError);
}

TEST(Canonicalize, NinetyDegreeYawExample) {
  const CameraPose first = make_pose(rot_z(std::numbers::pi / 2), {3, 4, 1.6});
  const auto out = canonicalize_sequence({first}, {});
  const CameraPose& c = out.poses.front();
  EXPECT_NEAR(yaw_of(c.rotation_matrix()), 0.0, 1e-12);
  EXPECT_LT((c.rotation_matrix() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(c.translation.x(), 0.0, 1e-12);
  EXPECT_NEAR(c.translation.y(), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(c.translation.z(), 1.6);
}

TEST(Canonicalize, EmptyThrows) {
  EXPECT_THROW(canonicalize_sequence({}, {}), ContractError);
}

namespace {

struct RandomScene {
  std::vector<CameraPose> poses;
  std::vector<Points> points;
};

RandomScene random_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  RandomScene s;
  for (int t = 0; t < 6; ++t) {
    s.poses.push_back(make_pose(oracle::random_rotation(rng), {u(rng), u(rng), u(rng)}));
    Points p(7, 3);
    for (int j = 0; j < 7; ++j) p.row(j) << u(rng), u(rng), u(rng);
    s.points.push_back(p);
  }
  return s;
}

}  // namespace

TEST(Canonicalize, RigidAndVerticalPreserving) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomScene s = random_scene(rng);
    const auto out = canonicalize_sequence(s.poses, s.points);
    // Brute-force distance matrix over every point and camera centre.
    std::vector<Vec3> before, after;
    for (std::size_t t = 0; t < s.points.size(); ++t) {
      for (int j = 0; j < 7; ++j) {
        before.push_back(s.points[t].row(j).transpose());
        after.push_back(out.points[t].row(j).transpose());
      }
      before.push_back(s.poses[t].translation);
      after.push_back(out.poses[t].translation);
    }
    for (std::size_t a = 0; a < before.size(); ++a) {
      EXPECT_NEAR(before[a].z(), after[a].z(), 0.0);
      for (std::size_t b = a + 1; b < before.size(); ++b) {
        EXPECT_NEAR(oracle::dist3(before[a].data(), before[b].data()),
                    oracle::dist3(after[a].data(), after[b].data()), 1e-9);
      }
    }
    const CameraPose& c0 = out.poses.front();
    EXPECT_NEAR(yaw_of(c0.rotation_matrix()), 0.0, 1e-9);
    EXPECT_NEAR(c0.translation.head<2>().norm(), 0.0, 1e-9);
    // camera-frame coordinates of every point are unchanged
    for (std::size_t t = 0; t < s.points.size(); ++t) {
      for (int j = 0; j < 7; ++j) {
        const Vec3 a = s.poses[t].world_to_camera(s.points[t].row(j).transpose());
        const Vec3 b = out.poses[t].world_to_camera(out.points[t].row(j).transpose());
        EXPECT_LT((a - b).norm(), 1e-9);
      }
    }
  }
}

TEST(Canonicalize, InverseRecoversInput) {
  std::mt19937_64 rng(4);
  const RandomScene s = random_scene(rng);
  const auto out = canonicalize_sequence(s.poses, s.points);
  for (std::size_t t = 0; t < s.points.size(); ++t) {
    EXPECT_LT((out.transform.invert(out.points[t]) - s.points[t]).cwiseAbs().maxCoeff(), 1e-9);
    const CameraPose back = out.transform.invert(out.poses[t]);
    EXPECT_LT((back.rotation_matrix() - s.poses[t].rotation_matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((back.translation - s.poses[t].translation).norm(), 1e-9);
  }
}

TEST(Canonicalize, Idempotent) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomScene s = random_scene(rng);
    const auto once = canonicalize_sequence(s.poses, s.points);
    const auto twice = canonicalize_sequence(once.poses, once.points);
    for (std::size_t t = 0; t < s.points.size(); ++t) {
      EXPECT_LT((twice.points[t] - once.points[t]).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((twice.poses[t].translation - once.poses[t].translation).norm(), 1e-9);
    }
  }
}

TEST(Canonicalize, CanonicalInputIsBitwiseFixed) {
  std::mt19937_64 rng(23);
  const RandomScene s = random_scene(rng);
  const auto once = canonicalize_sequence(s.poses, s.points);
  const auto twice = canonicalize_sequence(once.poses, once.points);
  EXPECT_TRUE(twice.transform.is_identity());
  for (std::size_t t = 0; t < s.points.size(); ++t) {
    EXPECT_EQ(twice.points[t], once.points[t]);
    EXPECT_EQ(twice.poses[t], once.poses[t]);
  }
}

TEST(Yaw, MatrixAndHeading) {
  for (double a : {-3.0, -1.0, 0.0, 0.5, 2.9}) {
    EXPECT_NEAR(yaw_of(yaw_matrix(a)), a, 1e-12);
    EXPECT_LT((yaw_matrix(a) - rot_z(a)).cwiseAbs().maxCoeff(), 1e-15);
  }
}
