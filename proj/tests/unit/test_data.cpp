#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "handcast/data.hpp"
#include "handcast/errors.hpp"

using namespace handcast;
using json = nlohmann::ordered_json;

namespace {

const JointLayout kFull;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::binary);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST(Layout, WristConstants) {
  EXPECT_EQ(kFull.joints(), kNumJoints);
  EXPECT_EQ(kFull.left_wrist(), kLeftWrist);
  EXPECT_EQ(kFull.right_wrist(), kRightWrist);
  EXPECT_EQ(kLeftWrist, 15);
  EXPECT_EQ(kRightWrist, 36);
  EXPECT_EQ(kNumJoints, 57);
}

TEST(Normalize2D, Examples) {
  EXPECT_EQ(normalize_2d({50, 50}, {100, 100}, true), Vec2(0.5, 0.5));
  EXPECT_EQ(normalize_2d({0, 0}, {100, 100}, true), Vec2(0, 0));
  EXPECT_EQ(normalize_2d({50, 50}, {100, 100}, false), kInvisible2D);
  EXPECT_EQ(normalize_2d({1e6, -4}, {100, 100}, false), Vec2(-1, -1));
}

TEST(Normalize2D, VisibleOutOfBoundsThrows) {
  EXPECT_THROW(normalize_2d({100, 50}, {100, 100}, true), ContractError);
  EXPECT_THROW(normalize_2d({-1, 50}, {100, 100}, true), ContractError);
}

TEST(HandObservation2D, SentinelContract) {
  HandObservation2D h;
  EXPECT_NO_THROW(h.validate());
  h.set(Side::kLeft, {0.2, 0.3}, true);
  EXPECT_NO_THROW(h.validate());
  h.left_visible = false;  // visible coordinates with invisible flag
  EXPECT_THROW(h.validate(), ContractError);
  HandObservation2D g;
  g.right_visible = true;  // visible flag with the sentinel
  EXPECT_THROW(g.validate(), ContractError);
}

TEST(Dataset, LoadThreeValidRecords) {
  fixture::TempDir dir("data3");
  std::vector<Sequence> seqs;
  for (int i = 0; i < 3; ++i) seqs.push_back(fixture::random_sequence(20, 10, kFull, 8, 100 + i));
  save_dataset(dir / "d.jsonl", seqs);
  const auto loaded = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(loaded.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(loaded[static_cast<std::size_t>(i)], seqs[static_cast<std::size_t>(i)]);
}

TEST(Dataset, RoundTripIsByteIdentical) {
  fixture::TempDir dir("rt");
  std::vector<Sequence> seqs;
  for (int i = 0; i < 4; ++i) seqs.push_back(fixture::random_sequence(20, 10, kFull, 5, 7 + i, true));
  save_dataset(dir / "a.jsonl", seqs);
  save_dataset(dir / "b.jsonl", load_dataset(dir / "a.jsonl"));
  EXPECT_EQ(read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));
}

TEST(Dataset, MissingFileIsIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/handcast.jsonl"), IoError);
}

TEST(Dataset, WrongJointCountNamesRecord) {
  fixture::TempDir dir("j56");
  const Sequence good = fixture::random_sequence(20, 10, kFull, 4, 1);
  json bad = json::parse(serialize_record(fixture::random_sequence(20, 10, kFull, 4, 2)));
  bad["id"] = "short_one";
  for (auto& f : bad["obs"]) {
    f["joints"].erase(f["joints"].size() - 1);
    f["joint_mask"].erase(f["joint_mask"].size() - 1);
  }
  write_lines(dir / "d.jsonl", {serialize_record(good), bad.dump()});
  try {
    load_dataset(dir / "d.jsonl");
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.record_id(), "short_one");
    EXPECT_NE(std::string(e.what()).find("short_one"), std::string::npos);
  }
}

TEST(Dataset, VisibleFlagWithSentinelRejected) {
  json rec = json::parse(serialize_record(fixture::random_sequence(20, 10, kFull, 4, 3)));
  rec["obs"][0]["vis_l"] = true;
  rec["obs"][0]["hand2d_l"] = json::array({-1.0, -1.0});
  EXPECT_THROW(parse_record(rec.dump()), LoadError);
}

TEST(Dataset, FrameCountMismatchRejected) {
  json rec = json::parse(serialize_record(fixture::random_sequence(20, 10, kFull, 4, 4)));
  rec["fut"].erase(0);
  EXPECT_THROW(parse_record(rec.dump()), LoadError);
  DatasetShape shape;
  shape.F = 9;
  EXPECT_NO_THROW(parse_record(rec.dump(), shape));
}

TEST(Dataset, ReportsEveryInvalidRecord) {
  fixture::TempDir dir("multi");
  const std::string good = serialize_record(fixture::random_sequence(20, 10, kFull, 4, 5));
  write_lines(dir / "d.jsonl", {good, "{not json", good, "{\"v\":\"v0\"}"});
  try {
    load_dataset(dir / "d.jsonl");
    FAIL();
  } catch (const LoadError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2 invalid"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
  }
}

TEST(Dataset, LoadCanonicalizes) {
  Sequence s = fixture::random_sequence(20, 10, kFull, 4, 6);
  // Move the whole scene by a rigid yaw + offset; loading must undo it.
  CanonicalTransform tf{0.7, Vec2(2.0, -1.0)};
  Sequence moved = s;
  for (auto& p : moved.obs_poses) p = tf.invert(p);
  for (auto& f : moved.obs_joints) f.joints = tf.invert(f.joints);
  for (auto& f : moved.fut_joints) f.joints = tf.invert(f.joints);
  const Sequence back = parse_record(serialize_record(moved));
  for (std::size_t t = 0; t < s.obs_joints.size(); ++t) {
    EXPECT_LT((back.obs_joints[t].joints - s.obs_joints[t].joints).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Dataset, MaskedJointsZeroFilledOnLoad) {
  json rec = json::parse(serialize_record(fixture::random_sequence(20, 10, kFull, 4, 8)));
  rec["fut"][0]["joint_mask"][3] = false;
  const Sequence s = parse_record(rec.dump());
  EXPECT_EQ(s.fut_joints[0].joints.row(3), Eigen::RowVector3d::Zero());
}

namespace {

Sequence with_visibility(int visible_left_frames) {
  Sequence s = fixture::random_sequence(20, 10, kFull, 2, 9);
  for (int t = 0; t < 20; ++t) {
    auto& h = s.obs_hands2d[static_cast<std::size_t>(t)];
    h.set(Side::kLeft, t < visible_left_frames ? Vec2(0.5, 0.5) : kInvisible2D, t < visible_left_frames);
    h.set(Side::kRight, kInvisible2D, false);
  }
  return s;
}

}  // namespace

TEST(Partition, AllFramesVisibleIsInView) {
  const auto p = partition_by_view({with_visibility(20)});
  ASSERT_EQ(p.in_view.size(), 1u);
  EXPECT_EQ(p.in_view[0], (SideRef{0, Side::kLeft}));
  ASSERT_EQ(p.out_of_view.size(), 1u);
  EXPECT_EQ(p.out_of_view[0], (SideRef{0, Side::kRight}));
}

TEST(Partition, OneHiddenFrameIsOutOfView) {
  const auto p = partition_by_view({with_visibility(19)});
  EXPECT_TRUE(p.in_view.empty());
  EXPECT_EQ(p.out_of_view.size(), 2u);
}

TEST(Partition, EmptyInput) {
  const auto p = partition_by_view({});
  EXPECT_TRUE(p.in_view.empty());
  EXPECT_TRUE(p.out_of_view.empty());
}

TEST(Partition, CoversEveryPairOnce) {
  std::vector<Sequence> seqs;
  for (int i = 0; i < 12; ++i) seqs.push_back(fixture::random_sequence(20, 10, kFull, 2, 50 + i));
  const auto p = partition_by_view(seqs);
  std::vector<int> seen(seqs.size() * 2, 0);
  for (const auto& r : p.in_view) ++seen[r.sequence * 2 + static_cast<std::size_t>(r.side)];
  for (const auto& r : p.out_of_view) ++seen[r.sequence * 2 + static_cast<std::size_t>(r.side)];
  for (int c : seen) EXPECT_EQ(c, 1);
}

namespace {

Sequence constant_pose_sequence(const Points& pose) {
  Sequence s = fixture::random_sequence(2, 1, kFull, 1, 10);
  for (auto* frames : {&s.obs_joints, &s.fut_joints}) {
    for (auto& f : *frames) {
      f.joints = pose;
      f.mask.assign(static_cast<std::size_t>(kFull.joints()), true);
    }
  }
  return s;
}

}  // namespace

TEST(Stats, ConstantPose) {
  Points pose(kFull.joints(), 3);
  for (int j = 0; j < pose.rows(); ++j) pose.row(j) << j, 2.0 * j, -j;
  const DatasetStats st = compute_stats({constant_pose_sequence(pose)});
  EXPECT_LT((st.mean_pose - pose).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(st.count, 3u);
}

TEST(Stats, TwoFramesAverage) {
  Points a = Points::Zero(kFull.joints(), 3);
  Sequence s = constant_pose_sequence(a);
  s.obs_joints[1].joints(4, 0) = 2.0;
  s.fut_joints[0].mask[4] = false;
  s.fut_joints[0].zero_masked();
  const DatasetStats st = compute_stats({s});
  EXPECT_DOUBLE_EQ(st.mean_pose(4, 0), 1.0);
}

TEST(Stats, MaskedFramesExcluded) {
  Sequence s = constant_pose_sequence(Points::Zero(kFull.joints(), 3));
  s.obs_joints[0].mask[4] = false;
  s.fut_joints[0].mask[4] = false;
  s.obs_joints[1].joints(4, 0) = 2.0;
  const DatasetStats st = compute_stats({s});
  EXPECT_DOUBLE_EQ(st.mean_pose(4, 0), 2.0);
}

TEST(Stats, NeverAnnotatedJointNamed) {
  Sequence s = constant_pose_sequence(Points::Zero(kFull.joints(), 3));
  for (auto* frames : {&s.obs_joints, &s.fut_joints})
    for (auto& f : *frames) f.mask[17] = false;
  try {
    compute_stats({s});
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}
