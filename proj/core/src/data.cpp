#include "handcast/data.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "handcast/errors.hpp"

namespace handcast {

using Json = nlohmann::ordered_json;

const char* side_name(Side s) { return s == Side::kLeft ? "left" : "right"; }

JointFrame JointFrame::zeros(int n_joints) {
  JointFrame f;
  f.joints = Points::Zero(n_joints, 3);
  f.mask.assign(static_cast<std::size_t>(n_joints), false);
  return f;
}

void JointFrame::zero_masked() {
  for (int j = 0; j < size(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) joints.row(j).setZero();
  }
}

void HandObservation2D::set(Side s, const Vec2& loc, bool vis) {
  if (s == Side::kLeft) {
    left = loc;
    left_visible = vis;
  } else {
    right = loc;
    right_visible = vis;
  }
}

void HandObservation2D::validate() const {
  for (Side s : kSides) {
    const Vec2& c = location(s);
    if (visible(s)) {
      if (!(c.x() >= 0.0 && c.x() <= 1.0 && c.y() >= 0.0 && c.y() <= 1.0)) {
        throw ContractError(std::string(side_name(s)) +
                            " hand marked visible but its location is outside [0,1]^2");
      }
    } else if (c != kInvisible2D) {
      throw ContractError(std::string(side_name(s)) +
                          " hand marked invisible but its location is not (-1,-1)");
    }
  }
}

bool operator==(const Sequence& a, const Sequence& b) {
  if (a.id != b.id || a.activity != b.activity || !(a.intrinsics == b.intrinsics) ||
      !(a.image_size == b.image_size) || a.obs_poses != b.obs_poses ||
      a.obs_hands2d != b.obs_hands2d || a.obs_joints != b.obs_joints ||
      a.fut_joints != b.fut_joints || a.obs_features.size() != b.obs_features.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.obs_features.size(); ++i) {
    if (a.obs_features[i].size() != b.obs_features[i].size() ||
        a.obs_features[i] != b.obs_features[i]) {
      return false;
    }
  }
  return true;
}

namespace {

struct RecordError {
  std::string message;
};

[[noreturn]] void fail(const std::string& msg) { throw RecordError{msg}; }

const Json& field(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(std::string("missing field '") + key + "'");
  return *it;
}

std::vector<double> numbers(const Json& j, std::size_t expected, const char* what) {
  if (!j.is_array()) fail(std::string(what) + " is not an array");
  if (j.size() != expected) {
    fail(std::string(what) + " has " + std::to_string(j.size()) + " entries, expected " +
         std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : j) {
    if (!v.is_number()) fail(std::string(what) + " contains a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

Json vec_json(const double* data, int n) {
  Json arr = Json::array();
  for (int i = 0; i < n; ++i) arr.push_back(data[i]);
  return arr;
}

Json joints_json(const JointFrame& f) {
  Json arr = Json::array();
  for (int j = 0; j < f.size(); ++j) {
    arr.push_back(Json::array({f.joints(j, 0), f.joints(j, 1), f.joints(j, 2)}));
  }
  return arr;
}

Json mask_json(const JointFrame& f) {
  Json arr = Json::array();
  for (bool m : f.mask) arr.push_back(m);
  return arr;
}

JointFrame parse_joint_frame(const Json& obj, int J) {
  const Json& jj = field(obj, "joints");
  const Json& jm = field(obj, "joint_mask");
  if (!jj.is_array() || static_cast<int>(jj.size()) != J) {
    fail("dimension mismatch: record has " + std::to_string(jj.is_array() ? jj.size() : 0) +
         " joints, expected " + std::to_string(J));
  }
  if (!jm.is_array() || static_cast<int>(jm.size()) != J) {
    fail("dimension mismatch: joint_mask length differs from " + std::to_string(J));
  }
  JointFrame f = JointFrame::zeros(J);
  for (int j = 0; j < J; ++j) {
    const auto p = numbers(jj[static_cast<std::size_t>(j)], 3, "joint");
    f.joints.row(j) << p[0], p[1], p[2];
    const Json& m = jm[static_cast<std::size_t>(j)];
    if (!m.is_boolean()) fail("joint_mask entries must be booleans");
    f.mask[static_cast<std::size_t>(j)] = m.get<bool>();
  }
  f.zero_masked();
  return f;
}

Sequence parse_record_impl(const std::string& line, const DatasetShape& shape,
                           std::string& id_out) {
  Json rec;
  try {
    rec = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(std::string("malformed record: ") + e.what());
  }
  if (!rec.is_object()) fail("record is not an object");
  if (auto it = rec.find("id"); it != rec.end() && it->is_string()) id_out = it->get<std::string>();

  const Json& version = field(rec, "v");
  if (!version.is_string() || version.get<std::string>() != kDatasetVersion) {
    fail("unsupported schema version");
  }
  Sequence seq;
  seq.id = field(rec, "id").get<std::string>();
  seq.activity = field(rec, "activity").get<std::string>();
  const auto K = numbers(field(rec, "intrinsics"), 4, "intrinsics");
  seq.intrinsics = {K[0], K[1], K[2], K[3]};
  const Json& size = field(rec, "image_size");
  if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() ||
      !size[1].is_number_integer()) {
    fail("image_size must be two integers");
  }
  seq.image_size = {size[0].get<int>(), size[1].get<int>()};

  const Json& obs = field(rec, "obs");
  const Json& fut = field(rec, "fut");
  if (!obs.is_array() || static_cast<int>(obs.size()) != shape.T) {
    fail("dimension mismatch: expected " + std::to_string(shape.T) + " observation frames, got " +
         std::to_string(obs.is_array() ? obs.size() : 0));
  }
  if (!fut.is_array() || static_cast<int>(fut.size()) != shape.F) {
    fail("dimension mismatch: expected " + std::to_string(shape.F) + " future frames, got " +
         std::to_string(fut.is_array() ? fut.size() : 0));
  }

  int J = shape.J;
  if (J < 0 && !obs.empty()) {
    const Json& first = field(obs[0], "joints");
    J = first.is_array() ? static_cast<int>(first.size()) : 0;
  }
  int feature_dim = shape.feature_dim;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    const Json& fr = obs[t];
    CameraPose pose;
    const auto r6 = numbers(field(fr, "pose_r6"), 6, "pose_r6");
    std::copy(r6.begin(), r6.end(), pose.rotation.r.begin());
    const auto pt = numbers(field(fr, "pose_t"), 3, "pose_t");
    pose.translation = Vec3(pt[0], pt[1], pt[2]);
    pose.intrinsics = seq.intrinsics;
    pose.image_size = seq.image_size;
    try {
      pose.validate();
      (void)pose.rotation_matrix();
    } catch (const Error& e) {
      fail(std::string("frame ") + std::to_string(t) + ": " + e.what());
    }
    seq.obs_poses.push_back(pose);

    HandObservation2D h;
    const auto l = numbers(field(fr, "hand2d_l"), 2, "hand2d_l");
    const auto r = numbers(field(fr, "hand2d_r"), 2, "hand2d_r");
    const Json& vl = field(fr, "vis_l");
    const Json& vr = field(fr, "vis_r");
    if (!vl.is_boolean() || !vr.is_boolean()) fail("visibility flags must be booleans");
    h.set(Side::kLeft, Vec2(l[0], l[1]), vl.get<bool>());
    h.set(Side::kRight, Vec2(r[0], r[1]), vr.get<bool>());
    try {
      h.validate();
    } catch (const Error& e) {
      fail(std::string("frame ") + std::to_string(t) + ": " + e.what());
    }
    seq.obs_hands2d.push_back(h);

    const Json& feat = field(fr, "feat");
    if (!feat.is_array()) fail("feat is not an array");
    if (feature_dim < 0) feature_dim = static_cast<int>(feat.size());
    const auto fv = numbers(feat, static_cast<std::size_t>(feature_dim), "feat");
    seq.obs_features.push_back(Eigen::Map<const Eigen::VectorXd>(fv.data(), feature_dim));

    seq.obs_joints.push_back(parse_joint_frame(fr, J));
  }
  for (const Json& fr : fut) seq.fut_joints.push_back(parse_joint_frame(fr, J));
  return canonicalize(seq);
}

}  // namespace

std::string serialize_record(const Sequence& seq) {
  Json rec;
  rec["v"] = kDatasetVersion;
  rec["id"] = seq.id;
  rec["activity"] = seq.activity;
  rec["intrinsics"] = Json::array(
      {seq.intrinsics.fx, seq.intrinsics.fy, seq.intrinsics.cx, seq.intrinsics.cy});
  rec["image_size"] = Json::array({seq.image_size.width, seq.image_size.height});
  Json obs = Json::array();
  for (int t = 0; t < seq.T(); ++t) {
    const auto ut = static_cast<std::size_t>(t);
    Json fr;
    fr["pose_r6"] = vec_json(seq.obs_poses[ut].rotation.r.data(), 6);
    fr["pose_t"] = vec_json(seq.obs_poses[ut].translation.data(), 3);
    fr["hand2d_l"] = vec_json(seq.obs_hands2d[ut].left.data(), 2);
    fr["hand2d_r"] = vec_json(seq.obs_hands2d[ut].right.data(), 2);
    fr["vis_l"] = seq.obs_hands2d[ut].left_visible;
    fr["vis_r"] = seq.obs_hands2d[ut].right_visible;
    fr["feat"] = vec_json(seq.obs_features[ut].data(), static_cast<int>(seq.obs_features[ut].size()));
    fr["joints"] = joints_json(seq.obs_joints[ut]);
    fr["joint_mask"] = mask_json(seq.obs_joints[ut]);
    obs.push_back(std::move(fr));
  }
  rec["obs"] = std::move(obs);
  Json fut = Json::array();
  for (const auto& f : seq.fut_joints) {
    Json fr;
    fr["joints"] = joints_json(f);
    fr["joint_mask"] = mask_json(f);
    fut.push_back(std::move(fr));
  }
  rec["fut"] = std::move(fut);
  return rec.dump();
}

Sequence parse_record(const std::string& line, const DatasetShape& shape,
                      std::size_t line_number) {
  std::string id;
  try {
    return parse_record_impl(line, shape, id);
  } catch (const RecordError& e) {
    std::ostringstream msg;
    msg << "line " << line_number << " (record '" << id << "'): " << e.message;
    throw LoadError(msg.str(), line_number, id);
  } catch (const nlohmann::json::exception& e) {
    std::ostringstream msg;
    msg << "line " << line_number << " (record '" << id << "'): " << e.what();
    throw LoadError(msg.str(), line_number, id);
  }
}

std::vector<Sequence> load_dataset(const std::filesystem::path& path, const DatasetShape& shape) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path.string());
  std::vector<Sequence> seqs;
  std::string line;
  std::size_t line_number = 0;
  std::vector<std::string> problems;
  std::size_t first_line = 0;
  std::string first_id;
  DatasetShape effective = shape;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      seqs.push_back(parse_record(line, effective, line_number));
      if (effective.feature_dim < 0 && !seqs.back().obs_features.empty()) {
        effective.feature_dim = static_cast<int>(seqs.back().obs_features.front().size());
      }
      if (effective.J < 0) effective.J = seqs.back().J();
    } catch (const LoadError& e) {
      if (problems.empty()) {
        first_line = e.line();
        first_id = e.record_id();
      }
      problems.emplace_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": " + std::to_string(problems.size()) + " invalid record(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw LoadError(msg, first_line, first_id);
  }
  return seqs;
}

void save_dataset(const std::filesystem::path& path, const std::vector<Sequence>& seqs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset file: " + path.string());
  for (const auto& s : seqs) out << serialize_record(s) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Sequence canonicalize(const Sequence& seq) {
  std::vector<Points> pts;
  pts.reserve(seq.obs_joints.size() + seq.fut_joints.size());
  for (const auto& f : seq.obs_joints) pts.push_back(f.joints);
  for (const auto& f : seq.fut_joints) pts.push_back(f.joints);
  auto canon = canonicalize_sequence(seq.obs_poses, pts);
  if (canon.transform.is_identity()) return seq;
  Sequence out = seq;
  out.obs_poses = std::move(canon.poses);
  std::size_t k = 0;
  for (auto& f : out.obs_joints) {
    f.joints = canon.points[k++];
    f.zero_masked();
  }
  for (auto& f : out.fut_joints) {
    f.joints = canon.points[k++];
    f.zero_masked();
  }
  return out;
}

Vec2 normalize_2d(const Vec2& pixel, const ImageSize& image_size, bool visible) {
  if (!visible) return kInvisible2D;
  if (!(pixel.x() >= 0.0 && pixel.x() < image_size.width && pixel.y() >= 0.0 &&
        pixel.y() < image_size.height)) {
    throw ContractError("inconsistent visibility: visible pixel lies outside the image");
  }
  return {pixel.x() / image_size.width, pixel.y() / image_size.height};
}

bool side_in_view(const Sequence& seq, Side side) {
  for (const auto& h : seq.obs_hands2d) {
    if (!h.visible(side)) return false;
  }
  return true;
}

ViewPartition partition_by_view(const std::vector<Sequence>& seqs) {
  ViewPartition p;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (Side s : kSides) {
      (side_in_view(seqs[i], s) ? p.in_view : p.out_of_view).push_back({i, s});
    }
  }
  return p;
}

DatasetStats compute_stats(const std::vector<Sequence>& train) {
  if (train.empty()) throw ContractError("cannot compute statistics of an empty training set");
  const int J = train.front().J();
  Points sum = Points::Zero(J, 3);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(J);
  std::size_t frames = 0;
  auto accumulate = [&](const JointFrame& f) {
    if (f.size() != J) throw ContractError("inconsistent joint count across training set");
    bool any = false;
    for (int j = 0; j < J; ++j) {
      if (!f.mask[static_cast<std::size_t>(j)]) continue;
      sum.row(j) += f.joints.row(j);
      counts[j] += 1.0;
      any = true;
    }
    if (any) ++frames;
  };
  for (const auto& s : train) {
    for (const auto& f : s.obs_joints) accumulate(f);
    for (const auto& f : s.fut_joints) accumulate(f);
  }
  std::string missing;
  for (int j = 0; j < J; ++j) {
    if (counts[j] == 0.0) missing += (missing.empty() ? "" : ", ") + std::to_string(j);
  }
  if (!missing.empty()) throw ContractError("joints never annotated in training set: " + missing);
  DatasetStats stats;
  stats.mean_pose = sum.array().colwise() / counts.array();
  stats.count = frames;
  return stats;
}

}  // namespace handcast
