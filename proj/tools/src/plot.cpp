#include "handcast_cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "handcast/errors.hpp"
#include "handcast/geometry.hpp"
#include "handcast_cli/commands.hpp"

namespace handcast::cli {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();
  void add(double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  // Square, padded extent.
  void finish(double pad) {
    if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0.0;
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
    const double half = 0.5 * std::max({x1 - x0, y1 - y0, 0.1}) + pad;
    x0 = cx - half;
    x1 = cx + half;
    y0 = cy - half;
    y1 = cy + half;
  }
};

Vec3 point(const nlohmann::json& p) { return {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()}; }

int wrist_index(const nlohmann::json& f, int side) {
  const int J = f["J"].get<int>();
  const int n_hand = f["n_hand"].get<int>();
  return J - 2 * n_hand + side * n_hand;
}

}  // namespace

Svg::Svg(double width, double height, double x0, double x1, double y0, double y1, bool flip_y)
    : w_(width), h_(height), x0_(x0), x1_(x1), y0_(y0), y1_(y1), flip_(flip_y) {}

double Svg::px(double x) const { return 50.0 + (x - x0_) / (x1_ - x0_) * (w_ - 70.0); }
double Svg::py(double y) const {
  const double s = (y - y0_) / (y1_ - y0_);
  return 20.0 + (flip_ ? 1.0 - s : s) * (h_ - 60.0);
}

void Svg::polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                   double stroke, bool dashed) {
  if (pts.empty()) return;
  body_ += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + num(stroke) + "\"";
  if (dashed) body_ += " stroke-dasharray=\"5,3\"";
  body_ += " points=\"";
  for (const auto& [x, y] : pts) body_ += num(px(x)) + "," + num(py(y)) + " ";
  body_ += "\"/>\n";
}

void Svg::circle(double x, double y, double r, const std::string& fill) {
  body_ += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"" + num(r) +
           "\" fill=\"" + fill + "\"/>\n";
}

void Svg::rect(double x0, double y0, double x1, double y1, const std::string& stroke) {
  const double a = px(x0), b = px(x1), c = py(y0), d = py(y1);
  body_ += "<rect x=\"" + num(std::min(a, b)) + "\" y=\"" + num(std::min(c, d)) + "\" width=\"" +
           num(std::abs(b - a)) + "\" height=\"" + num(std::abs(d - c)) +
           "\" fill=\"none\" stroke=\"" + stroke + "\"/>\n";
}

void Svg::text(double x, double y, const std::string& s, double size) {
  body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
           num(size) + "\">" + escape(s) + "</text>\n";
}

void Svg::axes(const std::string& x_label, const std::string& y_label) {
  body_ += "<rect x=\"50\" y=\"20\" width=\"" + num(w_ - 70.0) + "\" height=\"" + num(h_ - 60.0) +
           "\" fill=\"none\" stroke=\"#888\"/>\n";
  text(50.0, h_ - 22.0, num(x0_), 10);
  text(w_ - 50.0, h_ - 22.0, num(x1_), 10);
  text(4.0, flip_ ? h_ - 40.0 : 30.0, num(y0_), 10);
  text(4.0, flip_ ? 30.0 : h_ - 40.0, num(y1_), 10);
  text(0.5 * w_, h_ - 6.0, x_label);
  text(4.0, 14.0, y_label);
}

std::string Svg::str() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) + "\" height=\"" + num(h_) +
         "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body_ + "</svg>\n";
}

void Svg::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  out << str();
  if (!out) throw IoError("cannot write " + path.string());
}

std::string plot_top_down(const nlohmann::json& f) {
  const int T = f["T"].get<int>();
  const auto& pred = f["pred"];
  const auto& gt = f["gt"];
  const int L = static_cast<int>(pred.size());
  Bounds b;
  for (int side = 0; side < 2; ++side) {
    const int w = wrist_index(f, side);
    for (int t = 0; t < L; ++t) {
      const Vec3 p = point(pred[t][w]), g = point(gt[t][w]);
      b.add(p.x(), p.y());
      b.add(g.x(), g.y());
    }
  }
  for (const auto& c : f["cameras"]) b.add(c["pose_t"][0].get<double>(), c["pose_t"][1].get<double>());
  b.finish(0.1);
  Svg svg(520, 540, b.x0, b.x1, b.y0, b.y1);
  svg.axes("x (m)", "y (m)");
  std::vector<std::pair<double, double>> cam;
  for (const auto& c : f["cameras"]) cam.emplace_back(c["pose_t"][0].get<double>(), c["pose_t"][1].get<double>());
  svg.polyline(cam, "#555", 1.0);
  for (const auto& [x, y] : cam) svg.circle(x, y, 1.5, "#555");
  for (int side = 0; side < 2; ++side) {
    const int w = wrist_index(f, side);
    const std::string color = kPalette[side];
    std::vector<std::pair<double, double>> obs, fut_gt, fut_pred;
    for (int t = 0; t < L; ++t) {
      const Vec3 g = point(gt[t][w]), p = point(pred[t][w]);
      if (t < T) obs.emplace_back(g.x(), g.y());
      if (t >= T - 1) {
        fut_gt.emplace_back(g.x(), g.y());
        fut_pred.emplace_back(p.x(), p.y());
      }
    }
    svg.polyline(obs, color, 1.0);
    svg.polyline(fut_gt, color, 2.0);
    svg.polyline(fut_pred, color, 2.0, true);
    if (!fut_pred.empty()) svg.circle(fut_pred.back().first, fut_pred.back().second, 3.0, color);
  }
  svg.text(60, 36, f["id"].get<std::string>() + " (" + f.value("activity", std::string()) + ")");
  svg.text(60, 52, "solid: ground truth, dashed: forecast, grey: camera", 10);
  return svg.str();
}

std::string plot_reprojection(const nlohmann::json& f) {
  const int T = f["T"].get<int>();
  const auto& cams = f["cameras"];
  if (cams.empty()) throw UsageError("forecast has no cameras");
  CameraPose cam;
  for (int i = 0; i < 6; ++i) cam.rotation.r[static_cast<std::size_t>(i)] = cams[T - 1]["pose_r6"][i].get<double>();
  cam.translation = point(cams[T - 1]["pose_t"]);
  const auto& K = f["intrinsics"];
  cam.intrinsics = {K[0].get<double>(), K[1].get<double>(), K[2].get<double>(), K[3].get<double>()};
  cam.image_size = {f["image_size"][0].get<int>(), f["image_size"][1].get<int>()};
  const double W = cam.image_size.width, H = cam.image_size.height;
  Svg svg(560, 580, -W, 2.0 * W, -H, 2.0 * H, false);
  svg.axes("u (px)", "v (px)");
  svg.rect(0.0, 0.0, W, H, "#000");
  const auto& pred = f["pred"];
  const auto& gt = f["gt"];
  const int L = static_cast<int>(pred.size());
  const int J = f["J"].get<int>();
  const int n_hand = f["n_hand"].get<int>();
  auto project = [&](const Vec3& x, std::pair<double, double>& uv) {
    const Vec3 c = cam.world_to_camera(x);
    if (c.z() < 1e-3) return false;
    const Projection p = project_point(cam, x);
    uv = {std::clamp(p.u, -W, 2.0 * W), std::clamp(p.v, -H, 2.0 * H)};
    return true;
  };
  for (int side = 0; side < 2; ++side) {
    const std::string color = kPalette[side];
    const int begin = J - 2 * n_hand + side * n_hand;
    for (const auto* frames : {&gt, &pred}) {
      const bool is_pred = frames == &pred;
      std::vector<std::pair<double, double>> track;
      for (int t = T - 1; t < L; ++t) {
        std::pair<double, double> uv;
        if (project(point((*frames)[t][begin]), uv)) track.push_back(uv);
      }
      svg.polyline(track, color, 2.0, is_pred);
      std::pair<double, double> uv;
      for (int j = begin; j < begin + n_hand; ++j) {
        if (project(point((*frames)[L - 1][j]), uv)) {
          svg.circle(uv.first, uv.second, is_pred ? 1.5 : 2.5, is_pred ? color : "#444");
        }
      }
    }
  }
  svg.text(60, 36, "last observed camera, image bounds in black");
  svg.text(60, 52, "solid: ground truth, dashed: forecast", 10);
  return svg.str();
}

std::string plot_per_timestep(const nlohmann::json& report) {
  if (!report.contains("methods") || report["methods"].empty()) {
    throw UsageError("report has no methods");
  }
  double y1 = 0.0;
  std::size_t F = 0;
  for (const auto& m : report["methods"]) {
    if (!m.contains("ade_per_timestep")) continue;
    F = std::max(F, m["ade_per_timestep"].size());
    for (const auto& v : m["ade_per_timestep"]) {
      if (v.is_number()) y1 = std::max(y1, v.get<double>());
    }
  }
  if (F == 0) throw UsageError("report has no per-timestep values");
  const double fps = report.value("fps", 10.0);
  Svg svg(560, 400, 1.0 / fps, static_cast<double>(F) / fps, 0.0, y1 > 0.0 ? 1.1 * y1 : 1.0);
  svg.axes("time after last observation (s)", "ADE (m)");
  int k = 0;
  for (const auto& m : report["methods"]) {
    std::vector<std::pair<double, double>> pts;
    const auto& series = m["ade_per_timestep"];
    for (std::size_t t = 0; t < series.size(); ++t) {
      if (series[t].is_number()) pts.emplace_back(static_cast<double>(t + 1) / fps, series[t].get<double>());
    }
    const std::string color = kPalette[k % 6];
    svg.polyline(pts, color, 2.0);
    for (const auto& [x, y] : pts) svg.circle(x, y, 2.5, color);
    svg.text(70, 40 + 16.0 * k, m["method"].get<std::string>(), 12);
    ++k;
  }
  return svg.str();
}

}  // namespace handcast::cli
