#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace handcast::cli {

// Minimal SVG canvas with a linear data-to-pixel mapping. Output is fully
// determined by the drawing calls.
class Svg {
 public:
  Svg(double width, double height, double x0, double x1, double y0, double y1,
      bool flip_y = true);

  double px(double x) const;
  double py(double y) const;
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double stroke = 1.5, bool dashed = false);
  void circle(double x, double y, double r, const std::string& fill);
  void rect(double x0, double y0, double x1, double y1, const std::string& stroke);
  // Pixel-space text.
  void text(double px, double py, const std::string& s, double size = 12.0);
  void axes(const std::string& x_label, const std::string& y_label);
  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  double w_, h_, x0_, x1_, y0_, y1_;
  bool flip_;
  std::string body_;
};

// Top-down (x, y) wrist trajectories and camera track of one forecast.
std::string plot_top_down(const nlohmann::json& forecast);
// Joints projected through the last observation camera onto an image plane
// expanded to three times its size so off-image points stay visible.
std::string plot_reprojection(const nlohmann::json& forecast);
// ADE against future timestep, one curve per method. Throws UsageError on a
// report without per-timestep values.
std::string plot_per_timestep(const nlohmann::json& report);

}  // namespace handcast::cli
