#pragma once

// Independent reference implementations used by the tests. Written with
// explicit loops over plain arrays; nothing here calls into the library
// routines under test.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

namespace oracle {

using Mat3 = Eigen::Matrix3d;

// Haar-ish random rotation: QR of a Gaussian matrix with sign fixes.
inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat3 A;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A(i, j) = n(rng);
  Eigen::HouseholderQR<Mat3> qr(A);
  Mat3 Q = qr.householderQ();
  Mat3 R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < 3; ++j) {
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  }
  if (Q.determinant() < 0) Q.col(2) *= -1.0;
  return Q;
}

inline double dist3(const double* a, const double* b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// Frames of joints as nested vectors: [frame][joint][coord].
using Frames = std::vector<std::vector<std::vector<double>>>;
using Masks = std::vector<std::vector<bool>>;

inline double ade(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& g) {
  double s = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) s += dist3(p[t].data(), g[t].data());
  return s / static_cast<double>(g.size());
}

inline double fde(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& g) {
  return dist3(p.back().data(), g.back().data());
}

inline double mpjpe(const Frames& p, const Frames& g, const Masks& m, std::size_t first = 0) {
  double s = 0.0;
  int n = 0;
  for (std::size_t t = first; t < g.size(); ++t)
    for (std::size_t j = 0; j < g[t].size(); ++j)
      if (m[t][j]) {
        s += dist3(p[t][j].data(), g[t][j].data());
        ++n;
      }
  return n ? s / n : std::nan("");
}

inline double mpjve(const Frames& p, const Frames& g, const Masks& m, double fps) {
  double s = 0.0;
  int n = 0;
  for (std::size_t t = 1; t < g.size(); ++t)
    for (std::size_t j = 0; j < g[t].size(); ++j)
      if (m[t][j] && m[t - 1][j]) {
        double e = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double vp = (p[t][j][k] - p[t - 1][j][k]) * fps;
          const double vg = (g[t][j][k] - g[t - 1][j][k]) * fps;
          e += (vp - vg) * (vp - vg);
        }
        s += std::sqrt(e);
        ++n;
      }
  return n ? s / n : std::nan("");
}

inline double wrist_relative(const std::vector<std::vector<double>>& p,
                             const std::vector<std::vector<double>>& g, const std::vector<bool>& m) {
  double s = 0.0;
  int n = 0;
  for (std::size_t j = 1; j < g.size(); ++j) {
    if (!m[j]) continue;
    double e = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = (p[j][k] - p[0][k]) - (g[j][k] - g[0][k]);
      e += d * d;
    }
    s += std::sqrt(e);
    ++n;
  }
  return n ? s / n : std::nan("");
}

// Cumulative products of 1 - beta over a linear ramp, in long double.
inline std::vector<long double> alpha_bar_linear(int N, double b0, double b1) {
  std::vector<long double> out(static_cast<std::size_t>(N) + 1, 1.0L);
  for (int n = 1; n <= N; ++n) {
    const long double beta = N == 1 ? b0 : b0 + (b1 - b0) * static_cast<long double>(n - 1) / (N - 1);
    out[static_cast<std::size_t>(n)] = out[static_cast<std::size_t>(n) - 1] * (1.0L - beta);
  }
  return out;
}

inline double bce(double p, bool y) { return y ? -std::log(p) : -std::log(1.0 - p); }

}  // namespace oracle
