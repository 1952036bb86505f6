#pragma once

#include <algorithm>
#include <limits>

#include "kdeq/grid.hpp"

namespace kdeq {

struct MetricsTriple {
  double nmse = 0;  ///< ||rec-ref||_F^2 / ||ref||_F^2
  double psnr = 0;  ///< dB; +infinity when rec == ref exactly
  double ssim = 0;  ///< mean windowed SSIM, in [-1, 1]
};

/// Root-sum-of-squares coil combination: out(r,c) = sqrt(sum_c |x(r,c,coil)|^2).
/// Invariant under per-coil global phase, which is why it stands in for
/// sensitivity-map merging here.
inline RealField coil_combine_rss(const ImageGrid& img) {
  RealField out(img.rows(), img.cols(), 1);
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      double s = 0;
      for (int k = 0; k < img.coils(); ++k) s += std::norm(img.at(r, c, k));
      out.at(r, c, 0) = std::sqrt(s);
    }
  }
  return out;
}

namespace detail {

/// Mean SSIM with a Gaussian window (sigma 1.5, nominal 11x11, K1=0.01,
/// K2=0.03, dynamic range max(ref)). The map is evaluated only where the full
/// window fits; grids smaller than 11 get a window shrunk to fit.
inline double ssim_mean(const RealField& ref, const RealField& rec) {
  const int n1 = ref.rows(), n2 = ref.cols();
  int w1 = std::min(11, n1), w2 = std::min(11, n2);
  if (w1 % 2 == 0) --w1;
  if (w2 % 2 == 0) --w2;

  std::vector<double> win(static_cast<std::size_t>(w1) * w2);
  const double sigma = 1.5;
  double wsum = 0;
  for (int i = 0; i < w1; ++i) {
    for (int j = 0; j < w2; ++j) {
      const double di = i - (w1 - 1) / 2.0, dj = j - (w2 - 1) / 2.0;
      const double v = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      win[static_cast<std::size_t>(i) * w2 + j] = v;
      wsum += v;
    }
  }
  for (double& v : win) v /= wsum;

  double dyn = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) dyn = std::max(dyn, std::abs(ref[i]));
  const double c1 = (0.01 * dyn) * (0.01 * dyn);
  const double c2 = (0.03 * dyn) * (0.03 * dyn);

  double acc = 0;
  long count = 0;
  for (int r = 0; r + w1 <= n1; ++r) {
    for (int c = 0; c + w2 <= n2; ++c) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int i = 0; i < w1; ++i) {
        for (int j = 0; j < w2; ++j) {
          const double w = win[static_cast<std::size_t>(i) * w2 + j];
          const double a = ref.at(r + i, c + j, 0);
          const double b = rec.at(r + i, c + j, 0);
          mx += w * a;
          my += w * b;
          xx += w * a * a;
          yy += w * b * b;
          xy += w * a * b;
        }
      }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cov = xy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return count > 0 ? acc / count : 1.0;
}

}  // namespace detail

/// Reference-vs-reconstruction quality metrics on combined (real) images.
/// A perfect reconstruction reports nmse 0, ssim 1 and psnr = +inf sentinel.
inline MetricsTriple metrics(const RealField& ref, const RealField& rec) {
  detail::require(ref.same_shape(rec), "metrics: shape mismatch");
  const double ref_energy = squared_norm(ref);
  detail::require(ref_energy > 0, "metrics: zero-norm reference");

  double err = 0, peak = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = rec[i] - ref[i];
    err += d * d;
    peak = std::max(peak, std::abs(ref[i]));
  }

  MetricsTriple m;
  m.nmse = err / ref_energy;
  const double mse = err / static_cast<double>(ref.size());
  m.psnr = mse > 0 ? 10.0 * std::log10(peak * peak / mse)
                   : std::numeric_limits<double>::infinity();
  m.ssim = detail::ssim_mean(ref, rec);
  return m;
}

}  // namespace kdeq
