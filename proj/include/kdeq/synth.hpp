#pragma once

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "kdeq/hankel.hpp"
#include "kdeq/mask.hpp"
#include "kdeq/rng.hpp"

namespace kdeq {

/// Synthetic multi-coil signal built from integer grid harmonics. Integer
/// frequencies keep the wrap-around annihilation exact, so these signals have
/// Hankel rank exactly |modes| once the window exceeds the mode count.
struct HarmonicSpec {
  int rows = 1, cols = 1, coils = 1;
  std::vector<std::pair<int, int>> modes;  ///< integer (k1, k2) per harmonic
  /// amplitudes[mode][coil]; empty -> drawn from the seed.
  std::vector<std::vector<cplx>> amplitudes;
  std::uint64_t seed = 0;
};

inline KSpaceGrid gen_harmonics(const HarmonicSpec& spec) {
  detail::require(!spec.modes.empty(), "gen_harmonics: need at least one mode");
  std::set<std::pair<int, int>> uniq(spec.modes.begin(), spec.modes.end());
  detail::require(uniq.size() == spec.modes.size(), "gen_harmonics: duplicate modes");

  std::vector<std::vector<cplx>> amps = spec.amplitudes;
  if (amps.empty()) {
    Rng rng(spec.seed);
    amps.resize(spec.modes.size());
    for (auto& per_coil : amps) {
      per_coil.resize(spec.coils);
      for (auto& a : per_coil) {
        const double mag = 0.5 + rng.uniform();
        const double phase = 2.0 * M_PI * rng.uniform();
        a = std::polar(mag, phase);
      }
    }
  }
  detail::require(amps.size() == spec.modes.size(), "gen_harmonics: amplitude rows");

  KSpaceGrid x(spec.rows, spec.cols, spec.coils);
  for (std::size_t j = 0; j < spec.modes.size(); ++j) {
    detail::require(static_cast<int>(amps[j].size()) == spec.coils,
                    "gen_harmonics: amplitude cols");
    const auto [k1, k2] = spec.modes[j];
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        const double phase = 2.0 * M_PI * (static_cast<double>(k1) * r / spec.rows +
                                           static_cast<double>(k2) * c / spec.cols);
        const cplx e = std::polar(1.0, phase);
        for (int k = 0; k < spec.coils; ++k) x.at(r, c, k) += amps[j][k] * e;
      }
    }
  }
  return x;
}

// ---- sampling masks -----------------------------------------------------------

enum class MaskKind { random_1d, regular_1d, random_2d, regular_2d };

struct MaskSpec {
  MaskKind kind = MaskKind::random_1d;
  double accel = 4.0;  ///< nominal acceleration factor R
  int acs_rows = 0;    ///< ACS lines (1-D kinds) or rectangle rows (2-D kinds)
  int acs_cols = 0;    ///< ignored by 1-D kinds (ACS spans all columns)
  std::uint64_t seed = 0;
  double vd_power = 0;  ///< >0 ramps sampling density toward the center
};

namespace detail {

/// Weighted sampling without replacement (Efraimidis-Spirakis keys); weights
/// uniform when vd_power == 0.
inline std::vector<int> draw_indices(const std::vector<int>& pool,
                                     const std::vector<double>& weight, std::size_t take,
                                     Rng& rng) {
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    double u = rng.uniform();
    if (u <= 0) u = 0x1.0p-53;
    keyed.emplace_back(std::pow(u, 1.0 / std::max(weight[i], 1e-12)), pool[i]);
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<int> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take && i < keyed.size(); ++i) out.push_back(keyed[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

inline double center_weight(double pos, double n, double power) {
  if (power <= 0) return 1.0;
  const double dist = std::abs(pos - (n - 1) / 2.0) / std::max(n / 2.0, 1.0);
  return std::pow(1.0 - 0.999 * dist, power);
}

}  // namespace detail

/// Generate a sampling mask. The total budget is round(N/R) lines (1-D kinds)
/// or points (2-D kinds) and always includes the centered ACS block; random
/// kinds draw the remainder uniformly (or center-weighted when vd_power > 0),
/// regular kinds stride through the non-ACS region so the budget is met to
/// within one line. The stride equals R when no ACS is requested.
inline SamplingMask gen_mask(const MaskSpec& spec, int n1, int n2) {
  detail::require(spec.accel >= 1.0, "gen_mask: accel must be >= 1");
  SamplingMask m(n1, n2);
  m.set_accel(spec.accel);
  Rng rng(spec.seed);

  const bool one_d = spec.kind == MaskKind::random_1d || spec.kind == MaskKind::regular_1d;
  const bool regular = spec.kind == MaskKind::regular_1d || spec.kind == MaskKind::regular_2d;

  if (one_d) {
    const int acs_lines = spec.acs_rows;
    detail::require(acs_lines >= 0 && acs_lines <= n1, "gen_mask: ACS exceeds grid");
    const long budget = std::lround(static_cast<double>(n1) / spec.accel);
    detail::require(budget >= std::max(acs_lines, 1),
                    "gen_mask: ACS exceeds sampling budget (R too high)");
    AcsRegion acs = acs_lines > 0 ? AcsRegion::centered(n1, n2, acs_lines, n2) : AcsRegion{};

    std::vector<int> kept;
    if (regular) {
      const long want = budget - acs_lines;
      if (want > 0) {
        const int stride =
            std::max<int>(1, std::lround(static_cast<double>(n1 - acs_lines) / want));
        int counted = 0;
        for (int r = 0; r < n1; ++r) {
          if (!acs.empty() && r >= acs.row0 && r < acs.row0 + acs.rows) continue;
          if (counted % stride == 0) kept.push_back(r);
          ++counted;
        }
      }
    } else {
      std::vector<int> pool;
      std::vector<double> w;
      for (int r = 0; r < n1; ++r) {
        if (!acs.empty() && r >= acs.row0 && r < acs.row0 + acs.rows) continue;
        pool.push_back(r);
        w.push_back(detail::center_weight(r, n1, spec.vd_power));
      }
      kept = detail::draw_indices(pool, w, static_cast<std::size_t>(budget - acs_lines), rng);
    }
    for (int r : kept)
      for (int c = 0; c < n2; ++c) m.set(r, c, true);
    if (!acs.empty()) {
      for (int r = acs.row0; r < acs.row0 + acs.rows; ++r)
        for (int c = 0; c < n2; ++c) m.set(r, c, true);
      m.set_acs(acs);
    }
  } else {
    const int a1 = spec.acs_rows, a2 = spec.acs_cols;
    detail::require(a1 >= 0 && a2 >= 0 && a1 <= n1 && a2 <= n2, "gen_mask: ACS exceeds grid");
    const long total = static_cast<long>(n1) * n2;
    const long acs_pts = static_cast<long>(a1) * a2;
    const long budget = std::lround(static_cast<double>(total) / spec.accel);
    detail::require(budget >= std::max(acs_pts, long{1}),
                    "gen_mask: ACS exceeds sampling budget (R too high)");
    AcsRegion acs = acs_pts > 0 ? AcsRegion::centered(n1, n2, a1, a2) : AcsRegion{};

    const long want = budget - acs_pts;
    if (regular) {
      if (want > 0) {
        const long stride = std::max<long>(
            1, std::lround(static_cast<double>(total - acs_pts) / want));
        long counted = 0;
        for (int r = 0; r < n1; ++r) {
          for (int c = 0; c < n2; ++c) {
            if (!acs.empty() && acs.contains(r, c)) continue;
            if (counted % stride == 0) m.set(r, c, true);
            ++counted;
          }
        }
      }
    } else {
      std::vector<int> pool;
      std::vector<double> w;
      for (int r = 0; r < n1; ++r) {
        for (int c = 0; c < n2; ++c) {
          if (!acs.empty() && acs.contains(r, c)) continue;
          pool.push_back(r * n2 + c);
          w.push_back(detail::center_weight(r, n1, spec.vd_power) *
                      detail::center_weight(c, n2, spec.vd_power));
        }
      }
      for (int p : detail::draw_indices(pool, w, static_cast<std::size_t>(want), rng)) {
        m.set(p / n2, p % n2, true);
      }
    }
    if (!acs.empty()) {
      for (int r = acs.row0; r < acs.row0 + acs.rows; ++r)
        for (int c = acs.col0; c < acs.col0 + acs.cols; ++c) m.set(r, c, true);
      m.set_acs(acs);
    }
  }

  m.validate();
  return m;
}

// ---- rank oracle and noise ------------------------------------------------------

/// Numerical rank of the lifted matrix: singular values above tol * sigma_max.
inline int hankel_rank(const KSpaceGrid& x, int d1, int d2, double tol = 1e-9) {
  const Eigen::MatrixXcd h = hankel_lift(x, d1, d2);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] <= 0) return 0;
  int rank = 0;
  for (long i = 0; i < sv.size(); ++i)
    if (sv[i] > tol * sv[0]) ++rank;
  return rank;
}

/// Add circularly symmetric complex Gaussian noise with per-entry std sigma.
inline KSpaceGrid add_noise(const KSpaceGrid& x, double sigma, std::uint64_t seed) {
  detail::require(sigma >= 0, "add_noise: sigma must be >= 0");
  if (sigma == 0) return x;
  Rng rng(seed);
  KSpaceGrid out = x;
  for (std::size_t i = 0; i < out.field().size(); ++i) out.field()[i] += rng.cgaussian(sigma);
  return out;
}

}  // namespace kdeq
