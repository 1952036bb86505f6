#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kdeq/grid.hpp"
#include "kdeq/rng.hpp"

namespace kdeq {

/// Bank of r null-space filters, each d1 x d2 x coils, stored in natural
/// (un-reversed) order. The forward operator applies the time-reversed taps,
/// so a bank calibrated to annihilate does annihilate when applied.
struct FilterBank {
  int count = 0;  ///< r
  int d1 = 0, d2 = 0, coils = 0;
  std::vector<cplx> taps;  ///< [filter][i1][i2][coil], coil fastest

  FilterBank() = default;
  FilterBank(int r, int d1_, int d2_, int nc)
      : count(r), d1(d1_), d2(d2_), coils(nc),
        taps(static_cast<std::size_t>(r) * d1_ * d2_ * nc, cplx{0, 0}) {
    detail::require(r >= 1 && d1_ >= 1 && d2_ >= 1 && nc >= 1, "filter bank dims");
  }

  std::size_t taps_per_filter() const {
    return static_cast<std::size_t>(d1) * d2 * coils;
  }

  cplx& tap(int j, int i1, int i2, int c) {
    return taps[(static_cast<std::size_t>(j) * d1 + i1) * d2 * coils +
                static_cast<std::size_t>(i2) * coils + c];
  }
  const cplx& tap(int j, int i1, int i2, int c) const {
    return taps[(static_cast<std::size_t>(j) * d1 + i1) * d2 * coils +
                static_cast<std::size_t>(i2) * coils + c];
  }

  bool all_finite() const {
    for (const cplx& z : taps)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
  }

  /// More filters than window coefficients: the bank cannot be a strict null
  /// space basis. Permitted, but callers may want to warn.
  bool overcomplete() const {
    return static_cast<std::size_t>(count) >= taps_per_filter();
  }
};

/// Power-iteration settings for spectral normalization. The composite
/// operator's top eigenvalue depends on grid size only through the circular
/// spectrum of the filters, so estimates are made on a reference grid
/// (ref_rows x ref_cols) and can be re-verified at the inference size.
struct SpecNormConfig {
  double epsilon = 0.1;  ///< target margin: lambda_max <= 1 - epsilon
  /// Iteration cap. Clustered spectra make the Rayleigh quotient creep at
  /// (lambda2/lambda1)^(2t); matvecs are cheap at desk scale, so the cap is
  /// sized for the slow case rather than the textbook one.
  int power_iters = 5000;
  double tol = 1e-7;  ///< relative eigenvalue stagnation tolerance
  int ref_rows = 32;
  int ref_cols = 32;
  std::uint64_t seed = 0x9e3779b97f4a7c15ull;  ///< start-vector seed
};

// ---- wrap-around Hankel lifting ---------------------------------------------

/// Wrap-around Hankel matrix H(x, d). Row n = flattened grid position
/// (n1*N2 + n2); its entries are the d1 x d2 window anchored at n, wrapped
/// circularly, one block of d1*d2 columns per coil (coil blocks concatenated):
///   H[n, c*d1*d2 + i1*d2 + i2] = x[(n1+i1) % N1, (n2+i2) % N2, c].
inline Eigen::MatrixXcd hankel_lift(const KSpaceGrid& x, int d1, int d2) {
  const int n1 = x.rows(), n2 = x.cols(), nc = x.coils();
  detail::require(d1 >= 1 && d1 <= n1 && d2 >= 1 && d2 <= n2,
                  "hankel_lift: window larger than grid");
  const long rows = static_cast<long>(n1) * n2;
  const long cols = static_cast<long>(d1) * d2 * nc;
  Eigen::MatrixXcd h(rows, cols);
  for (int r1 = 0; r1 < n1; ++r1) {
    for (int r2 = 0; r2 < n2; ++r2) {
      const long row = static_cast<long>(r1) * n2 + r2;
      for (int c = 0; c < nc; ++c) {
        for (int i1 = 0; i1 < d1; ++i1) {
          for (int i2 = 0; i2 < d2; ++i2) {
            h(row, static_cast<long>(c) * d1 * d2 + static_cast<long>(i1) * d2 + i2) =
                x.at((r1 + i1) % n1, (r2 + i2) % n2, c);
          }
        }
      }
    }
  }
  return h;
}

/// Adjoint of hankel_lift: scatter a lifted matrix back onto the grid,
/// accumulating each window entry at its source location (conjugate-free;
/// this is the real transpose of the 0/1 selection pattern).
inline KSpaceGrid hankel_lift_adjoint(const Eigen::MatrixXcd& m, int n1, int n2, int nc,
                                      int d1, int d2) {
  detail::require(m.rows() == static_cast<long>(n1) * n2 &&
                      m.cols() == static_cast<long>(d1) * d2 * nc,
                  "hankel_lift_adjoint: dims");
  KSpaceGrid out(n1, n2, nc);
  for (int r1 = 0; r1 < n1; ++r1) {
    for (int r2 = 0; r2 < n2; ++r2) {
      const long row = static_cast<long>(r1) * n2 + r2;
      for (int c = 0; c < nc; ++c) {
        for (int i1 = 0; i1 < d1; ++i1) {
          for (int i2 = 0; i2 < d2; ++i2) {
            out.at((r1 + i1) % n1, (r2 + i2) % n2, c) +=
                m(row, static_cast<long>(c) * d1 * d2 + static_cast<long>(i1) * d2 + i2);
          }
        }
      }
    }
  }
  return out;
}

// ---- filter-bank convolution -------------------------------------------------

/// Forward operator Conv: one output channel per filter,
///   out_j[n] = sum_{i,c} x[(n+i) mod N, c] * rev(s_j)[i, c],
/// where rev flips each window axis (time reversal). Summed over coils,
/// circular everywhere. Column-wise this equals hankel_lift(x) * rev(s_j).
inline ComplexField filterbank_forward(const KSpaceGrid& x, const FilterBank& s) {
  const int n1 = x.rows(), n2 = x.cols(), nc = x.coils();
  detail::require(nc == s.coils, "filterbank_forward: coil mismatch");
  detail::require(s.d1 <= n1 && s.d2 <= n2, "filterbank_forward: window larger than grid");
  ComplexField out(n1, n2, s.count);
  for (int j = 0; j < s.count; ++j) {
    for (int r1 = 0; r1 < n1; ++r1) {
      for (int r2 = 0; r2 < n2; ++r2) {
        cplx acc{0, 0};
        for (int i1 = 0; i1 < s.d1; ++i1) {
          const int g1 = (r1 + i1) % n1;
          for (int i2 = 0; i2 < s.d2; ++i2) {
            const int g2 = (r2 + i2) % n2;
            for (int c = 0; c < nc; ++c) {
              acc += x.at(g1, g2, c) * s.tap(j, s.d1 - 1 - i1, s.d2 - 1 - i2, c);
            }
          }
        }
        out.at(r1, r2, j) = acc;
      }
    }
  }
  return out;
}

/// Exact adjoint of filterbank_forward under the complex inner product:
///   out[m, c] = sum_{j,i} conj(rev(s_j)[i, c]) * u_j[(m - i) mod N].
inline KSpaceGrid filterbank_adjoint(const ComplexField& u, const FilterBank& s) {
  const int n1 = u.rows(), n2 = u.cols();
  detail::require(u.channels() == s.count, "filterbank_adjoint: channel mismatch");
  detail::require(s.d1 <= n1 && s.d2 <= n2, "filterbank_adjoint: window larger than grid");
  KSpaceGrid out(n1, n2, s.coils);
  for (int j = 0; j < s.count; ++j) {
    for (int r1 = 0; r1 < n1; ++r1) {
      for (int r2 = 0; r2 < n2; ++r2) {
        const cplx uj = u.at(r1, r2, j);
        if (uj == cplx{0, 0}) continue;
        for (int i1 = 0; i1 < s.d1; ++i1) {
          const int g1 = (r1 + i1) % n1;
          for (int i2 = 0; i2 < s.d2; ++i2) {
            const int g2 = (r2 + i2) % n2;
            for (int c = 0; c < s.coils; ++c) {
              out.at(g1, g2, c) += std::conj(s.tap(j, s.d1 - 1 - i1, s.d2 - 1 - i2, c)) * uj;
            }
          }
        }
      }
    }
  }
  return out;
}

/// Composite positive semidefinite operator Conv^H Conv.
inline KSpaceGrid filterbank_composite(const KSpaceGrid& x, const FilterBank& s) {
  return filterbank_adjoint(filterbank_forward(x, s), s);
}

// ---- calibration ---------------------------------------------------------------

struct CalibrationResult {
  FilterBank bank;
  double residual = 0;  ///< ||Conv(acs)||_F / ||acs||_F with the returned bank
  std::vector<double> singular_values;  ///< full spectrum of the lifted block
};

/// Estimate r null-space filters from a fully sampled calibration block: take
/// the right singular vectors of H(acs, d) with the smallest singular values
/// and un-reverse them so that filterbank_forward annihilates the block.
inline CalibrationResult calibrate_filters(const KSpaceGrid& acs, int d1, int d2, int r) {
  const int nc = acs.coils();
  const long cols = static_cast<long>(d1) * d2 * nc;
  detail::require(r >= 1, "calibrate_filters: need r >= 1");
  detail::require(static_cast<long>(acs.rows()) * acs.cols() >= cols,
                  "calibrate_filters: ACS too small for window");
  detail::require(r < cols, "calibrate_filters: r must be below the column count");

  const Eigen::MatrixXcd h = hankel_lift(acs, d1, d2);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();

  CalibrationResult res;
  res.singular_values.assign(sv.data(), sv.data() + sv.size());

  FilterBank bank(r, d1, d2, nc);
  for (int j = 0; j < r; ++j) {
    const Eigen::VectorXcd v = svd.matrixV().col(cols - 1 - j);
    // v is in lifted-column order (coil block, then window row-major); store
    // the per-axis flip so the forward operator reproduces H * v.
    for (int c = 0; c < nc; ++c) {
      for (int i1 = 0; i1 < d1; ++i1) {
        for (int i2 = 0; i2 < d2; ++i2) {
          bank.tap(j, d1 - 1 - i1, d2 - 1 - i2, c) =
              v[static_cast<long>(c) * d1 * d2 + static_cast<long>(i1) * d2 + i2];
        }
      }
    }
  }

  const double acs_norm = frob_norm(acs.field());
  if (acs_norm > 0) {
    res.residual = frob_norm(filterbank_forward(acs, bank)) / acs_norm;
  }
  res.bank = std::move(bank);
  return res;
}

// ---- spectral normalization ------------------------------------------------

/// Power-iteration estimate of lambda_max(Conv^H Conv) on a rows x cols grid.
/// The operator is PSD, so the Rayleigh quotient converges monotonically from
/// a random start. Throws if the estimate has not stagnated within the cap.
inline double spectral_norm_estimate(const FilterBank& s, int rows, int cols,
                                     const SpecNormConfig& cfg) {
  detail::require(rows >= s.d1 && cols >= s.d2, "spectral estimate: grid below window");
  Rng rng(cfg.seed);
  KSpaceGrid v = KSpaceGrid::wrap_unchecked(rng.gaussian_field(rows, cols, s.coils));
  double lambda = 0;
  for (int it = 0; it < cfg.power_iters; ++it) {
    KSpaceGrid w = filterbank_composite(v, s);
    const double wn = frob_norm(w.field());
    if (wn == 0) return 0.0;  // null operator
    const double next = re_inner(v.field(), w.field()) / squared_norm(v.field());
    scale(w.field(), 1.0 / wn);
    v = std::move(w);
    if (it > 0 && std::abs(next - lambda) <= cfg.tol * std::max(next, 1e-300)) {
      return next;
    }
    lambda = next;
  }
  throw std::runtime_error("spectral_norm_estimate: power iteration did not settle");
}

struct SpectralNormResult {
  FilterBank bank;
  double lambda_before = 0;
  double lambda_after = 0;
  bool rescaled = false;
};

/// Enforce lambda_max(Conv^H Conv) <= 1 - epsilon by rescaling all filters by
/// sqrt((1-eps)/lambda) when the estimate exceeds the budget; otherwise the
/// bank passes through untouched.
inline SpectralNormResult spectral_normalize(const FilterBank& s, const SpecNormConfig& cfg) {
  detail::require(cfg.epsilon > 0 && cfg.epsilon < 1, "spectral_normalize: epsilon in (0,1)");
  SpectralNormResult res;
  res.lambda_before = spectral_norm_estimate(s, cfg.ref_rows, cfg.ref_cols, cfg);
  res.bank = s;
  const double budget = 1.0 - cfg.epsilon;
  if (res.lambda_before > budget) {
    const double factor = std::sqrt(budget / res.lambda_before);
    for (cplx& t : res.bank.taps) t *= factor;
    res.rescaled = true;
    res.lambda_after = spectral_norm_estimate(res.bank, cfg.ref_rows, cfg.ref_cols, cfg);
  } else {
    res.lambda_after = res.lambda_before;
  }
  return res;
}

}  // namespace kdeq
