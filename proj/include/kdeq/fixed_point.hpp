#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "kdeq/mask.hpp"

namespace kdeq {

struct FixedPointConfig {
  double eta = 1.0;    ///< PGD step size; must stay below 1/(1-eps) of the active budget
  double tol = 1e-6;   ///< relative successive-iterate residual threshold
  int max_iters = 500;
  enum class Solver { plain, anderson } solver = Solver::plain;
  int anderson_memory = 5;
  double anderson_damping = 1.0;
  double anderson_ridge = 1e-8;  ///< relative ridge on the residual normal equations
};

/// Step-size budget from Theorem-style premises: eta < 1/(1-eps).
inline void check_step_budget(double eta, double epsilon) {
  detail::require(eta > 0, "step size must be positive");
  detail::require(eta < 1.0 / (1.0 - epsilon), "step size exceeds 1/(1-eps) budget");
}

struct FixedPointReport {
  KSpaceGrid solution;
  std::vector<double> residuals;  ///< ||x_{k+1}-x_k||_F / ||x_k||_F per iteration
  std::vector<double> deltas;     ///< ||x_{k+1}-x_k||_F per iteration
  int iters = 0;
  bool converged = false;
  double contraction_est = 0;      ///< max ratio of successive deltas
  double final_fp_residual = 0;    ///< ||x - map(x)|| / ||x|| of the returned solution
  int anderson_fallbacks = 0;      ///< iterations that fell back to a plain step
};

/// Data-consistency projection P(r) = (I - M_Omega) r + y_Omega. Entries on
/// the sampled set are copied from y bitwise; everything else passes through.
inline KSpaceGrid project_dc(const KSpaceGrid& r, const SamplingMask& mask,
                             const KSpaceGrid& y) {
  detail::require(r.same_shape(y), "project_dc: grid shape mismatch");
  detail::require(r.rows() == mask.rows() && r.cols() == mask.cols(),
                  "project_dc: mask shape mismatch");
  KSpaceGrid out = r;
  for (int i = 0; i < r.rows(); ++i)
    for (int j = 0; j < r.cols(); ++j)
      if (mask.keep(i, j))
        for (int k = 0; k < r.coils(); ++k) out.at(i, j, k) = y.at(i, j, k);
  return out;
}

/// Standard initialization: measured entries kept, everything else zero.
/// Already data consistent, so the first projection is a no-op on Omega.
inline KSpaceGrid zero_filled(const KSpaceGrid& y, const SamplingMask& mask) {
  KSpaceGrid out(y.rows(), y.cols(), y.coils());
  return project_dc(out, mask, y);
}

/// One full PGD step x -> P(G(x)) for any residual map G.
template <class ResidualG>
KSpaceGrid pgd_map(const KSpaceGrid& x, ResidualG&& g, const SamplingMask& mask,
                   const KSpaceGrid& y) {
  return project_dc(g(x), mask, y);
}

using FixedPointMap = std::function<KSpaceGrid(const KSpaceGrid&)>;

namespace detail {

/// Anderson mixing state: the last m difference pairs (dx_i, df_i).
struct AndersonHistory {
  std::deque<ComplexField> dx, df;
  int memory;
  explicit AndersonHistory(int m) : memory(m) {}

  void push(ComplexField dxk, ComplexField dfk) {
    dx.push_back(std::move(dxk));
    df.push_back(std::move(dfk));
    if (static_cast<int>(dx.size()) > memory) {
      dx.pop_front();
      df.pop_front();
    }
  }

  /// x_next = x + beta f - (DX + beta DF) gamma with gamma from the ridge
  /// least squares min ||f - DF gamma||. Returns false on breakdown
  /// (non-finite coefficients), in which case the caller takes a plain step.
  bool mix(const ComplexField& x, const ComplexField& f, double beta, double ridge,
           ComplexField& out) const {
    const int h = static_cast<int>(dx.size());
    if (h == 0) return false;
    Eigen::MatrixXcd a(h, h);
    Eigen::VectorXcd b(h);
    for (int i = 0; i < h; ++i) {
      for (int j = i; j < h; ++j) {
        a(i, j) = inner(df[i], df[j]);
        a(j, i) = std::conj(a(i, j));
      }
      b(i) = inner(df[i], f);
    }
    const double reg = ridge * std::max(a.trace().real() / h, 1e-300);
    for (int i = 0; i < h; ++i) a(i, i) += reg;
    Eigen::VectorXcd gamma = a.ldlt().solve(b);
    if (!gamma.allFinite()) return false;

    out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += beta * f[i];
    for (int j = 0; j < h; ++j) {
      const cplx g = gamma(j);
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] -= (dx[j][i] + beta * df[j][i]) * g;
    }
    return out.all_finite();
  }
};

inline double rel_to(double num, double denom) {
  return denom > 0 ? num / denom : num;
}

}  // namespace detail

/// Iterate x <- map(x) from x0 until the relative successive-iterate residual
/// falls under cfg.tol (and the returned point's own fixed-point residual
/// does too), or the cap is hit. The Anderson solver mixes the last m
/// residual differences; a least-squares breakdown falls back to a plain step
/// for that iteration. Non-convergence is reported, never thrown.
inline FixedPointReport solve_fixed_point(const KSpaceGrid& x0, const FixedPointMap& map,
                                          const FixedPointConfig& cfg) {
  detail::require(cfg.max_iters >= 1, "solve_fixed_point: max_iters >= 1");
  FixedPointReport rep;
  const bool anderson = cfg.solver == FixedPointConfig::Solver::anderson;
  detail::AndersonHistory hist(std::max(1, cfg.anderson_memory));

  KSpaceGrid x = x0;
  KSpaceGrid fx = map(x);
  ComplexField f = fx.field() - x.field();
  double fp_rel = detail::rel_to(frob_norm(f), frob_norm(x.field()));

  for (int k = 0; k < cfg.max_iters; ++k) {
    KSpaceGrid x_next;
    if (anderson && !hist.dx.empty()) {
      ComplexField mixed;
      if (hist.mix(x.field(), f, cfg.anderson_damping, cfg.anderson_ridge, mixed)) {
        x_next = KSpaceGrid::wrap_unchecked(std::move(mixed));
      } else {
        ++rep.anderson_fallbacks;
        x_next = fx;  // plain step
      }
    } else {
      x_next = fx;  // plain step; also the Anderson warmup iteration
    }

    KSpaceGrid fx_next = map(x_next);
    ComplexField f_next = fx_next.field() - x_next.field();

    const double delta = distance(x_next.field(), x.field());
    const double rel = detail::rel_to(delta, frob_norm(x.field()));
    if (!rep.deltas.empty() && rep.deltas.back() > 0) {
      rep.contraction_est = std::max(rep.contraction_est, delta / rep.deltas.back());
    }
    rep.deltas.push_back(delta);
    rep.residuals.push_back(rel);
    rep.iters = k + 1;

    const double fp_rel_next = detail::rel_to(frob_norm(f_next), frob_norm(x_next.field()));
    if (anderson) hist.push(x_next.field() - x.field(), f_next - f);

    x = std::move(x_next);
    fx = std::move(fx_next);
    f = std::move(f_next);
    fp_rel = fp_rel_next;

    if (rel <= cfg.tol && fp_rel <= cfg.tol) {
      rep.converged = true;
      break;
    }
  }

  rep.final_fp_residual = fp_rel;
  rep.solution = std::move(x);
  return rep;
}

}  // namespace kdeq
