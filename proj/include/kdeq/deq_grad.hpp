#pragma once

#include <optional>

#include "kdeq/fixed_point.hpp"
#include "kdeq/loss.hpp"
#include "kdeq/networks.hpp"

namespace kdeq {

/// Zero the entries on the sampled set: (I - M_Omega) u. This is the
/// projection's Jacobian, self-adjoint, applied before every residual VJP.
inline KSpaceGrid zero_on_mask(const KSpaceGrid& u, const SamplingMask& m) {
  detail::require(u.rows() == m.rows() && u.cols() == m.cols(), "zero_on_mask: dims");
  KSpaceGrid out = u;
  for (int r = 0; r < u.rows(); ++r)
    for (int c = 0; c < u.cols(); ++c)
      if (m.keep(r, c))
        for (int k = 0; k < u.coils(); ++k) out.at(r, c, k) = cplx{0, 0};
  return out;
}

struct AdjointSolveReport {
  KSpaceGrid v;
  std::vector<double> residuals;  ///< ||v - (J^T v + g)|| / ||g|| per evaluation
  int iters = 0;
  bool converged = false;
};

/// Solve (I - J^T) v = g by the Neumann recursion v <- J^T v + g, where
/// J = (I - M) dG is the fixed-point map's Jacobian at xinf and J^T u is one
/// input-VJP of G at the masked cotangent. Same tolerance/cap semantics as
/// the forward solver, with the residual normalized by ||g||.
inline AdjointSolveReport adjoint_solve(const KSpaceGrid& xinf, const NetworkParams& p,
                                        const SamplingMask& mask, const KSpaceGrid& g,
                                        const FixedPointConfig& cfg) {
  AdjointSolveReport rep;
  const double gn = frob_norm(g.field());
  KSpaceGrid v = g;
  for (int k = 0; k < cfg.max_iters; ++k) {
    KSpaceGrid jv = residual_input_vjp(xinf, p, zero_on_mask(v, mask));
    axpy(cplx{1, 0}, g.field(), jv.field());  // jv <- J^T v + g
    const double rel = detail::rel_to(distance(jv.field(), v.field()), gn);
    rep.iters = k + 1;
    rep.residuals.push_back(rel);
    if (rel <= cfg.tol) {
      rep.converged = true;
      break;  // v itself satisfies the system to tol
    }
    v = std::move(jv);
  }
  rep.v = std::move(v);
  return rep;
}

struct ParamGradientResult {
  std::vector<double> grad;  ///< flatten() layout
  AdjointSolveReport adjoint;
};

/// Implicit parameter gradient at a converged fixed point:
///   dl/dp = (dG/dp)^T (I - M) (I - J^T)^{-1} g.
/// Touches only xinf and a constant number of grid-sized buffers; no iterate
/// history, regardless of how many forward iterations produced xinf.
inline ParamGradientResult param_gradient(const KSpaceGrid& xinf, const NetworkParams& p,
                                          const SamplingMask& mask, const KSpaceGrid& g,
                                          const FixedPointConfig& cfg) {
  ParamGradientResult res;
  res.adjoint = adjoint_solve(xinf, p, mask, g, cfg);
  KSpaceGrid seed = zero_on_mask(res.adjoint.v, mask);
  res.grad = residual_vjp(xinf, p, seed).wrt_params;
  return res;
}

// ---- truncated-unroll reference gradient -------------------------------------

struct UnrolledGradientResult {
  std::vector<double> grad;
  double loss = 0;
  KSpaceGrid x_final;
};

/// Backpropagation through K explicit iterations x_{k+1} = P(G(x_k)), storing
/// the whole trajectory. This is the memory-hungry reference the implicit
/// gradient is checked against; it converges to the implicit gradient as K
/// grows when the map contracts.
inline UnrolledGradientResult unrolled_gradient(const KSpaceGrid& x0, const NetworkParams& p,
                                                const SamplingMask& dc_mask, const KSpaceGrid& y,
                                                const KSpaceGrid& target,
                                                const SamplingMask* eval_mask, LossKind kind,
                                                int steps) {
  detail::require(steps >= 1, "unrolled_gradient: steps >= 1");
  std::vector<KSpaceGrid> xs;
  xs.reserve(steps + 1);
  xs.push_back(x0);
  for (int k = 0; k < steps; ++k) {
    xs.push_back(project_dc(residual(xs.back(), p), dc_mask, y));
  }

  UnrolledGradientResult res;
  LossValue l = loss_eval(xs.back(), target, eval_mask, kind);
  res.loss = l.value;
  res.grad.assign(NetworkParams(p).param_count(), 0.0);

  KSpaceGrid lambda = std::move(l.cotangent);
  for (int k = steps - 1; k >= 0; --k) {
    Cotangent cot = residual_vjp(xs[k], p, zero_on_mask(lambda, dc_mask));
    for (std::size_t i = 0; i < res.grad.size(); ++i) res.grad[i] += cot.wrt_params[i];
    lambda = std::move(cot.wrt_input);
  }
  res.x_final = std::move(xs.back());
  return res;
}

// ---- finite-difference verifier ------------------------------------------------

/// A self-contained problem for gradient verification: data, DC mask, loss
/// target/mask, and solver settings tight enough for central differences.
struct GradCheckProblem {
  KSpaceGrid y;
  SamplingMask dc_mask;
  KSpaceGrid target;
  std::optional<SamplingMask> eval_mask;  ///< empty = identity (supervised form)
  LossKind kind = LossKind::normalized_l2;
  FixedPointConfig forward;   ///< default below: tol 1e-12, generous cap
  FixedPointConfig backward;
  GradCheckProblem() {
    forward.tol = 1e-12;
    forward.max_iters = 2000;
    backward = forward;
  }
};

struct GradCheckRow {
  std::size_t coord = 0;
  double analytic = 0;
  double fd = 0;
  double rel_err = 0;
  bool kink = false;  ///< activation sign flipped between the +/-h probes
};

struct GradCheckReport {
  double max_rel_err = 0;     ///< over non-kink coordinates
  std::size_t worst_coord = 0;
  std::vector<GradCheckRow> rows;
  std::vector<std::size_t> kink_coords;
  double loss = 0;
  int exhaustive_limit = 512;
};

namespace detail {

struct SolveOutcome {
  KSpaceGrid x;
  double loss;
  std::vector<std::int8_t> signature;
};

inline SolveOutcome solve_and_loss(const GradCheckProblem& prob, const NetworkParams& p,
                                   const KSpaceGrid& x_start, double band) {
  FixedPointMap map = [&](const KSpaceGrid& x) {
    return project_dc(residual(x, p), prob.dc_mask, prob.y);
  };
  FixedPointReport rep = solve_fixed_point(x_start, map, prob.forward);
  if (!rep.converged)
    throw std::runtime_error("gradient_check: fixed point did not converge while probing");
  SolveOutcome out{rep.solution, 0.0, activation_signature(rep.solution, p, band)};
  out.loss = loss_eval(rep.solution, prob.target,
                       prob.eval_mask ? &*prob.eval_mask : nullptr, prob.kind)
                 .value;
  return out;
}

/// The +h and -h probes crossed a kink if any activation flipped from one
/// side of the deadband to the other.
inline bool material_flip(const std::vector<std::int8_t>& a, const std::vector<std::int8_t>& b) {
  if (a.size() != b.size()) return true;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] * b[i] < 0) return true;
  return false;
}

}  // namespace detail

/// Central-difference check of the implicit parameter gradient. Probes re-run
/// the entire pipeline (fixed point + loss) at p +- h e_i, warm-started from
/// the base fixed point. Coordinates whose probe flips any ReLU activation
/// sign are reported separately and excluded from the pass/fail statistic.
/// Exhaustive below `exhaustive_limit` parameters; otherwise `coords` must
/// name the sampled coordinates.
inline GradCheckReport gradient_check(const GradCheckProblem& prob, const NetworkParams& p,
                                      double h, std::vector<std::size_t> coords = {}) {
  detail::require(h > 0, "gradient_check: h > 0");
  const std::size_t n = p.param_count();
  GradCheckReport rep;
  if (coords.empty()) {
    detail::require(n <= static_cast<std::size_t>(rep.exhaustive_limit),
                    "gradient_check: too many parameters for exhaustive mode; pass coords");
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  }

  const double band = 10 * h;
  const KSpaceGrid x0 = zero_filled(prob.y, prob.dc_mask);
  detail::SolveOutcome base = detail::solve_and_loss(prob, p, x0, band);
  rep.loss = base.loss;
  LossValue l = loss_eval(base.x, prob.target, prob.eval_mask ? &*prob.eval_mask : nullptr,
                          prob.kind);
  ParamGradientResult analytic =
      param_gradient(base.x, p, prob.dc_mask, l.cotangent, prob.backward);
  if (!analytic.adjoint.converged)
    throw std::runtime_error("gradient_check: adjoint solve did not converge");

  // Coordinates whose gradient sits below ~0.1% of the largest entry are
  // under the central-difference resolution the solver tolerance allows
  // (loss error ~ tol * scale propagates as tol/(2h) into the quotient);
  // they are compared against this scale floor instead of their own size.
  double gscale = 0;
  for (double gv : analytic.grad) gscale = std::max(gscale, std::abs(gv));
  const double floor = std::max(1e-3 * gscale, 1e-300);

  std::vector<double> flat = NetworkParams(p).flatten();
  for (std::size_t ci : coords) {
    detail::require(ci < n, "gradient_check: coordinate out of range");
    NetworkParams probe = p;
    GradCheckRow row;
    row.coord = ci;
    row.analytic = analytic.grad[ci];

    flat[ci] += h;
    probe.unflatten(flat);
    detail::SolveOutcome plus = detail::solve_and_loss(prob, probe, base.x, band);
    flat[ci] -= 2 * h;
    probe.unflatten(flat);
    detail::SolveOutcome minus = detail::solve_and_loss(prob, probe, base.x, band);
    flat[ci] += h;  // restore

    row.fd = (plus.loss - minus.loss) / (2 * h);
    row.kink = detail::material_flip(plus.signature, minus.signature);
    row.rel_err = std::abs(row.fd - row.analytic) /
                  std::max({std::abs(row.fd), std::abs(row.analytic), floor});
    if (row.kink) {
      rep.kink_coords.push_back(ci);
    } else if (row.rel_err > rep.max_rel_err) {
      rep.max_rel_err = row.rel_err;
      rep.worst_coord = ci;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace kdeq
