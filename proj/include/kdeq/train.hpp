#pragma once

#include <optional>
#include <ostream>

#include "kdeq/deq_grad.hpp"
#include "kdeq/metrics.hpp"

namespace kdeq {

// ---- mask splitting -------------------------------------------------------------

/// Split the sampled set Omega into disjoint Lambda (network input / DC set)
/// and Gamma = Omega \ Lambda (loss-only set). The ACS block always lands in
/// Lambda; of the remaining |Omega \ ACS| locations, round(rho * count) are
/// drawn by the seed. rho = 1 gives Lambda = Omega, Gamma empty.
inline std::pair<SamplingMask, SamplingMask> split_mask(const SamplingMask& mask, double rho,
                                                        std::uint64_t seed) {
  detail::require(rho > 0 && rho <= 1, "split_mask: rho in (0, 1]");
  mask.validate();

  std::vector<int> pool;
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c)
      if (mask.keep(r, c) && !(!mask.acs().empty() && mask.acs().contains(r, c)))
        pool.push_back(r * mask.cols() + c);

  Rng rng(seed);
  rng.shuffle(pool.begin(), pool.end());
  const auto take = static_cast<std::size_t>(std::lround(rho * static_cast<double>(pool.size())));

  SamplingMask lambda(mask.rows(), mask.cols());
  lambda.set_role(MaskRole::lambda);
  lambda.set_accel(mask.accel());
  if (!mask.acs().empty()) {
    for (int r = mask.acs().row0; r < mask.acs().row0 + mask.acs().rows; ++r)
      for (int c = mask.acs().col0; c < mask.acs().col0 + mask.acs().cols; ++c)
        lambda.set(r, c, true);
    lambda.set_acs(mask.acs());
  }
  for (std::size_t i = 0; i < take && i < pool.size(); ++i)
    lambda.set(pool[i] / mask.cols(), pool[i] % mask.cols(), true);

  SamplingMask gamma(mask.rows(), mask.cols());
  gamma.set_role(MaskRole::omega);
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c) gamma.set(r, c, mask.keep(r, c) && !lambda.keep(r, c));

  lambda.validate();
  return {std::move(lambda), std::move(gamma)};
}

// ---- training state --------------------------------------------------------------

struct TrainConfig {
  int epochs = 1;
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double rho = 0.5;             ///< fraction of Omega\ACS kept in Lambda
  std::uint64_t seed = 0;
  LossKind loss = LossKind::normalized_l2;
  int renorm_every = 1;         ///< normalization cadence in ADAM steps; 0 = never
  bool supervised = false;      ///< train against references with DC on Omega
  bool abort_on_nonconverged = false;  ///< otherwise skip the sample with a warning
};

struct StepRecord {
  int epoch = 0, sample = 0;
  double loss = 0;
  int forward_iters = 0, backward_iters = 0;
  double grad_norm = 0;
  bool skipped = false;
};

struct TrainState {
  NetworkParams params;
  std::vector<double> m, v;  ///< ADAM moments, flatten() shaped
  long t = 0;                ///< update counter
  std::vector<StepRecord> history;
};

struct SamplePair {
  KSpaceGrid y;          ///< measured data, supported on Omega
  SamplingMask omega;
  SamplingMask lambda;   ///< subset of Omega used for network input / DC
  std::optional<KSpaceGrid> reference;  ///< fully sampled label (supervised mode)

  void validate() const {
    omega.validate();
    lambda.validate();
    detail::require(lambda.is_subset_of(omega), "sample: Lambda not a subset of Omega");
    detail::require(y.rows() == omega.rows() && y.cols() == omega.cols(), "sample: dims");
  }
};

inline SamplePair make_sample(KSpaceGrid y, SamplingMask omega, double rho, std::uint64_t seed,
                              std::optional<KSpaceGrid> reference = std::nullopt) {
  auto [lambda, gamma] = split_mask(omega, rho, seed);
  (void)gamma;
  SamplePair s{std::move(y), std::move(omega), std::move(lambda), std::move(reference)};
  s.validate();
  return s;
}

// ---- ADAM -----------------------------------------------------------------------

/// One bias-corrected ADAM step on the flattened parameters, followed by
/// re-normalization on the configured cadence. Aborts on non-finite
/// gradients.
inline void adam_update(TrainState& state, const std::vector<double>& grad,
                        const TrainConfig& cfg, const SpecNormConfig& norm_cfg) {
  const std::size_t n = state.params.param_count();
  detail::require(grad.size() == n, "adam_update: gradient size");
  for (double gv : grad)
    if (!std::isfinite(gv)) throw std::runtime_error("adam_update: non-finite gradient");
  if (state.m.empty()) state.m.assign(n, 0.0);
  if (state.v.empty()) state.v.assign(n, 0.0);

  state.t += 1;
  std::vector<double> flat = state.params.flatten();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    flat[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
  state.params.unflatten(flat);
  if (cfg.renorm_every > 0 && state.t % cfg.renorm_every == 0) {
    state.params = lipschitz_normalize(state.params, norm_cfg).params;
  }
}

// ---- the epoch loop ---------------------------------------------------------------

/// Per-sample SGD exactly as the training algorithm prescribes: for each
/// sample, find the fixed point with DC on Lambda (Omega in supervised mode),
/// evaluate the loss on Omega against y (or against the reference), push the
/// implicit gradient through ADAM. One ADAM step per sample per epoch.
/// The optional log stream receives one TSV line per step:
///   epoch  sample  loss  fwd_iters  bwd_iters  grad_norm
inline TrainState train(const std::vector<SamplePair>& samples, const TrainConfig& cfg,
                        const FixedPointConfig& forward_cfg, const FixedPointConfig& backward_cfg,
                        const SpecNormConfig& norm_cfg, const NetworkParams& p0,
                        std::ostream* log = nullptr) {
  for (const auto& s : samples) s.validate();
  TrainState state;
  state.params = lipschitz_normalize(p0, norm_cfg).params;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const SamplePair& s = samples[i];
      const SamplingMask& dc = cfg.supervised ? s.omega : s.lambda;
      if (cfg.supervised)
        detail::require(s.reference.has_value(), "train: supervised mode needs references");

      FixedPointMap map = [&](const KSpaceGrid& x) {
        return project_dc(residual(x, state.params), dc, s.y);
      };
      FixedPointReport fwd = solve_fixed_point(zero_filled(s.y, dc), map, forward_cfg);

      StepRecord rec;
      rec.epoch = epoch;
      rec.sample = static_cast<int>(i);
      rec.forward_iters = fwd.iters;

      if (!fwd.converged) {
        if (cfg.abort_on_nonconverged)
          throw std::runtime_error("train: fixed point did not converge");
        rec.skipped = true;
        state.history.push_back(rec);
        if (log)
          *log << epoch << '\t' << i << '\t' << "nan" << '\t' << fwd.iters << '\t' << 0 << '\t'
               << "nan" << "\tskipped\n";
        continue;
      }

      LossValue l = cfg.supervised
                        ? loss_eval(fwd.solution, *s.reference, nullptr, cfg.loss)
                        : loss_eval(fwd.solution, s.y, &s.omega, cfg.loss);
      ParamGradientResult g =
          param_gradient(fwd.solution, state.params, dc, l.cotangent, backward_cfg);
      if (!g.adjoint.converged) {
        if (cfg.abort_on_nonconverged)
          throw std::runtime_error("train: adjoint solve did not converge");
        rec.skipped = true;
        state.history.push_back(rec);
        if (log)
          *log << epoch << '\t' << i << '\t' << l.value << '\t' << fwd.iters << '\t'
               << g.adjoint.iters << '\t' << "nan" << "\tskipped\n";
        continue;
      }

      double gn = 0;
      for (double gv : g.grad) gn += gv * gv;
      gn = std::sqrt(gn);

      adam_update(state, g.grad, cfg, norm_cfg);

      rec.loss = l.value;
      rec.backward_iters = g.adjoint.iters;
      rec.grad_norm = gn;
      state.history.push_back(rec);
      if (log)
        *log << epoch << '\t' << i << '\t' << l.value << '\t' << fwd.iters << '\t'
             << g.adjoint.iters << '\t' << gn << '\n';
    }
  }
  return state;
}

// ---- inference ---------------------------------------------------------------------

struct ReconResult {
  FixedPointReport report;
  std::optional<MetricsTriple> quality;  ///< image-domain metrics vs reference
};

/// Fixed-point reconstruction with DC on the full measured set Omega. The
/// returned solution is re-projected so M_Omega x = y_Omega holds as a
/// bitwise copy. When a reference grid is given, both grids go through the
/// inverse FFT and RSS combination and the image-domain metrics are reported.
inline ReconResult reconstruct(const KSpaceGrid& y, const SamplingMask& mask,
                               const NetworkParams& params, const FixedPointConfig& cfg,
                               const KSpaceGrid* reference = nullptr) {
  mask.validate();
  FixedPointMap map = [&](const KSpaceGrid& x) {
    return project_dc(residual(x, params), mask, y);
  };
  ReconResult res;
  res.report = solve_fixed_point(zero_filled(y, mask), map, cfg);
  res.report.solution = project_dc(res.report.solution, mask, y);
  if (reference) {
    const RealField rec = coil_combine_rss(fft_centered_inverse(res.report.solution));
    const RealField ref = coil_combine_rss(fft_centered_inverse(*reference));
    res.quality = metrics(ref, rec);
  }
  return res;
}

/// NMSE restricted to the unsampled locations; the exact-recovery quantity.
inline double missing_entry_nmse(const KSpaceGrid& truth, const KSpaceGrid& rec,
                                 const SamplingMask& mask) {
  detail::require(truth.same_shape(rec), "missing_entry_nmse: shape");
  double err = 0, ref = 0;
  for (int r = 0; r < truth.rows(); ++r)
    for (int c = 0; c < truth.cols(); ++c)
      if (!mask.keep(r, c))
        for (int k = 0; k < truth.coils(); ++k) {
          err += std::norm(rec.at(r, c, k) - truth.at(r, c, k));
          ref += std::norm(truth.at(r, c, k));
        }
  detail::require(ref > 0, "missing_entry_nmse: no energy on missing entries");
  return err / ref;
}

// ---- initialization ----------------------------------------------------------------

/// Extract the fully sampled ACS block as its own grid.
inline KSpaceGrid extract_acs(const KSpaceGrid& y, const SamplingMask& mask) {
  const AcsRegion& a = mask.acs();
  detail::require(!a.empty(), "extract_acs: mask has no ACS region");
  KSpaceGrid out(a.rows, a.cols, y.coils());
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c)
      for (int k = 0; k < y.coils(); ++k)
        out.at(r, c, k) = y.at(a.row0 + r, a.col0 + c, k);
  return out;
}

/// Default filter initialization: calibrate from the ACS block when the mask
/// has one, otherwise a seeded complex Gaussian bank. Either way the result
/// is spectrally normalized.
inline FilterBank initialize_bank(const KSpaceGrid& y, const SamplingMask& mask, int r, int d1,
                                  int d2, const SpecNormConfig& norm_cfg, std::uint64_t seed) {
  FilterBank bank;
  if (!mask.acs().empty() && static_cast<long>(mask.acs().rows) * mask.acs().cols >=
                                 static_cast<long>(d1) * d2 * y.coils()) {
    bank = calibrate_filters(extract_acs(y, mask), d1, d2, r).bank;
  } else {
    bank = FilterBank(r, d1, d2, y.coils());
    Rng rng(seed);
    for (cplx& t : bank.taps) t = rng.cgaussian();
  }
  return spectral_normalize(bank, norm_cfg).bank;
}

}  // namespace kdeq
