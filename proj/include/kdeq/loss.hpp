#pragma once

#include <utility>

#include "kdeq/mask.hpp"

namespace kdeq {

enum class LossKind {
  normalized_l2,  ///< ||m(x-t)||^2 / ||m t||^2
  mixed_l1l2      ///< ||m(x-t)|| / ||m t|| + ||m(x-t)||_1 / ||m t||_1
};

struct LossValue {
  double value = 0;
  KSpaceGrid cotangent;  ///< d loss / d x under the real pairing
};

/// Evaluate the training loss of a reconstruction against a target. eval_mask
/// restricts the comparison (self-supervised mode masks to Omega); pass
/// nullptr for the identity mask (supervised mode). Throws when the masked
/// target has zero norm.
inline LossValue loss_eval(const KSpaceGrid& x, const KSpaceGrid& target,
                           const SamplingMask* eval_mask, LossKind kind) {
  detail::require(x.same_shape(target), "loss_eval: shape mismatch");
  KSpaceGrid d = KSpaceGrid::wrap_unchecked(x.field() - target.field());
  KSpaceGrid mt = target;
  if (eval_mask) {
    d = apply_mask(d, *eval_mask);
    mt = apply_mask(target, *eval_mask);
  }
  const double target_energy = squared_norm(mt.field());
  detail::require(target_energy > 0, "loss_eval: zero-norm target");

  LossValue out;
  if (kind == LossKind::normalized_l2) {
    out.value = squared_norm(d.field()) / target_energy;
    scale(d.field(), cplx{2.0 / target_energy, 0});
    out.cotangent = std::move(d);
    return out;
  }

  // Mixed l2 + l1, both normalized by the corresponding target norm.
  const double l2 = frob_norm(d.field());
  const double tn = std::sqrt(target_energy);
  double l1 = 0, t1 = 0;
  for (std::size_t i = 0; i < d.field().size(); ++i) l1 += std::abs(d.field()[i]);
  for (std::size_t i = 0; i < mt.field().size(); ++i) t1 += std::abs(mt.field()[i]);
  detail::require(t1 > 0, "loss_eval: zero-norm target");
  out.value = l2 / tn + l1 / t1;
  KSpaceGrid cot(x.rows(), x.cols(), x.coils());
  for (std::size_t i = 0; i < d.field().size(); ++i) {
    const cplx z = d.field()[i];
    cplx c{0, 0};
    if (l2 > 0) c += z / (l2 * tn);
    const double m = std::abs(z);
    if (m > 0) c += z / (m * t1);  // subgradient of |z|, 0 at 0
    cot.field()[i] = c;
  }
  out.cotangent = std::move(cot);
  return out;
}

}  // namespace kdeq
