#pragma once

#include <utility>

#include "kdeq/field.hpp"

namespace kdeq {

struct kspace_domain {
  static constexpr const char* name = "k-space";
};
struct image_domain {
  static constexpr const char* name = "image";
};

/// Multi-coil complex grid tagged with the domain it lives in. The two
/// instantiations are related by the centered unitary Fourier transform;
/// keeping them distinct types stops k-space data from wandering into
/// image-domain operators unannounced.
///
/// Invariants (enforced when wrapping external data): positive dims, every
/// entry finite. Layout is the ComplexField layout: row-major, coil fastest.
template <class Domain>
class Grid {
 public:
  using domain = Domain;

  Grid() = default;

  /// Zero-filled grid.
  Grid(int rows, int cols, int coils) : f_(rows, cols, coils) {}

  /// Adopt a field, validating the type invariants.
  static Grid wrap(ComplexField f) {
    detail::require(!f.empty(), "grid: empty field");
    detail::require(f.all_finite(), "grid: non-finite entry");
    return Grid(std::move(f), 0);
  }

  /// Adopt a field that is already known finite (internal fast path).
  static Grid wrap_unchecked(ComplexField f) { return Grid(std::move(f), 0); }

  int rows() const { return f_.rows(); }
  int cols() const { return f_.cols(); }
  int coils() const { return f_.channels(); }
  std::size_t size() const { return f_.size(); }
  bool empty() const { return f_.empty(); }

  cplx& at(int r, int c, int k) { return f_.at(r, c, k); }
  const cplx& at(int r, int c, int k) const { return f_.at(r, c, k); }

  ComplexField& field() { return f_; }
  const ComplexField& field() const { return f_; }

  bool same_shape(const Grid& o) const { return f_.same_shape(o.f_); }

 private:
  Grid(ComplexField f, int) : f_(std::move(f)) {}
  ComplexField f_;
};

using KSpaceGrid = Grid<kspace_domain>;
using ImageGrid = Grid<image_domain>;

}  // namespace kdeq
