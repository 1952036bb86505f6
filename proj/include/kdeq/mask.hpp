#pragma once

#include <cstdint>
#include <vector>

#include "kdeq/grid.hpp"

namespace kdeq {

/// Centered rectangular auto-calibration region. Empty (rows == 0) means no
/// ACS is claimed by the mask.
struct AcsRegion {
  int row0 = 0, col0 = 0, rows = 0, cols = 0;

  bool empty() const { return rows <= 0 || cols <= 0; }
  bool contains(int r, int c) const {
    return r >= row0 && r < row0 + rows && c >= col0 && c < col0 + cols;
  }
  /// Centered region of the given size inside an n1 x n2 grid.
  static AcsRegion centered(int n1, int n2, int rows, int cols) {
    AcsRegion a;
    a.rows = rows;
    a.cols = cols;
    a.row0 = (n1 - rows) / 2;
    a.col0 = (n2 - cols) / 2;
    return a;
  }
};

enum class MaskRole : std::uint8_t { omega = 0, lambda = 1 };

/// Boolean sampling pattern over (row, col), broadcast over coils.
/// Invariants: at least one kept location; the ACS region, when present, is
/// fully kept.
class SamplingMask {
 public:
  SamplingMask() = default;

  SamplingMask(int rows, int cols)
      : rows_(rows), cols_(cols),
        keep_(detail::checked_extent(rows, cols, 1), std::uint8_t{0}) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  bool keep(int r, int c) const { return keep_[idx(r, c)] != 0; }
  void set(int r, int c, bool v) { keep_[idx(r, c)] = v ? 1 : 0; }

  const AcsRegion& acs() const { return acs_; }
  void set_acs(const AcsRegion& a) { acs_ = a; }

  double accel() const { return accel_; }
  void set_accel(double r) { accel_ = r; }

  MaskRole role() const { return role_; }
  void set_role(MaskRole r) { role_ = r; }

  long omega_count() const {
    long n = 0;
    for (auto b : keep_) n += b;
    return n;
  }

  /// Enforce the type invariants; throws on violation.
  void validate() const {
    detail::require(rows_ > 0 && cols_ > 0, "mask: empty dims");
    detail::require(omega_count() >= 1, "mask: no sampled locations");
    if (!acs_.empty()) {
      detail::require(acs_.row0 >= 0 && acs_.col0 >= 0 &&
                          acs_.row0 + acs_.rows <= rows_ &&
                          acs_.col0 + acs_.cols <= cols_,
                      "mask: ACS outside grid");
      for (int r = acs_.row0; r < acs_.row0 + acs_.rows; ++r)
        for (int c = acs_.col0; c < acs_.col0 + acs_.cols; ++c)
          detail::require(keep(r, c), "mask: ACS not fully sampled");
    }
  }

  bool is_subset_of(const SamplingMask& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) return false;
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c)
        if (keep(r, c) && !o.keep(r, c)) return false;
    return true;
  }

  bool same_pattern(const SamplingMask& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && keep_ == o.keep_;
  }

  const std::vector<std::uint8_t>& bits() const { return keep_; }

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * cols_ + c; }

  int rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> keep_;
  AcsRegion acs_;
  double accel_ = 1.0;
  MaskRole role_ = MaskRole::omega;
};

/// Zero every entry outside the mask (all coils of a kept (r,c) survive).
inline KSpaceGrid apply_mask(const KSpaceGrid& x, const SamplingMask& m) {
  detail::require(x.rows() == m.rows() && x.cols() == m.cols(), "apply_mask: dims");
  KSpaceGrid out = x;
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c)
      if (!m.keep(r, c))
        for (int k = 0; k < x.coils(); ++k) out.at(r, c, k) = cplx{0, 0};
  return out;
}

}  // namespace kdeq
