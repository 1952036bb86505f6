#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace kdeq {

using cplx = std::complex<double>;

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline std::size_t checked_extent(int rows, int cols, int channels) {
  require(rows > 0 && cols > 0 && channels > 0, "field dims must be positive");
  const auto n = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) *
                 static_cast<std::uint64_t>(channels);
  require(n <= (std::uint64_t{1} << 31), "field dims overflow");
  return static_cast<std::size_t>(n);
}

}  // namespace detail

/// Global live/peak accounting of field payloads, in scalar doubles.
/// The DEQ memory-contract tests read the peak between reset points; everything
/// else ignores this. Counters are relaxed atomics, cheap enough to keep on.
struct FieldMeter {
  static std::atomic<std::int64_t>& live() {
    static std::atomic<std::int64_t> v{0};
    return v;
  }
  static std::atomic<std::int64_t>& peak() {
    static std::atomic<std::int64_t> v{0};
    return v;
  }
  static void add(std::int64_t doubles) {
    const auto cur = live().fetch_add(doubles, std::memory_order_relaxed) + doubles;
    auto p = peak().load(std::memory_order_relaxed);
    while (cur > p &&
           !peak().compare_exchange_weak(p, cur, std::memory_order_relaxed)) {
    }
  }
  static void sub(std::int64_t doubles) { live().fetch_sub(doubles, std::memory_order_relaxed); }
  static void reset_peak() { peak().store(live().load()); }
};

/// Dense complex buffer of shape rows x cols x channels.
/// Storage is row-major with the channel index fastest:
///   offset(r, c, k) = (r*cols + c)*channels + k.
/// This layout is fixed and shared by every module and the on-disk formats.
class ComplexField {
 public:
  ComplexField() = default;

  ComplexField(int rows, int cols, int channels)
      : rows_(rows), cols_(cols), channels_(channels),
        data_(detail::checked_extent(rows, cols, channels)) {
    FieldMeter::add(meter_size());
  }

  ComplexField(const ComplexField& o)
      : rows_(o.rows_), cols_(o.cols_), channels_(o.channels_), data_(o.data_) {
    FieldMeter::add(meter_size());
  }

  ComplexField(ComplexField&& o) noexcept
      : rows_(o.rows_), cols_(o.cols_), channels_(o.channels_), data_(std::move(o.data_)) {
    o.release();
  }

  ComplexField& operator=(const ComplexField& o) {
    if (this != &o) {
      FieldMeter::sub(meter_size());
      rows_ = o.rows_;
      cols_ = o.cols_;
      channels_ = o.channels_;
      data_ = o.data_;
      FieldMeter::add(meter_size());
    }
    return *this;
  }

  ComplexField& operator=(ComplexField&& o) noexcept {
    if (this != &o) {
      FieldMeter::sub(meter_size());
      rows_ = o.rows_;
      cols_ = o.cols_;
      channels_ = o.channels_;
      data_ = std::move(o.data_);
      o.release();
    }
    return *this;
  }

  ~ComplexField() { FieldMeter::sub(meter_size()); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  cplx& at(int r, int c, int k) { return data_[offset(r, c, k)]; }
  const cplx& at(int r, int c, int k) const { return data_[offset(r, c, k)]; }
  cplx& operator[](std::size_t i) { return data_[i]; }
  const cplx& operator[](std::size_t i) const { return data_[i]; }

  cplx* data() { return data_.data(); }
  const cplx* data() const { return data_.data(); }

  std::size_t offset(int r, int c, int k) const {
    return (static_cast<std::size_t>(r) * cols_ + c) * channels_ + k;
  }

  bool same_shape(const ComplexField& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && channels_ == o.channels_;
  }

  bool all_finite() const {
    for (const cplx& z : data_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
  }

  void fill(cplx v) {
    for (cplx& z : data_) z = v;
  }

 private:
  std::int64_t meter_size() const { return static_cast<std::int64_t>(data_.size()) * 2; }
  void release() noexcept {
    rows_ = cols_ = channels_ = 0;
    data_.clear();
  }

  int rows_ = 0, cols_ = 0, channels_ = 0;
  std::vector<cplx> data_;
};

/// Real counterpart, same layout. Used for channel-doubled network planes and
/// combined magnitude images.
class RealField {
 public:
  RealField() = default;

  RealField(int rows, int cols, int channels)
      : rows_(rows), cols_(cols), channels_(channels),
        data_(detail::checked_extent(rows, cols, channels)) {
    FieldMeter::add(static_cast<std::int64_t>(data_.size()));
  }

  RealField(const RealField& o)
      : rows_(o.rows_), cols_(o.cols_), channels_(o.channels_), data_(o.data_) {
    FieldMeter::add(static_cast<std::int64_t>(data_.size()));
  }

  RealField(RealField&& o) noexcept
      : rows_(o.rows_), cols_(o.cols_), channels_(o.channels_), data_(std::move(o.data_)) {
    o.rows_ = o.cols_ = o.channels_ = 0;
    o.data_.clear();
  }

  RealField& operator=(const RealField& o) {
    if (this != &o) {
      FieldMeter::sub(static_cast<std::int64_t>(data_.size()));
      rows_ = o.rows_;
      cols_ = o.cols_;
      channels_ = o.channels_;
      data_ = o.data_;
      FieldMeter::add(static_cast<std::int64_t>(data_.size()));
    }
    return *this;
  }

  RealField& operator=(RealField&& o) noexcept {
    if (this != &o) {
      FieldMeter::sub(static_cast<std::int64_t>(data_.size()));
      rows_ = o.rows_;
      cols_ = o.cols_;
      channels_ = o.channels_;
      data_ = std::move(o.data_);
      o.rows_ = o.cols_ = o.channels_ = 0;
      o.data_.clear();
    }
    return *this;
  }

  ~RealField() { FieldMeter::sub(static_cast<std::int64_t>(data_.size())); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }

  double& at(int r, int c, int k) { return data_[offset(r, c, k)]; }
  const double& at(int r, int c, int k) const { return data_[offset(r, c, k)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::size_t offset(int r, int c, int k) const {
    return (static_cast<std::size_t>(r) * cols_ + c) * channels_ + k;
  }

  bool same_shape(const RealField& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && channels_ == o.channels_;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  void fill(double v) {
    for (double& x : data_) x = v;
  }

 private:
  int rows_ = 0, cols_ = 0, channels_ = 0;
  std::vector<double> data_;
};

// ---- elementwise arithmetic ------------------------------------------------

inline double squared_norm(const ComplexField& f) {
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::norm(f[i]);
  return s;
}

inline double frob_norm(const ComplexField& f) { return std::sqrt(squared_norm(f)); }

inline double squared_norm(const RealField& f) {
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * f[i];
  return s;
}

inline double frob_norm(const RealField& f) { return std::sqrt(squared_norm(f)); }

/// Complex inner product, conjugate-linear in the first argument.
inline cplx inner(const ComplexField& a, const ComplexField& b) {
  detail::require(a.same_shape(b), "inner: shape mismatch");
  cplx s{0, 0};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

/// Real pairing Re<a,b>; the inner product of the channel-doubled real view.
inline double re_inner(const ComplexField& a, const ComplexField& b) {
  return inner(a, b).real();
}

inline void axpy(cplx alpha, const ComplexField& x, ComplexField& y) {
  detail::require(x.same_shape(y), "axpy: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(ComplexField& f, cplx alpha) {
  for (std::size_t i = 0; i < f.size(); ++i) f[i] *= alpha;
}

inline ComplexField operator+(const ComplexField& a, const ComplexField& b) {
  detail::require(a.same_shape(b), "add: shape mismatch");
  ComplexField out = a;
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

inline ComplexField operator-(const ComplexField& a, const ComplexField& b) {
  detail::require(a.same_shape(b), "sub: shape mismatch");
  ComplexField out = a;
  for (std::size_t i = 0; i < b.size(); ++i) out[i] -= b[i];
  return out;
}

inline double distance(const ComplexField& a, const ComplexField& b) {
  detail::require(a.same_shape(b), "distance: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace kdeq
