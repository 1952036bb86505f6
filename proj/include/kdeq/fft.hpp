#pragma once

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "kdeq/grid.hpp"

namespace kdeq {

enum class FftDirection { forward, inverse };

namespace detail {

/// FFTW plans per (rows, cols, coils, direction). Plans are created with
/// FFTW_UNALIGNED so one plan serves any buffer of the right shape; creation
/// is serialized (FFTW planning is not thread safe), execution is.
class FftPlanCache {
 public:
  static fftw_plan get(int rows, int cols, int coils, FftDirection dir) {
    static FftPlanCache cache;
    std::lock_guard<std::mutex> lock(cache.mu_);
    const Key key{rows, cols, coils, dir == FftDirection::forward};
    auto it = cache.plans_.find(key);
    if (it != cache.plans_.end()) return it->second;

    // Layout: coil-fastest, so each coil's 2-D slice has stride = coils and
    // consecutive coils are dist = 1 apart.
    int n[2] = {rows, cols};
    ComplexField scratch(rows, cols, coils);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan p = fftw_plan_many_dft(
        2, n, coils, buf, nullptr, coils, 1, buf, nullptr, coils, 1,
        dir == FftDirection::forward ? FFTW_FORWARD : FFTW_BACKWARD,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    cache.plans_.emplace(key, p);
    return p;
  }

 private:
  using Key = std::tuple<int, int, int, bool>;
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }
  std::mutex mu_;
  std::map<Key, fftw_plan> plans_;
};

// fftshift moves index 0 to floor(N/2); ifftshift is its inverse. They differ
// for odd N.
inline int fftshift_src(int dst, int n) { return (dst + (n + 1) / 2) % n; }
inline int ifftshift_src(int dst, int n) { return (dst + n / 2) % n; }

inline ComplexField shifted_copy(const ComplexField& in, bool forward_shift) {
  ComplexField out(in.rows(), in.cols(), in.channels());
  const int n1 = in.rows(), n2 = in.cols(), nc = in.channels();
  for (int r = 0; r < n1; ++r) {
    const int sr = forward_shift ? fftshift_src(r, n1) : ifftshift_src(r, n1);
    for (int c = 0; c < n2; ++c) {
      const int sc = forward_shift ? fftshift_src(c, n2) : ifftshift_src(c, n2);
      for (int k = 0; k < nc; ++k) out.at(r, c, k) = in.at(sr, sc, k);
    }
  }
  return out;
}

}  // namespace detail

/// Centered orthonormal 2-D DFT applied per coil:
///   out = fftshift( DFT( ifftshift(in) ) ) / sqrt(N1*N2)
/// and the analogous inverse. Both directions carry the 1/sqrt(N) factor, so
/// each is unitary, Parseval holds exactly, and inverse(forward(x)) = x.
inline ComplexField fft_centered_field(const ComplexField& in, FftDirection dir) {
  ComplexField buf = detail::shifted_copy(in, /*forward_shift=*/false);
  fftw_plan plan = detail::FftPlanCache::get(in.rows(), in.cols(), in.channels(), dir);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
  const double s = 1.0 / std::sqrt(static_cast<double>(in.rows()) * in.cols());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= s;
  return detail::shifted_copy(buf, /*forward_shift=*/true);
}

/// image -> k-space, DC at the grid center.
inline KSpaceGrid fft_centered(const ImageGrid& img) {
  return KSpaceGrid::wrap_unchecked(fft_centered_field(img.field(), FftDirection::forward));
}

/// k-space -> image; exact inverse of fft_centered.
inline ImageGrid fft_centered_inverse(const KSpaceGrid& ks) {
  return ImageGrid::wrap_unchecked(fft_centered_field(ks.field(), FftDirection::inverse));
}

}  // namespace kdeq
