#pragma once

// Shared fixtures and independent oracles for the test suites. Everything in
// here recomputes quantities from first principles (explicit DFT sums, Eigen
// SVDs of materialized matrices) so the library's own operator paths are
// never used to check themselves.

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "kdeq/hankel.hpp"
#include "kdeq/networks.hpp"
#include "kdeq/rng.hpp"

namespace kdeq_test {

using kdeq::cplx;

inline kdeq::KSpaceGrid random_grid(int rows, int cols, int coils, std::uint64_t seed) {
  kdeq::Rng rng(seed);
  return kdeq::KSpaceGrid::wrap_unchecked(rng.gaussian_field(rows, cols, coils));
}

inline kdeq::ImageGrid random_image(int rows, int cols, int coils, std::uint64_t seed) {
  kdeq::Rng rng(seed);
  return kdeq::ImageGrid::wrap_unchecked(rng.gaussian_field(rows, cols, coils));
}

/// Per-frequency symbol of the filter bank's forward operator, evaluated by
/// direct trigonometric sums: A_{j,c}(k) = sum_i rev(s_j)[i,c] e^{+2pi i <k,i>/N}.
inline Eigen::MatrixXcd symbol_matrix(const kdeq::FilterBank& s, int n1, int n2, int k1,
                                      int k2) {
  Eigen::MatrixXcd a(s.count, s.coils);
  for (int j = 0; j < s.count; ++j) {
    for (int c = 0; c < s.coils; ++c) {
      cplx acc{0, 0};
      for (int i1 = 0; i1 < s.d1; ++i1) {
        for (int i2 = 0; i2 < s.d2; ++i2) {
          const double phase = 2.0 * M_PI * (static_cast<double>(k1) * i1 / n1 +
                                             static_cast<double>(k2) * i2 / n2);
          acc += s.tap(j, s.d1 - 1 - i1, s.d2 - 1 - i2, c) * std::polar(1.0, phase);
        }
      }
      a(j, c) = acc;
    }
  }
  return a;
}

/// Exact extreme eigenvalues of Conv^H Conv on an n1 x n2 grid, from the
/// per-frequency symbols.
inline std::pair<double, double> composite_spectrum_bounds(const kdeq::FilterBank& s, int n1,
                                                           int n2) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (int k1 = 0; k1 < n1; ++k1) {
    for (int k2 = 0; k2 < n2; ++k2) {
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(symbol_matrix(s, n1, n2, k1, k2));
      const auto& sv = svd.singularValues();
      hi = std::max(hi, sv[0] * sv[0]);
      const double smin = sv[sv.size() - 1];
      lo = std::min(lo, smin * smin);
    }
  }
  return {lo, hi};
}

/// Well-conditioned bank: q unit deltas per coil at distinct 3x3 tap
/// positions (composite exactly q * identity) plus a small seeded Gaussian
/// perturbation. After spectral normalization the composite spectrum stays
/// inside roughly [0.2, 1-eps], which is what the contraction experiments
/// need.
inline kdeq::FilterBank conditioned_bank(int coils, int deltas_per_coil, double tau,
                                         std::uint64_t seed) {
  const int r = coils * deltas_per_coil;
  kdeq::FilterBank bank(r, 3, 3, coils);
  kdeq::Rng rng(seed);
  int j = 0;
  for (int c = 0; c < coils; ++c) {
    for (int q = 0; q < deltas_per_coil; ++q, ++j) {
      const int pos = (q * 2) % 9;  // distinct tap positions
      bank.tap(j, pos / 3, pos % 3, c) = cplx{1.0, 0.0};
    }
  }
  for (cplx& t : bank.taps) t += tau * rng.cgaussian();
  return bank;
}

/// Single-tap "delta" bank with a given gain on coil 0: the composite
/// operator is gain^2 * (coil-0 restriction + zero elsewhere) when coils == 1,
/// exactly gain^2 * I.
inline kdeq::FilterBank delta_bank(double gain, int coils = 1) {
  kdeq::FilterBank bank(1, 1, 1, coils);
  bank.tap(0, 0, 0, 0) = cplx{gain, 0.0};
  return bank;
}

/// Five-layer ReLU stack whose fixed-point map provably contracts. The paper
/// gives no contraction premise for generalized nets, so the gradient
/// experiments use a stack with a positive-real Jacobian by construction:
/// hidden channel 0 carries a constant, channels 1..2Nc carry biased copies
/// of the input (ReLU-transparent, margin b0), the output layer reads the
/// copies with weight mu (a diagonal term) plus a transposed copy of layer
/// 1's random block (a PSD term). Small noise everywhere keeps the test
/// generic without destroying the spectrum.
inline kdeq::NetworkParams contractive_ksspgd(int coils, int hidden, std::uint64_t seed,
                                              double mu = 0.4, double noise = 0.02,
                                              double s1 = 0.25, double beta = 0.95,
                                              double b0 = 10.0) {
  using kdeq::ConvLayer;
  using kdeq::ConvStack;
  const int in_ch = 2 * coils;
  const int k = 3, layers = 5;
  if (hidden < in_ch + 2) throw std::invalid_argument("contractive_ksspgd: hidden too small");
  kdeq::Rng rng(seed);
  ConvStack st;

  ConvLayer l1(in_ch, hidden, k, k, true);
  for (int o = 0; o < hidden; ++o) {
    if (o == 0) {
      l1.b[0] = b0;  // carrier: constant b0, cancels the copies' offset at L5
    } else if (o <= in_ch) {
      l1.wt(o, 1, 1, o - 1) = 1.0;  // biased copy of input channel o-1
      l1.b[o] = b0;
    } else {
      const double std = s1 / std::sqrt(9.0 * in_ch);
      for (int t1 = 0; t1 < k; ++t1)
        for (int t2 = 0; t2 < k; ++t2)
          for (int i = 0; i < in_ch; ++i) l1.wt(o, t1, t2, i) = std * rng.gaussian();
      l1.b[o] = 0.3 * rng.gaussian();
    }
  }

  st.layers.push_back(std::move(l1));
  for (int mid = 0; mid < layers - 2; ++mid) {
    ConvLayer l(hidden, hidden, k, k, true);
    const double std = noise / std::sqrt(9.0 * hidden);
    for (int o = 0; o < hidden; ++o) {
      for (int t1 = 0; t1 < k; ++t1)
        for (int t2 = 0; t2 < k; ++t2)
          for (int i = 0; i < hidden; ++i) l.wt(o, t1, t2, i) = std * rng.gaussian();
      l.wt(o, 1, 1, o) += beta;
      l.b[o] = o > in_ch ? 0.05 * rng.gaussian() : 0.0;
    }
    st.layers.push_back(std::move(l));
  }

  ConvLayer l5(hidden, in_ch, k, k, false);
  {
    const double std = noise / std::sqrt(9.0 * hidden);
    for (int o = 0; o < in_ch; ++o)
      for (int t1 = 0; t1 < k; ++t1)
        for (int t2 = 0; t2 < k; ++t2)
          for (int i = 0; i < hidden; ++i) l5.wt(o, t1, t2, i) = std * rng.gaussian();
    for (int o = 0; o < in_ch; ++o) {
      l5.wt(o, 1, 1, o + 1) += mu;  // diagonal via copies
      l5.wt(o, 1, 1, 0) += -mu;     // minus carrier: cancels the copies' b0 offset
    }
    // PSD part: transposed, tap-flipped copy of layer 1's noise block.
    const ConvLayer& first = st.layers.front();
    for (int h = in_ch + 1; h < hidden; ++h)
      for (int t1 = 0; t1 < k; ++t1)
        for (int t2 = 0; t2 < k; ++t2)
          for (int o = 0; o < in_ch; ++o)
            l5.wt(o, t1, t2, h) += first.wt(h, k - 1 - t1, k - 1 - t2, o);
  }
  st.layers.push_back(std::move(l5));
  return kdeq::NetworkParams{kdeq::KsspgdParams{std::move(st), 1.0}};
}

/// Real conv-layer symbol at one frequency, for spectral-norm oracles.
inline Eigen::MatrixXcd conv_symbol(const kdeq::ConvLayer& l, int n1, int n2, int k1, int k2) {
  const int a1 = (l.k1 - 1) / 2, a2 = (l.k2 - 1) / 2;
  Eigen::MatrixXcd b(l.out_ch, l.in_ch);
  for (int o = 0; o < l.out_ch; ++o) {
    for (int i = 0; i < l.in_ch; ++i) {
      cplx acc{0, 0};
      for (int t1 = 0; t1 < l.k1; ++t1) {
        for (int t2 = 0; t2 < l.k2; ++t2) {
          const double phase = -2.0 * M_PI * (static_cast<double>(k1) * (t1 - a1) / n1 +
                                              static_cast<double>(k2) * (t2 - a2) / n2);
          acc += l.wt(o, t1, t2, i) * std::polar(1.0, phase);
        }
      }
      b(o, i) = acc;
    }
  }
  return b;
}

inline double conv_norm_oracle(const kdeq::ConvLayer& l, int n1, int n2) {
  double hi = 0;
  for (int k1 = 0; k1 < n1; ++k1) {
    for (int k2 = 0; k2 < n2; ++k2) {
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(conv_symbol(l, n1, n2, k1, k2));
      hi = std::max(hi, svd.singularValues()[0]);
    }
  }
  return hi;
}

}  // namespace kdeq_test
