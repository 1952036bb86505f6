#pragma once

#include <variant>
#include <vector>

#include "kdeq/fft.hpp"
#include "kdeq/hankel.hpp"
#include "kdeq/rng.hpp"

namespace kdeq {

// ---- channel-doubled real view ------------------------------------------------
// Complex grids enter the generalized nets as 2*Nc real planes: channels
// [0, Nc) hold the real parts, [Nc, 2Nc) the imaginary parts.

inline RealField realify(const ComplexField& x) {
  RealField out(x.rows(), x.cols(), 2 * x.channels());
  const int nc = x.channels();
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c)
      for (int k = 0; k < nc; ++k) {
        const cplx z = x.at(r, c, k);
        out.at(r, c, k) = z.real();
        out.at(r, c, nc + k) = z.imag();
      }
  return out;
}

inline ComplexField complexify(const RealField& x) {
  detail::require(x.channels() % 2 == 0, "complexify: odd channel count");
  const int nc = x.channels() / 2;
  ComplexField out(x.rows(), x.cols(), nc);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c)
      for (int k = 0; k < nc; ++k)
        out.at(r, c, k) = cplx{x.at(r, c, k), x.at(r, c, nc + k)};
  return out;
}

// ---- convolutional stack -------------------------------------------------------

/// One circular 2-D convolution layer over real channel planes. Weights are
/// stored [out][t1][t2][in] so the inner reduction runs over contiguous input
/// channels. Taps are center-anchored: offset (t - (k-1)/2).
struct ConvLayer {
  int in_ch = 0, out_ch = 0, k1 = 3, k2 = 3;
  bool has_bias = true;
  std::vector<double> w;
  std::vector<double> b;

  ConvLayer() = default;
  ConvLayer(int in, int out, int kk1, int kk2, bool bias)
      : in_ch(in), out_ch(out), k1(kk1), k2(kk2), has_bias(bias),
        w(static_cast<std::size_t>(out) * kk1 * kk2 * in, 0.0),
        b(bias ? static_cast<std::size_t>(out) : 0, 0.0) {}

  std::size_t widx(int o, int t1, int t2, int i) const {
    return ((static_cast<std::size_t>(o) * k1 + t1) * k2 + t2) * in_ch + i;
  }
  double& wt(int o, int t1, int t2, int i) { return w[widx(o, t1, t2, i)]; }
  double wt(int o, int t1, int t2, int i) const { return w[widx(o, t1, t2, i)]; }

  std::size_t param_count() const { return w.size() + b.size(); }
};

inline RealField conv_forward(const ConvLayer& l, const RealField& in) {
  detail::require(in.channels() == l.in_ch, "conv_forward: channel mismatch");
  const int n1 = in.rows(), n2 = in.cols();
  const int a1 = (l.k1 - 1) / 2, a2 = (l.k2 - 1) / 2;
  RealField out(n1, n2, l.out_ch);
  for (int r = 0; r < n1; ++r) {
    for (int c = 0; c < n2; ++c) {
      for (int o = 0; o < l.out_ch; ++o) {
        double acc = l.has_bias ? l.b[o] : 0.0;
        for (int t1 = 0; t1 < l.k1; ++t1) {
          const int rr = (r + t1 - a1 + n1) % n1;
          for (int t2 = 0; t2 < l.k2; ++t2) {
            const int cc = (c + t2 - a2 + n2) % n2;
            const double* wrow = &l.w[l.widx(o, t1, t2, 0)];
            const double* irow = &in.at(rr, cc, 0);
            double dot = 0;
            for (int i = 0; i < l.in_ch; ++i) dot += wrow[i] * irow[i];
            acc += dot;
          }
        }
        out.at(r, c, o) = acc;
      }
    }
  }
  return out;
}

/// Adjoint of the layer's linear part applied to an output-shaped cotangent.
inline RealField conv_input_vjp(const ConvLayer& l, const RealField& cot) {
  detail::require(cot.channels() == l.out_ch, "conv_input_vjp: channel mismatch");
  const int n1 = cot.rows(), n2 = cot.cols();
  const int a1 = (l.k1 - 1) / 2, a2 = (l.k2 - 1) / 2;
  RealField out(n1, n2, l.in_ch);
  out.fill(0.0);
  for (int r = 0; r < n1; ++r) {
    for (int c = 0; c < n2; ++c) {
      for (int o = 0; o < l.out_ch; ++o) {
        const double g = cot.at(r, c, o);
        if (g == 0) continue;
        for (int t1 = 0; t1 < l.k1; ++t1) {
          const int rr = (r + t1 - a1 + n1) % n1;
          for (int t2 = 0; t2 < l.k2; ++t2) {
            const int cc = (c + t2 - a2 + n2) % n2;
            const double* wrow = &l.w[l.widx(o, t1, t2, 0)];
            double* orow = &out.at(rr, cc, 0);
            for (int i = 0; i < l.in_ch; ++i) orow[i] += wrow[i] * g;
          }
        }
      }
    }
  }
  return out;
}

/// Weight/bias gradient contribution; accumulates into grad (layer-shaped,
/// weights then bias).
inline void conv_param_vjp(const ConvLayer& l, const RealField& in, const RealField& cot,
                           double scale, double* wgrad, double* bgrad) {
  const int n1 = in.rows(), n2 = in.cols();
  const int a1 = (l.k1 - 1) / 2, a2 = (l.k2 - 1) / 2;
  for (int r = 0; r < n1; ++r) {
    for (int c = 0; c < n2; ++c) {
      for (int o = 0; o < l.out_ch; ++o) {
        const double g = scale * cot.at(r, c, o);
        if (g == 0) continue;
        if (l.has_bias) bgrad[o] += g;
        for (int t1 = 0; t1 < l.k1; ++t1) {
          const int rr = (r + t1 - a1 + n1) % n1;
          for (int t2 = 0; t2 < l.k2; ++t2) {
            const int cc = (c + t2 - a2 + n2) % n2;
            double* wrow = wgrad + l.widx(o, t1, t2, 0);
            const double* irow = &in.at(rr, cc, 0);
            for (int i = 0; i < l.in_ch; ++i) wrow[i] += irow[i] * g;
          }
        }
      }
    }
  }
}

/// Stack of conv layers with ReLU after every layer except the last. ReLU'(0)
/// is taken as 0 throughout.
struct ConvStack {
  std::vector<ConvLayer> layers;

  int input_channels() const { return layers.front().in_ch; }
  int output_channels() const { return layers.back().out_ch; }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }
};

struct StackTrace {
  std::vector<RealField> inputs;  ///< input seen by each layer
  std::vector<RealField> pre;     ///< each layer's pre-activation output
};

inline RealField stack_forward(const ConvStack& s, const RealField& in,
                               StackTrace* trace = nullptr) {
  RealField a = in;
  const int last = static_cast<int>(s.layers.size()) - 1;
  for (int l = 0; l <= last; ++l) {
    if (trace) trace->inputs.push_back(a);
    RealField z = conv_forward(s.layers[l], a);
    if (trace) trace->pre.push_back(z);
    if (l < last) {
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = z[i] > 0 ? z[i] : 0.0;
    }
    a = std::move(z);
  }
  return a;
}

/// Reverse pass. `cot` is the cotangent on the stack output; returns the
/// cotangent on the stack input and accumulates scale * dOut/dParams into
/// pgrad, which must be sized s.param_count() (flattened per layer: weights
/// then bias, layers in order).
inline RealField stack_vjp(const ConvStack& s, const StackTrace& trace, RealField cot,
                           double scale, std::vector<double>* pgrad) {
  const int last = static_cast<int>(s.layers.size()) - 1;
  std::vector<std::size_t> offs(s.layers.size(), 0);
  if (pgrad) {
    detail::require(pgrad->size() == s.param_count(), "stack_vjp: gradient size");
    std::size_t base = 0;
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      offs[l] = base;
      base += s.layers[l].param_count();
    }
  }
  for (int l = last; l >= 0; --l) {
    if (l < last) {
      // Mask by the ReLU that sat on top of this layer's output.
      const RealField& z = trace.pre[l];
      for (std::size_t i = 0; i < cot.size(); ++i)
        if (!(z[i] > 0)) cot[i] = 0.0;
    }
    if (pgrad) {
      double* wg = pgrad->data() + offs[l];
      double* bg = wg + s.layers[l].w.size();
      conv_param_vjp(s.layers[l], trace.inputs[l], cot, scale, wg, bg);
    }
    cot = conv_input_vjp(s.layers[l], cot);
  }
  return cot;
}

// ---- network parameter variants -----------------------------------------------

enum class Activation { relu, identity };

/// Filter-bank residual G(x) = x - eta * Conv^H(act(Conv(x))). The activation
/// acts on the channel-doubled real view of the r filter outputs; the linear
/// variant exists for the contraction-theorem setting and for gradient tests.
struct SspgdParams {
  FilterBank bank;
  double eta = 1.0;
  Activation act = Activation::relu;
};

/// k-space generalized residual G(x) = x - eta * N_K(x) with a five-layer
/// conv stack on 2*Nc real channels.
struct KsspgdParams {
  ConvStack net;
  double eta = 1.0;
};

/// Hybrid residual G(x) = x - eta1 * N_K(x) - eta2 * N_I(x); the image stack
/// N_I sees the signal after the inverse Fourier transform and its output is
/// carried back to k-space by the forward transform.
struct HsspgdParams {
  ConvStack knet;
  ConvStack inet;
  double eta1 = 0.5;
  double eta2 = 0.5;
};

struct NetworkParams {
  std::variant<SspgdParams, KsspgdParams, HsspgdParams> value;

  const char* variant_name() const {
    switch (value.index()) {
      case 0: return "sspgd";
      case 1: return "ksspgd";
      default: return "hsspgd";
    }
  }

  bool is_sspgd() const { return value.index() == 0; }
  SspgdParams& sspgd() { return std::get<SspgdParams>(value); }
  const SspgdParams& sspgd() const { return std::get<SspgdParams>(value); }
  KsspgdParams& ksspgd() { return std::get<KsspgdParams>(value); }
  const KsspgdParams& ksspgd() const { return std::get<KsspgdParams>(value); }
  HsspgdParams& hsspgd() { return std::get<HsspgdParams>(value); }
  const HsspgdParams& hsspgd() const { return std::get<HsspgdParams>(value); }

  std::size_t param_count() const {
    if (const auto* s = std::get_if<SspgdParams>(&value)) return 2 * s->bank.taps.size();
    if (const auto* k = std::get_if<KsspgdParams>(&value)) return k->net.param_count();
    const auto& h = std::get<HsspgdParams>(value);
    return h.knet.param_count() + h.inet.param_count();
  }

  /// Learnable coordinates as a flat real vector. Filter taps interleave
  /// (re, im) in storage order; conv layers append weights then bias, layers
  /// in order, k-space stack before image stack. Step sizes are fixed
  /// hyperparameters and are not part of the vector.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    if (const auto* s = std::get_if<SspgdParams>(&value)) {
      for (const cplx& t : s->bank.taps) {
        out.push_back(t.real());
        out.push_back(t.imag());
      }
      return out;
    }
    auto push_stack = [&out](const ConvStack& st) {
      for (const auto& l : st.layers) {
        out.insert(out.end(), l.w.begin(), l.w.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
      }
    };
    if (const auto* k = std::get_if<KsspgdParams>(&value)) {
      push_stack(k->net);
    } else {
      const auto& h = std::get<HsspgdParams>(value);
      push_stack(h.knet);
      push_stack(h.inet);
    }
    return out;
  }

  void unflatten(const std::vector<double>& v) {
    detail::require(v.size() == param_count(), "unflatten: size mismatch");
    std::size_t p = 0;
    if (auto* s = std::get_if<SspgdParams>(&value)) {
      for (cplx& t : s->bank.taps) {
        t = cplx{v[p], v[p + 1]};
        p += 2;
      }
      return;
    }
    auto pull_stack = [&v, &p](ConvStack& st) {
      for (auto& l : st.layers) {
        for (double& w : l.w) w = v[p++];
        for (double& b : l.b) b = v[p++];
      }
    };
    if (auto* k = std::get_if<KsspgdParams>(&value)) {
      pull_stack(k->net);
    } else {
      auto& h = std::get<HsspgdParams>(value);
      pull_stack(h.knet);
      pull_stack(h.inet);
    }
  }
};

// ---- constructors ---------------------------------------------------------------

inline NetworkParams make_sspgd(FilterBank bank, double eta = 1.0,
                                Activation act = Activation::relu) {
  return NetworkParams{SspgdParams{std::move(bank), eta, act}};
}

/// Five-layer stack: 2*Nc -> hidden -> ... -> hidden -> 2*Nc, 3x3 kernels,
/// biases on hidden layers only. Seeded Gaussian weights, zero biases.
inline ConvStack make_conv_stack(int data_channels, int hidden, int layers, int kernel,
                                 Rng& rng, double init_scale) {
  detail::require(layers >= 1, "make_conv_stack: layers >= 1");
  ConvStack s;
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? data_channels : hidden;
    const int out = l == layers - 1 ? data_channels : hidden;
    const bool bias = l < layers - 1;
    ConvLayer layer(in, out, kernel, kernel, bias);
    const double std = init_scale / std::sqrt(static_cast<double>(in) * kernel * kernel);
    for (double& w : layer.w) w = std * rng.gaussian();
    s.layers.push_back(std::move(layer));
  }
  return s;
}

inline NetworkParams make_ksspgd(int coils, double eta = 1.0, std::uint64_t seed = 0,
                                 int hidden = 64, int layers = 5, int kernel = 3,
                                 double init_scale = 0.5) {
  Rng rng(seed);
  return NetworkParams{
      KsspgdParams{make_conv_stack(2 * coils, hidden, layers, kernel, rng, init_scale), eta}};
}

inline NetworkParams make_hsspgd(int coils, double eta1 = 0.5, double eta2 = 0.5,
                                 std::uint64_t seed = 0, int hidden = 64, int layers = 5,
                                 int kernel = 3, double init_scale = 0.5) {
  Rng rng(seed);
  ConvStack k = make_conv_stack(2 * coils, hidden, layers, kernel, rng, init_scale);
  ConvStack i = make_conv_stack(2 * coils, hidden, layers, kernel, rng, init_scale);
  return NetworkParams{HsspgdParams{std::move(k), std::move(i), eta1, eta2}};
}

// ---- forward residuals -----------------------------------------------------------

namespace detail {

inline void relu_complex_inplace(ComplexField& w) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = cplx{w[i].real() > 0 ? w[i].real() : 0.0, w[i].imag() > 0 ? w[i].imag() : 0.0};
  }
}

}  // namespace detail

inline KSpaceGrid residual_sspgd(const KSpaceGrid& x, const SspgdParams& p) {
  ComplexField w = filterbank_forward(x, p.bank);
  if (p.act == Activation::relu) detail::relu_complex_inplace(w);
  KSpaceGrid z = filterbank_adjoint(w, p.bank);
  KSpaceGrid out = x;
  axpy(cplx{-p.eta, 0}, z.field(), out.field());
  return out;
}

inline KSpaceGrid residual_generalized(const KSpaceGrid& x, const KsspgdParams& p) {
  detail::require(p.net.input_channels() == 2 * x.coils(), "ksspgd: channel mismatch");
  RealField out = stack_forward(p.net, realify(x.field()));
  KSpaceGrid g = x;
  axpy(cplx{-p.eta, 0}, complexify(out), g.field());
  return g;
}

inline KSpaceGrid residual_generalized(const KSpaceGrid& x, const HsspgdParams& p) {
  detail::require(p.knet.input_channels() == 2 * x.coils(), "hsspgd: channel mismatch");
  KSpaceGrid g = x;
  {
    RealField nk = stack_forward(p.knet, realify(x.field()));
    axpy(cplx{-p.eta1, 0}, complexify(nk), g.field());
  }
  {
    ComplexField img = fft_centered_field(x.field(), FftDirection::inverse);
    RealField ni = stack_forward(p.inet, realify(img));
    ComplexField back = fft_centered_field(complexify(ni), FftDirection::forward);
    axpy(cplx{-p.eta2, 0}, back, g.field());
  }
  return g;
}

/// G(x) for whichever architecture the params carry.
inline KSpaceGrid residual(const KSpaceGrid& x, const NetworkParams& p) {
  if (const auto* s = std::get_if<SspgdParams>(&p.value)) return residual_sspgd(x, *s);
  if (const auto* k = std::get_if<KsspgdParams>(&p.value)) return residual_generalized(x, *k);
  return residual_generalized(x, std::get<HsspgdParams>(p.value));
}

// ---- vector-Jacobian products ------------------------------------------------------

struct Cotangent {
  KSpaceGrid wrt_input;
  std::vector<double> wrt_params;
};

namespace detail {

/// Filter-shaped correlation sum_n conj(base[(n+i) mod N, c]) * coeff_j[n],
/// i.e. H(base)^H coeff laid out in (unreversed-window, coil) tap order.
/// This is the parameter-side building block of the sspgd VJP.
inline std::vector<cplx> lift_correlation(const ComplexField& base, const ComplexField& coeff,
                                          int d1, int d2) {
  const int n1 = base.rows(), n2 = base.cols(), nc = base.channels();
  const int r = coeff.channels();
  std::vector<cplx> out(static_cast<std::size_t>(r) * d1 * d2 * nc, cplx{0, 0});
  for (int j = 0; j < r; ++j) {
    for (int p1 = 0; p1 < n1; ++p1) {
      for (int p2 = 0; p2 < n2; ++p2) {
        const cplx co = coeff.at(p1, p2, j);
        if (co == cplx{0, 0}) continue;
        for (int i1 = 0; i1 < d1; ++i1) {
          const int g1 = (p1 + i1) % n1;
          for (int i2 = 0; i2 < d2; ++i2) {
            const int g2 = (p2 + i2) % n2;
            for (int c = 0; c < nc; ++c) {
              out[(static_cast<std::size_t>(j) * d1 + i1) * d2 * nc +
                  static_cast<std::size_t>(i2) * nc + c] +=
                  std::conj(base.at(g1, g2, c)) * co;
            }
          }
        }
      }
    }
  }
  return out;
}

/// ReLU derivative masks taken on the channel-doubled view of w, applied
/// in place to u (re/im independently).
inline void apply_relu_mask(const ComplexField& w, ComplexField& u) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    u[i] = cplx{w[i].real() > 0 ? u[i].real() : 0.0, w[i].imag() > 0 ? u[i].imag() : 0.0};
  }
}

inline Cotangent vjp_sspgd(const KSpaceGrid& x, const SspgdParams& p, const KSpaceGrid& seed,
                           bool want_params) {
  const bool relu = p.act == Activation::relu;

  // Buffers are scoped tightly: the DEQ memory contract caps the number of
  // live grid-sized fields during the backward pass.
  ComplexField cu = filterbank_forward(seed, p.bank);
  ComplexField h;  // act(w), kept only when the parameter side is wanted
  {
    ComplexField w = filterbank_forward(x, p.bank);
    if (relu) apply_relu_mask(w, cu);
    if (want_params) {
      h = std::move(w);
      if (relu) relu_complex_inplace(h);
    }
  }

  // Input side: u - eta * C^H( relu'(w) . C u ).
  Cotangent cot;
  {
    KSpaceGrid adj = filterbank_adjoint(cu, p.bank);
    KSpaceGrid wi = seed;
    axpy(cplx{-p.eta, 0}, adj.field(), wi.field());
    cot.wrt_input = std::move(wi);
  }

  if (want_params) {
    // Parameter side, in reversed-tap (sbar) coordinates:
    //   d<seed, G(x)> / d sbar = -eta * [ H(seed)^H h + H(x)^H (relu'(w) . C seed) ]
    // with h = act(w); mapping back to stored taps flips each window axis.
    const std::vector<cplx> g1 = lift_correlation(seed.field(), h, p.bank.d1, p.bank.d2);
    const std::vector<cplx> g2 = lift_correlation(x.field(), cu, p.bank.d1, p.bank.d2);

    const int d1 = p.bank.d1, d2 = p.bank.d2, nc = p.bank.coils;
    cot.wrt_params.assign(2 * p.bank.taps.size(), 0.0);
    for (int j = 0; j < p.bank.count; ++j) {
      for (int i1 = 0; i1 < d1; ++i1) {
        for (int i2 = 0; i2 < d2; ++i2) {
          for (int c = 0; c < nc; ++c) {
            const std::size_t sbar_idx = (static_cast<std::size_t>(j) * d1 + i1) * d2 * nc +
                                         static_cast<std::size_t>(i2) * nc + c;
            const cplx g = -p.eta * (g1[sbar_idx] + g2[sbar_idx]);
            const std::size_t tap_idx =
                (static_cast<std::size_t>(j) * d1 + (d1 - 1 - i1)) * d2 * nc +
                static_cast<std::size_t>(d2 - 1 - i2) * nc + c;
            cot.wrt_params[2 * tap_idx] = g.real();
            cot.wrt_params[2 * tap_idx + 1] = g.imag();
          }
        }
      }
    }
  }
  return cot;
}

inline Cotangent vjp_ksspgd(const KSpaceGrid& x, const KsspgdParams& p, const KSpaceGrid& seed,
                            bool want_params) {
  StackTrace trace;
  stack_forward(p.net, realify(x.field()), &trace);

  Cotangent cot;
  if (want_params) cot.wrt_params.assign(p.net.param_count(), 0.0);
  RealField out_cot = realify(seed.field());
  RealField in_cot = stack_vjp(p.net, trace, std::move(out_cot), -p.eta,
                               want_params ? &cot.wrt_params : nullptr);
  KSpaceGrid wi = seed;
  axpy(cplx{-p.eta, 0}, complexify(in_cot), wi.field());
  cot.wrt_input = std::move(wi);
  return cot;
}

inline Cotangent vjp_hsspgd(const KSpaceGrid& x, const HsspgdParams& p, const KSpaceGrid& seed,
                            bool want_params) {
  Cotangent cot;
  const std::size_t nk_params = p.knet.param_count();
  if (want_params) cot.wrt_params.assign(nk_params + p.inet.param_count(), 0.0);

  KSpaceGrid wi = seed;
  {
    StackTrace trace;
    stack_forward(p.knet, realify(x.field()), &trace);
    std::vector<double> kgrad;
    if (want_params) kgrad.assign(nk_params, 0.0);
    RealField in_cot = stack_vjp(p.knet, trace, realify(seed.field()), -p.eta1,
                                 want_params ? &kgrad : nullptr);
    axpy(cplx{-p.eta1, 0}, complexify(in_cot), wi.field());
    if (want_params)
      for (std::size_t i = 0; i < nk_params; ++i) cot.wrt_params[i] = kgrad[i];
  }
  {
    StackTrace trace;
    ComplexField img = fft_centered_field(x.field(), FftDirection::inverse);
    stack_forward(p.inet, realify(img), &trace);
    std::vector<double> igrad;
    if (want_params) igrad.assign(p.inet.param_count(), 0.0);
    // Adjoint of the FFT sandwich: same sandwich around the stack's VJP.
    ComplexField useed = fft_centered_field(seed.field(), FftDirection::inverse);
    RealField in_cot = stack_vjp(p.inet, trace, realify(useed), -p.eta2,
                                 want_params ? &igrad : nullptr);
    ComplexField back = fft_centered_field(complexify(in_cot), FftDirection::forward);
    axpy(cplx{-p.eta2, 0}, back, wi.field());
    if (want_params)
      for (std::size_t i = 0; i < igrad.size(); ++i) cot.wrt_params[nk_params + i] = igrad[i];
  }
  cot.wrt_input = std::move(wi);
  return cot;
}

}  // namespace detail

/// Exact reverse-mode VJP of G at x: wrt_input = J_G(x)^T seed (real pairing
/// on the channel-doubled view), wrt_params matches the flatten() layout.
/// Forward activations are recomputed internally.
inline Cotangent residual_vjp(const KSpaceGrid& x, const NetworkParams& p,
                              const KSpaceGrid& seed) {
  if (const auto* s = std::get_if<SspgdParams>(&p.value))
    return detail::vjp_sspgd(x, *s, seed, true);
  if (const auto* k = std::get_if<KsspgdParams>(&p.value))
    return detail::vjp_ksspgd(x, *k, seed, true);
  return detail::vjp_hsspgd(x, std::get<HsspgdParams>(p.value), seed, true);
}

/// Input-side VJP only; the workhorse of the adjoint fixed-point solve.
inline KSpaceGrid residual_input_vjp(const KSpaceGrid& x, const NetworkParams& p,
                                     const KSpaceGrid& seed) {
  if (const auto* s = std::get_if<SspgdParams>(&p.value))
    return detail::vjp_sspgd(x, *s, seed, false).wrt_input;
  if (const auto* k = std::get_if<KsspgdParams>(&p.value))
    return detail::vjp_ksspgd(x, *k, seed, false).wrt_input;
  return detail::vjp_hsspgd(x, std::get<HsspgdParams>(p.value), seed, false).wrt_input;
}

// ---- activation signatures (for kink detection in gradient checks) ---------------

/// Signs of every ReLU input the residual evaluates at x, in a fixed order,
/// quantized with a deadband: +1 above +band, -1 below -band, 0 inside. Two
/// runs whose signatures differ by a +1/-1 swap crossed a material kink;
/// transitions through the deadband are below the probing resolution.
inline std::vector<std::int8_t> activation_signature(const KSpaceGrid& x,
                                                     const NetworkParams& p,
                                                     double band = 0.0) {
  std::vector<std::int8_t> sig;
  auto quantize = [band](double t) -> std::int8_t {
    if (t > band) return 1;
    if (t < -band) return -1;
    return 0;
  };
  auto push_real = [&sig, &quantize](const RealField& z) {
    for (std::size_t i = 0; i < z.size(); ++i) sig.push_back(quantize(z[i]));
  };
  if (const auto* s = std::get_if<SspgdParams>(&p.value)) {
    if (s->act == Activation::relu) {
      ComplexField w = filterbank_forward(x, s->bank);
      for (std::size_t i = 0; i < w.size(); ++i) {
        sig.push_back(quantize(w[i].real()));
        sig.push_back(quantize(w[i].imag()));
      }
    }
    return sig;
  }
  auto stack_sig = [&push_real](const ConvStack& st, const RealField& in) {
    StackTrace t;
    stack_forward(st, in, &t);
    for (std::size_t l = 0; l + 1 < st.layers.size(); ++l) push_real(t.pre[l]);
  };
  if (const auto* k = std::get_if<KsspgdParams>(&p.value)) {
    stack_sig(k->net, realify(x.field()));
  } else {
    const auto& h = std::get<HsspgdParams>(p.value);
    stack_sig(h.knet, realify(x.field()));
    stack_sig(h.inet, realify(fft_centered_field(x.field(), FftDirection::inverse)));
  }
  return sig;
}

// ---- Lipschitz normalization ------------------------------------------------------

struct LipschitzReport {
  NetworkParams params;
  std::vector<double> layer_norms;  ///< post-normalization spectral estimates
  double budget = 0;                ///< per-layer budget (1-eps)^(1/L)
};

namespace detail {

/// Spectral norm of a conv layer's linear part by power iteration on A^T A
/// over a reference grid.
inline double conv_spectral_norm(const ConvLayer& l, int rows, int cols,
                                 const SpecNormConfig& cfg) {
  Rng rng(cfg.seed);
  RealField v(rows, cols, l.in_ch);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.gaussian();
  ConvLayer lin = l;
  lin.has_bias = false;
  lin.b.clear();
  double lambda = 0;
  for (int it = 0; it < cfg.power_iters; ++it) {
    RealField w = conv_input_vjp(lin, conv_forward(lin, v));
    double wn = frob_norm(w);
    if (wn == 0) return 0.0;
    double vn2 = squared_norm(v);
    double dot = 0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * w[i];
    const double next = dot / vn2;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] /= wn;
    v = std::move(w);
    if (it > 0 && std::abs(next - lambda) <= cfg.tol * std::max(next, 1e-300)) {
      return std::sqrt(next);
    }
    lambda = next;
  }
  throw std::runtime_error("conv_spectral_norm: power iteration did not settle");
}

inline void normalize_stack(ConvStack& s, const SpecNormConfig& cfg, double budget,
                            std::vector<double>& norms) {
  for (auto& l : s.layers) {
    double sn = conv_spectral_norm(l, cfg.ref_rows, cfg.ref_cols, cfg);
    if (sn > budget) {
      const double f = budget / sn;
      for (double& w : l.w) w *= f;
      sn = conv_spectral_norm(l, cfg.ref_rows, cfg.ref_cols, cfg);
    }
    norms.push_back(sn);
  }
}

}  // namespace detail

/// Cap each conv layer's spectral norm at (1-eps)^(1/L) so the stack's
/// Lipschitz product stays within 1-eps (ReLU is 1-Lipschitz). The sspgd
/// variant delegates to spectral_normalize on its filter bank.
inline LipschitzReport lipschitz_normalize(const NetworkParams& p, const SpecNormConfig& cfg) {
  LipschitzReport rep;
  rep.params = p;
  if (auto* s = std::get_if<SspgdParams>(&rep.params.value)) {
    SpectralNormResult r = spectral_normalize(s->bank, cfg);
    s->bank = std::move(r.bank);
    rep.layer_norms.push_back(r.lambda_after);
    rep.budget = 1.0 - cfg.epsilon;
    return rep;
  }
  if (auto* k = std::get_if<KsspgdParams>(&rep.params.value)) {
    rep.budget = std::pow(1.0 - cfg.epsilon, 1.0 / k->net.layers.size());
    detail::normalize_stack(k->net, cfg, rep.budget, rep.layer_norms);
    return rep;
  }
  auto& h = std::get<HsspgdParams>(rep.params.value);
  rep.budget = std::pow(1.0 - cfg.epsilon, 1.0 / h.knet.layers.size());
  detail::normalize_stack(h.knet, cfg, rep.budget, rep.layer_norms);
  detail::normalize_stack(h.inet, cfg, rep.budget, rep.layer_norms);
  return rep;
}

}  // namespace kdeq
