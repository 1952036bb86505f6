#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "kdeq/fft.hpp"
#include "kdeq/metrics.hpp"

using namespace kdeq;
using kdeq_test::random_grid;
using kdeq_test::random_image;

TEST_CASE("field arithmetic basics") {
  ComplexField a(2, 3, 2), b(2, 3, 2);
  a.at(0, 0, 0) = {1, 2};
  b.at(0, 0, 0) = {3, -1};
  CHECK(inner(a, b) == cplx{1, -7});  // conj(1+2i)*(3-i)
  CHECK(squared_norm(a) == Catch::Approx(5.0));
  axpy(cplx{2, 0}, a, b);
  CHECK(b.at(0, 0, 0) == cplx{5, 3});

  CHECK_THROWS_AS(ComplexField(0, 1, 1), std::invalid_argument);
}

TEST_CASE("field meter tracks live doubles") {
  const auto before = FieldMeter::live().load();
  {
    ComplexField a(4, 4, 2);
    CHECK(FieldMeter::live().load() == before + 64);
    ComplexField b = std::move(a);
    CHECK(FieldMeter::live().load() == before + 64);
    (void)b;
  }
  CHECK(FieldMeter::live().load() == before);
}

TEST_CASE("rng is deterministic and measures correctly") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.gaussian() == b.gaussian());
  }
  // bounded draw stays in range and covers values
  Rng c(7);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 1000; ++i) ++hits[c.below(5)];
  for (int h : hits) CHECK(h > 100);
}

TEST_CASE("grid wrap validates invariants") {
  ComplexField f(2, 2, 1);
  f.at(0, 0, 0) = {1, 0};
  CHECK_NOTHROW(KSpaceGrid::wrap(f));
  f.at(1, 1, 0) = {std::numeric_limits<double>::quiet_NaN(), 0};
  CHECK_THROWS_AS(KSpaceGrid::wrap(f), std::invalid_argument);
}

TEST_CASE("centered DFT of [1,1] puts sqrt(2) at the center bin") {
  ImageGrid img(1, 2, 1);
  img.at(0, 0, 0) = {1, 0};
  img.at(0, 1, 0) = {1, 0};
  KSpaceGrid ks = fft_centered(img);
  CHECK(std::abs(ks.at(0, 0, 0)) < 1e-15);
  CHECK(std::abs(ks.at(0, 1, 0) - cplx{std::sqrt(2.0), 0}) < 1e-15);
}

TEST_CASE("fft is unitary and invertible on random grids") {
  for (auto [n1, n2, nc] : {std::tuple{8, 8, 1}, {16, 5, 3}, {64, 64, 8}, {7, 9, 2}}) {
    ImageGrid x = random_image(n1, n2, nc, 1000 + n1 + n2 + nc);
    KSpaceGrid k = fft_centered(x);
    CHECK(frob_norm(k.field()) ==
          Catch::Approx(frob_norm(x.field())).epsilon(1e-12));  // Parseval
    ImageGrid back = fft_centered_inverse(k);
    CHECK(distance(back.field(), x.field()) <= 1e-12 * frob_norm(x.field()));
  }
}

TEST_CASE("fft roundtrip the other way") {
  KSpaceGrid k = random_grid(12, 10, 2, 5);
  KSpaceGrid k2 = fft_centered(fft_centered_inverse(k));
  CHECK(distance(k2.field(), k.field()) <= 1e-12 * frob_norm(k.field()));
}

TEST_CASE("rss combination") {
  ImageGrid img(1, 1, 2);
  img.at(0, 0, 0) = {3, 0};
  img.at(0, 0, 1) = {0, 4};
  RealField out = coil_combine_rss(img);
  CHECK(out.at(0, 0, 0) == Catch::Approx(5.0));

  SECTION("single coil gives magnitude") {
    ImageGrid one(2, 2, 1);
    one.at(1, 1, 0) = {-3, 4};
    CHECK(coil_combine_rss(one).at(1, 1, 0) == Catch::Approx(5.0));
  }

  SECTION("all-zero grid maps to zero") {
    ImageGrid z(3, 3, 2);
    RealField r = coil_combine_rss(z);
    CHECK(frob_norm(r) == 0.0);
  }

  SECTION("invariant under per-coil global phase") {
    ImageGrid x = random_image(8, 8, 3, 99);
    ImageGrid y = x;
    const double phases[3] = {0.3, -1.2, 2.5};
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        for (int k = 0; k < 3; ++k) y.at(r, c, k) *= std::polar(1.0, phases[k]);
    RealField a = coil_combine_rss(x), b = coil_combine_rss(y);
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    CHECK(d <= 1e-12 * frob_norm(a));
  }
}

TEST_CASE("metrics oracles") {
  SECTION("identity gives (0, inf, 1)") {
    RealField ref(4, 4, 1);
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = 1.0 + static_cast<double>(i);
    MetricsTriple m = metrics(ref, ref);
    CHECK(m.nmse == 0.0);
    CHECK(std::isinf(m.psnr));
    CHECK(m.ssim == Catch::Approx(1.0));
  }

  SECTION("full-energy error has nmse 1") {
    RealField ref(1, 2, 1), rec(1, 2, 1);
    ref.at(0, 0, 0) = 1.0;
    MetricsTriple m = metrics(ref, rec);
    CHECK(m.nmse == Catch::Approx(1.0));
  }

  SECTION("max 1, MSE 0.01 gives 20 dB") {
    // 10*log10(1 / 0.01) = 20, hand-evaluated
    RealField ref(1, 4, 1), rec(1, 4, 1);
    for (int i = 0; i < 4; ++i) {
      ref.at(0, i, 0) = (i == 0) ? 1.0 : 0.5;
      rec.at(0, i, 0) = ref.at(0, i, 0) + 0.1;
    }
    MetricsTriple m = metrics(ref, rec);
    CHECK(m.psnr == Catch::Approx(20.0).epsilon(1e-12));
  }

  SECTION("nmse is scale covariant") {
    RealField ref(6, 6, 1), rec(6, 6, 1);
    Rng rng(3);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref[i] = rng.gaussian();
      rec[i] = ref[i] + 0.1 * rng.gaussian();
    }
    const double base = metrics(ref, rec).nmse;
    RealField ref2 = ref, rec2 = rec;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref2[i] *= -2.5;
      rec2[i] *= -2.5;
    }
    CHECK(metrics(ref2, rec2).nmse == Catch::Approx(base).epsilon(1e-12));
  }

  SECTION("errors") {
    RealField a(2, 2, 1), b(3, 3, 1);
    CHECK_THROWS_AS(metrics(a, b), std::invalid_argument);
    RealField z(2, 2, 1);
    CHECK_THROWS_AS(metrics(z, z), std::invalid_argument);  // zero-norm reference
  }
}
