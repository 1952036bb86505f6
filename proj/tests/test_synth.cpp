#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "kdeq/synth.hpp"

using namespace kdeq;

TEST_CASE("gen_harmonics basics") {
  SECTION("DC mode with unit amplitude is a constant grid") {
    HarmonicSpec spec;
    spec.rows = 4;
    spec.cols = 4;
    spec.modes = {{0, 0}};
    spec.amplitudes = {{cplx{1, 0}}};
    const KSpaceGrid x = gen_harmonics(spec);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(std::abs(x.at(r, c, 0) - cplx{1, 0}) < 1e-14);
  }

  SECTION("single mode is annihilated by its recurrence filter") {
    HarmonicSpec spec;
    spec.rows = 8;
    spec.cols = 1;
    spec.modes = {{1, 0}};
    spec.amplitudes = {{cplx{1, 0}}};
    const KSpaceGrid x = gen_harmonics(spec);
    FilterBank bank(1, 2, 1, 1);
    bank.tap(0, 0, 0, 0) = {1, 0};
    bank.tap(0, 1, 0, 0) = -std::polar(1.0, M_PI / 4);
    CHECK(frob_norm(filterbank_forward(x, bank)) <= 1e-12 * frob_norm(x.field()));
  }

  SECTION("duplicate modes rejected") {
    HarmonicSpec spec;
    spec.modes = {{1, 0}, {1, 0}};
    CHECK_THROWS_AS(gen_harmonics(spec), std::invalid_argument);
  }

  SECTION("seeded amplitudes are deterministic") {
    HarmonicSpec spec;
    spec.rows = 8;
    spec.cols = 8;
    spec.coils = 2;
    spec.modes = {{1, 2}, {3, 0}};
    spec.seed = 55;
    const KSpaceGrid a = gen_harmonics(spec), b = gen_harmonics(spec);
    CHECK(distance(a.field(), b.field()) == 0.0);
  }
}

TEST_CASE("generator/rank consistency") {
  for (int r = 1; r <= 4; ++r) {
    HarmonicSpec spec;
    spec.rows = 32;
    spec.cols = 1;
    spec.coils = 1;
    for (int j = 0; j < r; ++j) spec.modes.push_back({3 * j + 1, 0});
    spec.seed = 100 + r;
    CHECK(hankel_rank(gen_harmonics(spec), 6, 1) == r);
  }

  SECTION("2-D two-harmonic signal has rank 2 under a 4x4 window") {
    HarmonicSpec spec;
    spec.rows = 16;
    spec.cols = 16;
    spec.modes = {{1, 2}, {5, 3}};
    spec.seed = 9;
    CHECK(hankel_rank(gen_harmonics(spec), 4, 4) == 2);
  }

  SECTION("zero grid has rank 0") {
    KSpaceGrid z(8, 8, 1);
    CHECK(hankel_rank(z, 3, 3) == 0);
  }

  SECTION("random grid is full rank") {
    const KSpaceGrid x = kdeq_test::random_grid(16, 1, 1, 77);
    CHECK(hankel_rank(x, 4, 1) == 4);
  }
}

TEST_CASE("mask generation") {
  SECTION("R=1 keeps everything") {
    MaskSpec spec;
    spec.kind = MaskKind::random_1d;
    spec.accel = 1.0;
    const SamplingMask m = gen_mask(spec, 16, 8);
    CHECK(m.omega_count() == 16 * 8);
  }

  SECTION("1d-random honors budget and ACS") {
    MaskSpec spec;
    spec.kind = MaskKind::random_1d;
    spec.accel = 4.0;
    spec.acs_rows = 8;
    spec.seed = 12;
    const SamplingMask m = gen_mask(spec, 64, 4);
    long lines = 0;
    for (int r = 0; r < 64; ++r) lines += m.keep(r, 0) ? 1 : 0;
    CHECK(lines == 16);
    for (int r = 28; r < 36; ++r) CHECK(m.keep(r, 0));  // centered 8 lines
    m.validate();
  }

  SECTION("1d-regular strides at R outside the (absent) ACS") {
    MaskSpec spec;
    spec.kind = MaskKind::regular_1d;
    spec.accel = 6.0;
    spec.seed = 3;
    const SamplingMask m = gen_mask(spec, 60, 2);
    for (int r = 0; r < 60; ++r) CHECK(m.keep(r, 0) == (r % 6 == 0));
  }

  SECTION("cardinality within one line of N/R for all kinds") {
    for (auto kind : {MaskKind::random_1d, MaskKind::regular_1d, MaskKind::random_2d,
                      MaskKind::regular_2d}) {
      for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        MaskSpec spec;
        spec.kind = kind;
        spec.accel = 4.0;
        spec.seed = seed;
        const bool one_d = kind == MaskKind::random_1d || kind == MaskKind::regular_1d;
        if (one_d) spec.acs_rows = 6;
        if (!one_d) {
          spec.acs_rows = 8;
          spec.acs_cols = 8;
        }
        const SamplingMask m = gen_mask(spec, 32, 32);
        if (one_d) {
          long lines = 0;
          for (int r = 0; r < 32; ++r) lines += m.keep(r, 0) ? 1 : 0;
          CHECK(std::abs(lines - 8) <= 1);
        } else {
          CHECK(std::abs(m.omega_count() - 256) <= 32);  // one "line" of points
        }
      }
    }
  }

  SECTION("deterministic by seed") {
    MaskSpec spec;
    spec.kind = MaskKind::random_2d;
    spec.accel = 4.0;
    spec.acs_rows = 4;
    spec.acs_cols = 4;
    spec.seed = 31;
    const SamplingMask a = gen_mask(spec, 24, 24), b = gen_mask(spec, 24, 24);
    CHECK(a.same_pattern(b));
  }

  SECTION("variable density pulls samples toward the center") {
    MaskSpec flat, ramp;
    flat.kind = ramp.kind = MaskKind::random_2d;
    flat.accel = ramp.accel = 8.0;
    flat.seed = ramp.seed = 4;
    ramp.vd_power = 4.0;
    const SamplingMask a = gen_mask(flat, 48, 48), b = gen_mask(ramp, 48, 48);
    auto center_mass = [](const SamplingMask& m) {
      double d = 0;
      long n = 0;
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
          if (m.keep(r, c)) {
            d += std::abs(r - 23.5) + std::abs(c - 23.5);
            ++n;
          }
      return d / n;
    };
    CHECK(center_mass(b) < center_mass(a));
  }

  SECTION("ACS beyond the budget is rejected") {
    MaskSpec spec;
    spec.kind = MaskKind::random_1d;
    spec.accel = 16.0;
    spec.acs_rows = 24;
    CHECK_THROWS_AS(gen_mask(spec, 64, 4), std::invalid_argument);
  }
}

TEST_CASE("noise injection") {
  const KSpaceGrid x = kdeq_test::random_grid(64, 64, 1, 8);

  SECTION("sigma 0 is the identity") {
    const KSpaceGrid y = add_noise(x, 0.0, 17);
    CHECK(distance(x.field(), y.field()) == 0.0);
  }

  SECTION("empirical std within 5% of sigma") {
    const double sigma = 0.3;
    const KSpaceGrid y = add_noise(x, sigma, 17);
    double acc = 0;
    for (std::size_t i = 0; i < x.field().size(); ++i)
      acc += std::norm(y.field()[i] - x.field()[i]);
    const double emp = std::sqrt(acc / static_cast<double>(x.field().size()));
    CHECK(std::abs(emp - sigma) <= 0.05 * sigma);
  }

  SECTION("same seed, same noise") {
    const KSpaceGrid a = add_noise(x, 0.1, 99), b = add_noise(x, 0.1, 99);
    CHECK(distance(a.field(), b.field()) == 0.0);
  }

  SECTION("negative sigma rejected") {
    CHECK_THROWS_AS(add_noise(x, -1.0, 0), std::invalid_argument);
  }
}
