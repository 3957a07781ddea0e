#include <catch2/catch_amalgamated.hpp>

#include "sdmimo/channel.hpp"
#include "sdmimo/estimator.hpp"
#include "sdmimo/rng.hpp"

using namespace sdmimo;

TEST_CASE("steering vectors") {
  SECTION("broadside is all ones") {
    CHECK((steering_bs(0.0, 8, 0.125) - CVec::Ones(8)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((steering_ue(0.0, 8) - CVec::Ones(8)).cwiseAbs().maxCoeff() < 1e-15);
  }
  SECTION("30 degrees at one-eighth spacing steps by pi/8") {
    const CVec a = steering_bs(deg2rad(30.0), 2, 0.125);
    CHECK(std::abs(a(1) - std::exp(-kJ * (kPi / 8.0))) < 1e-12);
  }
  SECTION("user array at 90 degrees alternates sign") {
    const CVec a = steering_ue(deg2rad(90.0), 2);
    CHECK(std::abs(a(1) - std::exp(-kJ * kPi)) < 1e-12);
    CHECK(std::abs(a(1) - Complex(-1.0, 0.0)) < 1e-12);
  }
  SECTION("unit-modulus entries, norm^2 = n, conjugate symmetry") {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      const double th = rng.uniform(-1.4, 1.4);
      const CVec a = steering_bs(th, 16, 0.125);
      CHECK(a.squaredNorm() == Catch::Approx(16.0));
      for (int i = 0; i < 16; ++i) CHECK(std::abs(a(i)) == Catch::Approx(1.0));
      const CVec am = steering_bs(-th, 16, 0.125);
      CHECK((am - a.conjugate()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("su_channel_matrix") {
  ArrayGeometry g;
  g.n_bs = 6;
  g.n_ue = 4;

  SECTION("single broadside path with unit gain is all ones") {
    SuChannelParams p;
    p.aoas = RVec::Zero(1);
    p.aods = RVec::Zero(1);
    p.gains = CVec::Ones(1);
    const CMat h = su_channel_matrix(p, g);
    CHECK((h - CMat::Ones(6, 4)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(h.squaredNorm() == Catch::Approx(6.0 * 4.0));  // rank-1 outer product norm
  }
  SECTION("zero-gain path contributes nothing") {
    SuChannelParams p;
    p.aoas = (RVec(2) << 0.2, -0.4).finished();
    p.aods = (RVec(2) << 0.1, 0.6).finished();
    p.gains = (CVec(2) << Complex(1, 0), Complex(0, 0)).finished();
    const CMat h = su_channel_matrix(p, g);
    const CMat expect = (1.0 / std::sqrt(2.0)) * steering_bs(0.2, 6, g.d_bs) *
                        steering_ue(0.1, 4).adjoint();
    CHECK((h - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("matrix form equals the elementwise sum form") {
    Rng rng(2);
    SuChannelParams p;
    p.aoas = (RVec(3) << -0.5, 0.1, 0.8).finished();
    p.aods = (RVec(3) << 0.3, -0.2, 0.9).finished();
    p.gains = (CVec(3) << rng.cgaussian(), rng.cgaussian(), rng.cgaussian()).finished();
    const CMat h = su_channel_matrix(p, g);
    CMat sum = CMat::Zero(6, 4);
    for (int k = 0; k < 3; ++k)
      sum += p.gains(k) * steering_bs(p.aoas(k), 6, g.d_bs) * steering_ue(p.aods(k), 4).adjoint();
    sum /= std::sqrt(3.0);
    CHECK((h - sum).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("simo_channel") {
  ArrayGeometry g;
  g.n_bs = 5;
  SECTION("single broadside path") {
    MuUserChannel u;
    u.aoas = RVec::Zero(1);
    u.gains = CVec::Ones(1);
    CHECK((simo_channel(u, g) - CVec::Ones(5)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("zero gains give the zero vector") {
    MuUserChannel u;
    u.aoas = (RVec(2) << 0.1, 0.7).finished();
    u.gains = CVec::Zero(2);
    CHECK(simo_channel(u, g).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("matches direct summation") {
    Rng rng(3);
    MuUserChannel u;
    u.aoas = (RVec(2) << -0.3, 0.4).finished();
    u.gains = (CVec(2) << rng.cgaussian(), rng.cgaussian()).finished();
    CVec direct = (u.gains(0) * steering_bs(-0.3, 5, g.d_bs) + u.gains(1) * steering_bs(0.4, 5, g.d_bs)) /
                  std::sqrt(2.0);
    CHECK((simo_channel(u, g) - direct).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("received_pilot_block") {
  ArrayGeometry g;
  g.n_bs = 8;
  g.n_ue = 4;
  SuChannelParams p;
  p.aoas = RVec::Zero(1);
  p.aods = RVec::Zero(1);
  p.gains = CVec::Ones(1);
  const CMat h = su_channel_matrix(p, g);
  CMat s(4, 3);
  for (int t = 0; t < 3; ++t) s.col(t) = step1_precoder(4);

  SECTION("noiseless hook gives sqrt(P) H S exactly") {
    Rng rng(4);
    const CMat x = received_pilot_block(h, s, 2.5, rng, false);
    CHECK((x - std::sqrt(2.5) * h * s).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("pilot norm validation") {
    Rng rng(4);
    CMat bad = s;
    bad(0, 1) = Complex(2.0, 0.0);
    CHECK_THROWS_AS(received_pilot_block(h, bad, 1.0, rng), std::invalid_argument);
  }
  SECTION("P = 0 leaves unit-variance noise") {
    Rng rng(5);
    const int t = 20000;
    CMat s1 = CMat::Zero(4, t);
    s1.row(0).setOnes();
    const CMat x = received_pilot_block(h, s1, 0.0, rng);
    const double var = x.squaredNorm() / static_cast<double>(x.size());
    CHECK(var == Catch::Approx(1.0).margin(0.02));
  }
  SECTION("energy budget E||X||^2 = P ||HS||^2 + Nr T") {
    Rng rng(6);
    const int t = 4000;
    CMat s1 = CMat::Zero(4, t);
    s1.row(0).setOnes();
    const double p_lin = 3.0;
    const CMat x = received_pilot_block(h, s1, p_lin, rng);
    const double expect = p_lin * (h * s1).squaredNorm() + 8.0 * t;
    CHECK(x.squaredNorm() == Catch::Approx(expect).epsilon(0.05));
  }
}

TEST_CASE("sample_su_channel respects constraints") {
  const AoaGrid aoa_grid = AoaGrid::uniform_degrees();
  const AodGrid aod_grid = AodGrid::uniform_cosine(128);
  ChannelSamplerSpec spec;
  spec.aoa_sector = deg2rad(45.0);
  spec.min_aoa_spacing = deg2rad(20.0);
  spec.gain_model = GainModel::truncated_gaussian;
  spec.tau = 0.5;

  Rng rng(7);
  SECTION("single path always inside the sector") {
    for (int i = 0; i < 500; ++i) {
      const SuChannelParams p = sample_su_channel(spec, 1, aoa_grid.angles, aod_grid.angles, rng);
      CHECK(std::abs(p.aoas(0)) <= spec.aoa_sector + 1e-12);
      CHECK(std::abs(std::sin(p.aods(0))) <= std::sin(spec.aod_sector) + 1e-9);
    }
  }
  SECTION("three paths keep spacing in angle and direction cosine") {
    for (int i = 0; i < 2000; ++i) {
      const SuChannelParams p = sample_su_channel(spec, 3, aoa_grid.angles, aod_grid.angles, rng);
      for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
          CHECK(std::abs(p.aoas(a) - p.aoas(b)) >= spec.min_aoa_spacing - 1e-12);
          CHECK(std::abs(std::sin(p.aods(a)) - std::sin(p.aods(b))) >= spec.min_aod_spacing_cos - 1e-12);
        }
      CHECK(std::is_sorted(p.aoas.begin(), p.aoas.end()));
    }
  }
  SECTION("truncated gains respect the threshold") {
    double min_re = 1e9, min_im = 1e9;
    for (int i = 0; i < 10000; ++i) {
      const SuChannelParams p = sample_su_channel(spec, 1, aoa_grid.angles, aod_grid.angles, rng);
      min_re = std::min(min_re, std::abs(p.gains(0).real()));
      min_im = std::min(min_im, std::abs(p.gains(0).imag()));
    }
    CHECK(min_re >= 0.5);
    CHECK(min_im >= 0.5);
  }
  SECTION("on-grid draws land exactly on grid points") {
    ChannelSamplerSpec s2 = spec;
    s2.on_grid_aoa = true;
    const SuChannelParams p = sample_su_channel(s2, 2, aoa_grid.angles, aod_grid.angles, rng);
    for (int i = 0; i < 2; ++i) {
      const int gi = aoa_grid.nearest_index(p.aoas(i));
      CHECK(p.aoas(i) == aoa_grid.angles(gi));
      CHECK(p.aods(i) == aod_grid.angles(p.aod_grid_indices[static_cast<std::size_t>(i)]));
    }
  }
  SECTION("infeasible spacing errors out") {
    ChannelSamplerSpec bad = spec;
    bad.aoa_sector = deg2rad(10.0);
    bad.min_aoa_spacing = deg2rad(30.0);
    CHECK_THROWS_AS(sample_su_channel(bad, 3, aoa_grid.angles, aod_grid.angles, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("sample_mu_channel") {
  const AoaGrid grid = AoaGrid::uniform_degrees();
  ChannelSamplerSpec spec;
  spec.min_aoa_spacing = deg2rad(20.0);
  Rng rng(8);
  const MuChannelParams p = sample_mu_channel(spec, 4, {1, 2, 3, 1}, grid.angles, rng);
  REQUIRE(p.n_users() == 4);
  CHECK(p.users[0].n_paths() == 1);
  CHECK(p.users[2].n_paths() == 3);
  for (const auto& u : p.users)
    for (int a = 0; a < u.n_paths(); ++a)
      for (int b = a + 1; b < u.n_paths(); ++b)
        CHECK(std::abs(u.aoas(a) - u.aoas(b)) >= spec.min_aoa_spacing - 1e-12);
}
