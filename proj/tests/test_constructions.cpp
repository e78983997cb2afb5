#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "povmsim/constructions.hpp"
#include "povmsim/povm.hpp"

using namespace povmsim;

TEST_CASE("weyl_heisenberg generators") {
  auto [X2, Z2] = weyl_heisenberg(2);
  Mat sx(2, 2), sz(2, 2);
  sx << 0, 1, 1, 0;
  sz << 1, 0, 0, -1;
  CHECK(max_abs(Mat(X2 - sx)) < 1e-15);
  CHECK(max_abs(Mat(Z2 - sz)) < 1e-15);

  auto [X3, Z3] = weyl_heisenberg(3);
  cxd w = std::polar(1.0, 2.0 * kPi / 3.0);
  CHECK(std::abs(Z3(1, 1) - w) < 1e-15);
  CHECK(std::abs(Z3(2, 2) - w * w) < 1e-15);

  for (int d : {2, 3, 4, 5, 7}) {
    auto [X, Z] = weyl_heisenberg(d);
    CHECK(max_abs(Mat(mat_power(X, d) - Mat::Identity(d, d))) < 1e-12);
    CHECK(max_abs(Mat(mat_power(Z, d) - Mat::Identity(d, d))) < 1e-12);
  }
}

TEST_CASE("sic constructions pass the overlap test") {
  for (double theta : {0.0, kPi / 18.0, kPi / 9.0}) {
    Povm p = qutrit_sic(theta);
    CHECK(is_valid(p));
    CHECK(p.outcomes() == 9);
  }
  CHECK(is_valid(qubit_sic()));
  CHECK(is_valid(hesse_sic()));
  CHECK(is_valid(ququart_sic()));
  CHECK(ququart_sic().outcomes() == 16);

  // d=4 pairwise overlap^2 = 1/5 directly
  auto states = wh_orbit_states(ququart_sic_fiducial());
  CHECK(sic_overlap_deviation(states) < 1e-12);

  // non-SIC fiducial rejected
  Vec bad(3);
  bad << 1, 0, 0;
  CHECK_THROWS_AS(sic_from_fiducial(bad), std::invalid_argument);
}

TEST_CASE("hesse matrix equals the WH orbit of the theta=0 fiducial") {
  Povm h = hesse_sic();
  Povm s = qutrit_sic(0.0);
  // effects match up to relabeling (solve the 9x9 matching greedily)
  std::vector<bool> used(9, false);
  for (int a = 0; a < 9; ++a) {
    int hit = -1;
    for (int b = 0; b < 9; ++b)
      if (!used[static_cast<size_t>(b)] && max_abs(Mat(h.effects[a] - s.effects[b])) < 1e-9) hit = b;
    REQUIRE(hit >= 0);
    used[static_cast<size_t>(hit)] = true;
  }
  // in fact the column order matches the (a0,a1) row-major orbit exactly
  for (int a = 0; a < 9; ++a) CHECK(max_abs(Mat(h.effects[a] - s.effects[a])) < 1e-9);

  CHECK(max_abs(Mat(h.effects[0] + h.effects[1] + h.effects[2] + h.effects[3] + h.effects[4] + h.effects[5] +
                    h.effects[6] + h.effects[7] + h.effects[8] - Mat::Identity(3, 3))) < 1e-12);
}

TEST_CASE("hesse decomposition model") {
  HesseDecomposition dec = hesse_simulation_model();
  CHECK(dec.orbit.size() == 216);
  CHECK(dec.triples.size() == 72);
  CHECK(dec.model.entries.size() == 72);
  for (const auto& e : dec.model.entries) CHECK(e.weight == Catch::Approx(1.0 / 72.0));

  // each triple pairwise orthogonal
  for (const auto& t : dec.triples)
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        CHECK(std::abs(dec.orbit[static_cast<size_t>(t[static_cast<size_t>(i)])].dot(
                  dec.orbit[static_cast<size_t>(t[static_cast<size_t>(j)])])) < 1e-10);

  // SL(2,3)-orbit identity with the 1/72 decomposition weight
  auto [V, W] = hesse_stabilizer_generators();
  UnitarySet sl23 = generate_group({V, W}, 64);
  Vec xi = hesse_decomposition_fiducial();
  Mat sum = Mat::Zero(3, 3);
  for (const Mat& s : sl23.elements) sum += s * projector(xi) * s.adjoint();
  sum /= 72.0;
  double v = hesse_visibility();
  Vec phi0 = qutrit_sic_fiducial(0.0);
  Mat rhs = (v / 3.0) * projector(phi0) + ((1.0 - v) / 9.0) * Mat::Identity(3, 3);
  CHECK(max_abs(Mat(sum - rhs)) < 1e-12);

  // mixture reproduces the depolarized Hesse SIC at v* = (1 + 4 cos(pi/9))/6
  DecompositionReport rep = verify_decomposition(dec.model, depolarize(hesse_sic(), v));
  CHECK(rep.max_deviation < 1e-12);
  CHECK(rep.max_projectivity_residual < 1e-12);

  // the basis containing |xi| carries outcome labels {0,5,8} (columns 1,6,9)
  bool found = false;
  Vec cxi = phase_canonical(xi);
  for (size_t t = 0; t < dec.triples.size(); ++t) {
    for (int k = 0; k < 3; ++k)
      if ((dec.orbit[static_cast<size_t>(dec.triples[t][static_cast<size_t>(k)])] - cxi).cwiseAbs().maxCoeff() <
          1e-9) {
        CHECK(dec.outcome_triples[t] == std::array<int, 3>{0, 5, 8});
        found = true;
      }
  }
  CHECK(found);
}

TEST_CASE("verify_decomposition on a single basis") {
  Mat p0 = Mat::Zero(2, 2), p1 = Mat::Zero(2, 2);
  p0(0, 0) = 1;
  p1(1, 1) = 1;
  SimulationModel m;
  m.output_outcomes = 2;
  m.entries = {{1.0, ProjectiveMeasurement{{2, {p0, p1}, ""}}}};
  Povm target;
  target.dim = 2;
  target.effects = {p0, p1};
  auto rep = verify_decomposition(m, target);
  CHECK(rep.max_deviation == 0.0);
}

TEST_CASE("fsic2 closed forms") {
  CHECK(fsic2_params(2).v == Catch::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(fsic2_params(3).v == Catch::Approx(0.798452).margin(5e-7));
  CHECK(fsic2_params(4).v == Catch::Approx(0.785583).margin(5e-7));

  for (int d = 2; d <= 14; ++d) {
    auto p = fsic2_params(d);
    CHECK(std::abs(2.0 * p.lambda * std::cos(p.theta) * std::cos(p.theta) - 1.0) < 1e-10);
    CHECK(std::abs((d - 1) * p.eps + p.kappa - 1.0) < 1e-10);
    CHECK(std::abs(p.v - (1.0 - d * p.eps)) < 1e-12);
    // second condition set, first two lines
    double c2 = std::cos(2 * p.theta), s2 = std::sin(2 * p.theta);
    CHECK(std::abs(p.lambda * (3 + c2 + std::sqrt(2.0) * s2) - ((3 + std::sqrt(3.0)) * p.v + 6.0 / d * (1 - p.v))) <
          1e-9);
    CHECK(std::abs(p.lambda * (3 - c2 - std::sqrt(2.0) * s2) - ((3 - std::sqrt(3.0)) * p.v + 6.0 / d * (1 - p.v))) <
          1e-9);
  }

  // large-d limit of the closed form: monotone decrease toward (3 - sqrt3)/2
  const double lim = (3.0 - std::sqrt(3.0)) / 2.0;
  CHECK(fsic2_params(1000).v == Catch::Approx(lim).margin(2e-2));
  CHECK(std::abs(fsic2_params(1000).v - lim) < std::abs(fsic2_params(100).v - lim));
  CHECK(fsic2_params(1000000).v == Catch::Approx(lim).margin(5e-4));
  CHECK(fsic2_params(1000).outside_proven_range);
}

TEST_CASE("fsic2 model reproduces the depolarized flagged SIC") {
  for (int d : {3, 4, 5}) {
    auto p = fsic2_params(d);
    SimulationModel m = fsic2_model(d);
    CHECK(static_cast<int>(m.entries.size()) == 6 * (1 << (d - 2)));
    Povm target = depolarize(fsic2_povm(d), p.v);
    auto rep = verify_decomposition(m, target);
    CHECK(rep.max_deviation < 1e-9);
    CHECK(rep.max_projectivity_residual < 1e-10);
    // every measurement is a genuine projective measurement
    for (size_t l = 0; l < m.entries.size(); l += 7) CHECK(validate_projective(m.entries[l].measurement).empty());
  }
}

TEST_CASE("fsic2 intermediate POVMs have unit-trace effects") {
  // reconstruct the six F^{(ij)} from the refinement by averaging over signs
  for (int d : {3, 4}) {
    SimulationModel m = fsic2_model(d);
    const int per = 1 << (d - 2);
    REQUIRE(static_cast<int>(m.entries.size()) == 6 * per);
    for (int blk = 0; blk < 6; ++blk) {
      std::vector<Mat> f(static_cast<size_t>(d + 2), Mat::Zero(d, d));
      for (int s = 0; s < per; ++s)
        for (int a = 0; a < d + 2; ++a)
          f[static_cast<size_t>(a)] +=
              m.entries[static_cast<size_t>(blk * per + s)].measurement.povm.effects[static_cast<size_t>(a)] /
              per;
      Mat total = Mat::Zero(d, d);
      for (int a = 0; a < d + 2; ++a) {
        total += f[static_cast<size_t>(a)];
        double tr = f[static_cast<size_t>(a)].trace().real();
        if (tr > 1e-9) CHECK(tr == Catch::Approx(1.0).margin(1e-9));  // nonzero effects have unit trace
      }
      CHECK(max_abs(Mat(total - Mat::Identity(d, d))) < 1e-9);
    }
  }
}

TEST_CASE("fsic3 consistency roots") {
  CHECK(fsic3_params(4).v == Catch::Approx(0.78233002).margin(1e-7));
  CHECK(fsic3_params(5).v == Catch::Approx(0.77339360).margin(1e-7));
  CHECK(fsic3_params(6).v == Catch::Approx(0.76576302).margin(1e-7));
  for (int d : {4, 5, 6}) {
    auto p = fsic3_params(d);
    CHECK(p.residual <= 1e-10);
    CHECK(std::abs(p.v - 3.0 / (2.0 * d / (3.0 * std::pow(std::sin(p.theta) * std::sin(p.phi), 2) - 1.0) - (d - 3))) <
          1e-10);
  }
}

TEST_CASE("fsic3 d=9 root", "[slow]") {
  CHECK(fsic3_params(9).v == Catch::Approx(0.74762609).margin(1e-7));
}

TEST_CASE("fsic3 model reproduces the depolarized flagged Hesse") {
  for (int d : {4, 5}) {
    auto p = fsic3_params(d);
    SimulationModel m = fsic3_model(d);
    CHECK(static_cast<int>(m.entries.size()) == 72 * (1 << (d - 3)));
    Povm target = depolarize(fsic3_povm(d), p.v);
    auto rep = verify_decomposition(m, target);
    CHECK(rep.max_deviation < 1e-9);
    CHECK(rep.max_projectivity_residual < 1e-10);
  }
}

TEST_CASE("clifford average of alpha is the qutrit identity third") {
  auto [X, Z] = weyl_heisenberg(3);
  auto [V, W] = hesse_stabilizer_generators();
  UnitarySet pc3 = generate_group({X, V, W}, 512);
  Vec alpha = fsic3_alpha();
  Mat avg = Mat::Zero(3, 3);
  for (const Mat& c : pc3.elements) avg += c * projector(alpha) * c.adjoint();
  avg /= 216.0;
  CHECK(max_abs(Mat(avg - Mat::Identity(3, 3) / 3.0)) < 1e-12);
}
