#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "povmsim/reports.hpp"
#include "support/net_oracle.hpp"

using namespace povmsim;

TEST_CASE("sweep endpoints and csv form") {
  SweepSpec spec;
  spec.lo = 0.0;
  spec.hi = kPi / 9.0;
  spec.samples = 5;
  auto rows = cmd_sweep(spec, 4);
  REQUIRE(rows.size() == 5);
  CHECK(rows.front().v == Catch::Approx(0.7931).margin(5e-4));
  CHECK(rows.back().v == Catch::Approx(0.8058).margin(5e-4));
  for (const auto& r : rows) {
    CHECK(!r.failed);
    CHECK(r.exact);
  }
  // curve is not flat
  CHECK(rows.back().v - rows.front().v > 5e-3);

  std::ostringstream os;
  write_sweep_csv(rows, os);
  std::string s = os.str();
  CHECK(s.rfind("theta,v,exact,gap,failed\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 6);
  CHECK(s.find(',') != std::string::npos);
  CHECK(s.find(';') == std::string::npos);  // locale-independent separators

  CHECK_THROWS_AS(cmd_sweep(SweepSpec{"theta", 0.1, 0.1, 5, NoiseKind::Depolarizing}, 1), std::invalid_argument);
  CHECK_THROWS_AS(cmd_sweep(SweepSpec{"theta", 0.0, 0.1, 1, NoiseKind::Depolarizing}, 1), std::invalid_argument);
}

TEST_CASE("tables reproduce the published desk-scale rows") {
  TablesOptions topt;
  topt.threads = 4;
  auto rows = cmd_tables(topt);
  int computed = 0, skipped = 0;
  for (const auto& r : rows) {
    if (r.skipped) {
      ++skipped;
      continue;
    }
    INFO(r.label << " " << r.kind);
    CHECK(!r.failed);
    // published values carry 4-5 digits; allow rounding of the last digit
    CHECK(r.deviation < 5e-4);
    ++computed;
  }
  CHECK(computed >= 18);
  CHECK(skipped >= 6);  // d=4 rows without --long plus d=5,6 fiducial rows
}

TEST_CASE("verify rows are all green") {
  auto rows = cmd_verify(4);
  REQUIRE(rows.size() == 7);
  for (const auto& r : rows) {
    INFO(r.what);
    CHECK(r.ok);
    CHECK(r.residual <= 1e-9);
  }
}

TEST_CASE("net oracle brackets the SDP value") {
  testsupport::NetOracle oracle(3);  // coarser net keeps the unit test quick
  CHECK(oracle.axes.size() > 300);
  CHECK(oracle.covering_angle < 0.1);

  // qubit SIC: oracle from below, SDP exact
  double net_v = oracle.max_visibility(qubit_sic());
  double sdp_v = visibility(qubit_sic(), NoiseKind::Depolarizing).v;
  CHECK(net_v <= sdp_v + 1e-6);
  CHECK(sdp_v <= net_v + oracle.resolution());

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Mat> g;
    Mat s = Mat::Zero(2, 2);
    int n = 3 + static_cast<int>(rng() % 2);
    for (int a = 0; a < n; ++a) {
      Mat b(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) b(i, j) = cxd(u(rng), u(rng));
      g.push_back(b * b.adjoint());
      s += g.back();
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    Mat si = es.operatorInverseSqrt();
    Povm p;
    p.dim = 2;
    for (auto& m : g) p.effects.push_back(si * m * si);
    double nv = oracle.max_visibility(p);
    double sv = visibility(p, NoiseKind::Depolarizing).v;
    CHECK(nv <= sv + 1e-6);
    CHECK(sv <= nv + oracle.resolution());
  }
}
