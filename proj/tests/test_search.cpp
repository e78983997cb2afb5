#include <catch2/catch_amalgamated.hpp>

#include "povmsim/constructions.hpp"
#include "povmsim/search.hpp"

using namespace povmsim;

TEST_CASE("random_povm validity and determinism") {
  Povm p = random_povm(2, 4, 11);
  CHECK(is_valid(p));
  Povm q = random_povm(3, 9, 7);
  CHECK(is_valid(q));
  Povm q2 = random_povm(3, 9, 7);
  for (int a = 0; a < 9; ++a) CHECK(max_abs(Mat(q.effects[a] - q2.effects[a])) == 0.0);

  Povm one = random_povm(2, 1, 3);
  CHECK(max_abs(Mat(one.effects[0] - Mat::Identity(2, 2))) < 1e-12);
}

TEST_CASE("best_violator aligns with basis projectors") {
  Mat p0 = Mat::Zero(2, 2), p1 = Mat::Zero(2, 2);
  p0(0, 0) = 1;
  p1(1, 1) = 1;
  Povm out = best_violator({p0, p1}, 2, 2);
  REQUIRE(is_valid(out));
  double obj = frobenius_inner(p0, out.effects[0]).real() + frobenius_inner(p1, out.effects[1]).real();
  CHECK(obj == Catch::Approx(2.0).margin(1e-6));
  CHECK(max_abs(Mat(out.effects[0] - p0)) < 1e-5);
}

TEST_CASE("best_violator with zero gammas returns maximally mixed effects") {
  std::vector<Mat> zeros(4, Mat::Zero(2, 2));
  Povm out = best_violator(zeros, 2, 4);
  REQUIRE(is_valid(out));
  for (int a = 0; a < 4; ++a) CHECK(max_abs(Mat(out.effects[a] - Mat::Identity(2, 2) / 4.0)) < 1e-4);
}

TEST_CASE("violator from the qubit-SIC dual stays at the SIC threshold") {
  WitnessCertificate cert = dual_certificate(qubit_sic(), NoiseKind::Depolarizing);
  std::vector<Mat> neg;
  for (const Mat& g : cert.gammas) neg.push_back(-g);
  Povm violator = best_violator(neg, 2, 4);
  double v = visibility(violator, NoiseKind::Depolarizing).v;
  CHECK(v <= 0.8165 + 1e-4);
}

TEST_CASE("seesaw d=2 converges to the SIC visibility") {
  SearchOptions opts;
  opts.restarts = 2;
  opts.max_iter = 30;
  opts.seed = 5;
  opts.threads = 3;
  SearchOutcome out = seesaw(random_povm(2, 4, 99), opts);
  REQUIRE(out.best_index >= 0);
  CHECK(out.traces[static_cast<size_t>(out.best_index)].best_result.v ==
        Catch::Approx(std::sqrt(2.0 / 3.0)).margin(1e-3));
  // visibility sequence of accepted steps is non-increasing
  for (const auto& tr : out.traces) {
    double last = 2.0;
    for (const auto& it : tr.iterations)
      if (it.accepted) {
        CHECK(it.visibility <= last + 1e-7);
        last = it.visibility;
      }
  }
}

TEST_CASE("seesaw trace is reproducible for a fixed seed") {
  SearchOptions opts;
  opts.restarts = 1;
  opts.max_iter = 8;
  opts.seed = 42;
  SearchOutcome a = seesaw(random_povm(2, 4, 1), opts);
  SearchOutcome b = seesaw(random_povm(2, 4, 1), opts);
  REQUIRE(a.traces.size() == b.traces.size());
  for (size_t i = 0; i < a.traces.size(); ++i) {
    REQUIRE(a.traces[i].iterations.size() == b.traces[i].iterations.size());
    for (size_t k = 0; k < a.traces[i].iterations.size(); ++k)
      CHECK(a.traces[i].iterations[k].visibility == b.traces[i].iterations[k].visibility);
  }
}

TEST_CASE("active outcome detection") {
  Povm f = flag(qubit_sic(), 1);
  CHECK(active_outcomes(f).size() == 5);
  Povm h = hesse_sic();
  CHECK(active_outcomes(h).size() == 9);
}
