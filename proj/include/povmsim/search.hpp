#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "povmsim/simulability.hpp"

namespace povmsim {

struct SearchOptions {
  int max_iter = 50;
  double tol = 1e-5;  // accept a step only if visibility drops by more than this
  int restarts = 20;
  std::uint64_t seed = 0;
  NoiseKind noise = NoiseKind::Depolarizing;
  int threads = 1;
  conic::SolveOptions solver;
};

struct SearchIterate {
  int index = 0;
  double visibility = 0.0;
  double gap = 0.0;
  double improvement = 0.0;
  bool accepted = false;
};

struct SearchTrace {
  std::vector<SearchIterate> iterations;
  std::uint64_t seed = 0;
  bool converged = false;
  Povm best_povm;
  VisibilityResult best_result;
};

struct SearchOutcome {
  std::vector<SearchTrace> traces;          // one per restart, input order
  int best_index = -1;                      // trace achieving the lowest visibility
  std::vector<std::vector<int>> clusters;   // trace indices grouped by visibility within 1e-3
};

namespace detail {

// platform-stable normal sampler (std::normal_distribution is
// implementation-defined, which would break byte-reproducibility)
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = next_unit(), u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

 private:
  double next_unit() {
    // (0,1]: avoids log(0)
    return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
  }
  std::mt19937_64 rng_;
  bool have_ = false;
  double spare_ = 0.0;
};

}  // namespace detail

// Gaussian-square construction: E_a = S^{-1/2} G_a S^{-1/2} with G_a = B_a B_a^dag,
// S = sum G_a. Deterministic per seed, byte-identical across runs.
inline Povm random_povm(int d, int n, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("random_povm: need d, n >= 1");
  detail::NormalSampler normal(seed);
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::vector<Mat> g;
    Mat s = Mat::Zero(d, d);
    for (int a = 0; a < n; ++a) {
      Mat b(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) b(i, j) = cxd(normal(), normal()) / std::sqrt(2.0);
      g.push_back(b * b.adjoint());
      s += g.back();
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    if (es.eigenvalues().minCoeff() < 1e-8) continue;  // resample on singular S
    Mat si = es.operatorInverseSqrt();
    Povm p;
    p.dim = d;
    p.label = "random:" + std::to_string(seed);
    for (auto& m : g) p.effects.push_back(si * m * si);
    return p;
  }
  throw std::runtime_error("random_povm: repeated singular Gram matrix");
}

// POVM maximizing sum_a tr(Gamma_a E_a) over n-outcome POVMs in dimension d.
// An optional tie-break target adds a tiny linear pull so flat optima resolve
// deterministically toward the previous iterate.
inline Povm best_violator(const std::vector<Mat>& gammas, int d, int n, const Povm* tie_break_toward = nullptr,
                          const conic::SolveOptions& opts = {}) {
  if (static_cast<int>(gammas.size()) != n) throw std::invalid_argument("best_violator: gamma count != n");
  conic::ConicProblem prob;
  prob.maximize = true;
  std::vector<int> evars;
  for (int a = 0; a < n; ++a) {
    evars.push_back(prob.add_psd_block(d));
    Mat obj = gammas[static_cast<size_t>(a)];
    if (tie_break_toward) obj += 1e-7 * tie_break_toward->effects[static_cast<size_t>(a)];
    prob.set_objective_block(evars.back(), obj);
  }
  Eigen::VectorXd iv = conic::svec(Mat(Mat::Identity(d, d)));
  for (int coord = 0; coord < d * d; ++coord) {
    int row = prob.new_row(iv(coord));
    for (int a = 0; a < n; ++a) prob.add_entry(row, evars[static_cast<size_t>(a)], coord, 1.0);
  }
  conic::ConicSolution sol = conic::solve(prob, opts);
  if (sol.status != conic::SolveStatus::Optimal)
    throw std::runtime_error(std::string("best_violator: solver failure (") + sol.message + ")");
  Povm out;
  out.dim = d;
  out.label = "violator";
  for (int a = 0; a < n; ++a) {
    Mat e = sol.block_value(prob, evars[static_cast<size_t>(a)]);
    out.effects.push_back((e + e.adjoint()) / 2.0);
  }
  return out;
}

// One see-saw run: visibility -> dual certificate -> witness-violating POVM,
// accepting steps that lower the visibility by more than tol; converged after
// three rounds without an acceptance.
inline SearchTrace seesaw_single(const Povm& initial, const SearchOptions& opts, std::uint64_t seed) {
  SearchTrace trace;
  trace.seed = seed;
  Povm cur = initial;
  double best_v = 2.0;
  int no_improve = 0;
  for (int it = 0; it < opts.max_iter; ++it) {
    VisibilityResult res = visibility(cur, opts.noise, opts.solver);
    SearchIterate st;
    st.index = it;
    st.visibility = res.v;
    st.gap = res.stats.gap;
    st.improvement = best_v - res.v;
    st.accepted = res.v < best_v - opts.tol;
    trace.iterations.push_back(st);
    if (st.accepted) {
      best_v = res.v;
      trace.best_povm = cur;
      trace.best_result = res;
      no_improve = 0;
    } else if (++no_improve >= 3) {
      trace.converged = true;
      break;
    }
    // step (iii): maximize the witness violation of the certificate
    std::vector<Mat> neg;
    neg.reserve(res.gammas.size());
    for (const Mat& g : res.gammas) neg.push_back(-g);
    cur = best_violator(neg, cur.dim, cur.outcomes(), &cur, opts.solver);
    auto issues = validate(cur);
    for (const auto& is : issues)
      if (is.magnitude > 1e-6) throw std::runtime_error("seesaw: iterate left the POVM set (" + is.what + ")");
  }
  if (trace.best_povm.effects.empty()) {
    trace.best_povm = cur;
    trace.best_result = visibility(cur, opts.noise, opts.solver);
  }
  return trace;
}

// Full search: one run from the given initial POVM plus `restarts` runs from
// seeded random POVMs. Restarts execute in parallel; the aggregation is a
// deterministic min-reduce by (visibility, seed).
inline SearchOutcome seesaw(const Povm& initial, const SearchOptions& opts) {
  require_valid(initial, "seesaw");
  const int total = 1 + std::max(0, opts.restarts);
  SearchOutcome out;
  out.traces.resize(static_cast<size_t>(total));

  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(total));
  auto work = [&](int idx) {
    try {
      std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(idx);
      Povm start = idx == 0 ? initial : random_povm(initial.dim, initial.outcomes(), seed);
      out.traces[static_cast<size_t>(idx)] = seesaw_single(start, opts, seed);
    } catch (...) {
      errors[static_cast<size_t>(idx)] = std::current_exception();
    }
  };
  if (opts.threads <= 1) {
    for (int i = 0; i < total; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(opts.threads, total); ++w)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < total; i = next.fetch_add(1)) work(i);
      });
    for (auto& t : pool) t.join();
  }
  // a failed restart aborts only itself; rethrow only if every run failed
  int ok = 0;
  for (int i = 0; i < total; ++i)
    if (!errors[static_cast<size_t>(i)]) ++ok;
  if (ok == 0 && total > 0) std::rethrow_exception(errors[0]);

  double best = 3.0;
  for (int i = 0; i < total; ++i) {
    if (errors[static_cast<size_t>(i)]) continue;
    double v = out.traces[static_cast<size_t>(i)].best_result.v;
    if (v < best - 1e-12) {
      best = v;
      out.best_index = i;
    }
  }
  // cluster fixed points by visibility within 1e-3
  std::vector<int> order;
  for (int i = 0; i < total; ++i)
    if (!errors[static_cast<size_t>(i)]) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return out.traces[static_cast<size_t>(a)].best_result.v < out.traces[static_cast<size_t>(b)].best_result.v;
  });
  for (int idx : order) {
    double v = out.traces[static_cast<size_t>(idx)].best_result.v;
    if (!out.clusters.empty()) {
      int rep = out.clusters.back().front();
      if (std::abs(out.traces[static_cast<size_t>(rep)].best_result.v - v) <= 1e-3) {
        out.clusters.back().push_back(idx);
        continue;
      }
    }
    out.clusters.push_back({idx});
  }
  return out;
}

// Outcomes with trace below the inactivity threshold, reported by index.
inline std::vector<int> active_outcomes(const Povm& p, double tol = tols().inactive_trace) {
  std::vector<int> act;
  for (int a = 0; a < p.outcomes(); ++a)
    if (p.effects[static_cast<size_t>(a)].trace().real() >= tol) act.push_back(a);
  return act;
}

}  // namespace povmsim
