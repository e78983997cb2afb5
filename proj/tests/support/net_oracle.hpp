#pragma once

// Test-only brute-force oracle: maximal depolarizing visibility of a qubit
// POVM over mixtures of a FIXED finite net of projective measurements. The
// net consists of rank-(1,1) measurements built from a deterministic icosphere
// of Bloch axes (every ordered outcome pair) plus the n trash measurements
// that assign the identity to a single outcome. This is an LP, solved through
// the same conic interface but along a completely different formulation than
// the rank-vector SDP it cross-checks.

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "povmsim/conic/problem.hpp"
#include "povmsim/conic/solver.hpp"
#include "povmsim/constructions.hpp"
#include "povmsim/povm.hpp"

namespace povmsim::testsupport {

// deterministic icosphere axes (vertex set of a subdivided icosahedron)
inline std::vector<std::array<double, 3>> icosphere_axes(int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<std::array<double, 3>> verts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
      {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<std::array<int, 3>> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                           {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                           {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                           {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  auto normalize = [](std::array<double, 3> v) {
    double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return std::array<double, 3>{v[0] / n, v[1] / n, v[2] / n};
  };
  for (auto& v : verts) v = normalize(v);
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      std::array<double, 3> m = normalize({(verts[a][0] + verts[b][0]) / 2, (verts[a][1] + verts[b][1]) / 2,
                                           (verts[a][2] + verts[b][2]) / 2});
      verts.push_back(m);
      int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    for (auto [a, b, c] : faces) {
      int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  // antipodal dedup: keep axes with a canonical sign
  std::vector<std::array<double, 3>> axes;
  for (const auto& v : verts) {
    std::array<double, 3> c = v;
    if (c[2] < -1e-12 || (std::abs(c[2]) <= 1e-12 && (c[1] < -1e-12 || (std::abs(c[1]) <= 1e-12 && c[0] < 0))))
      c = {-c[0], -c[1], -c[2]};
    bool dup = false;
    for (const auto& a : axes)
      if (std::abs(a[0] - c[0]) + std::abs(a[1] - c[1]) + std::abs(a[2] - c[2]) < 1e-9) dup = true;
    if (!dup) axes.push_back(c);
  }
  return axes;
}

// covering angle of the net: max over random directions of the distance to
// the nearest axis (computed on a dense probe grid; an upper-estimate is fine
// for a resolution bound)
inline double net_covering_angle(const std::vector<std::array<double, 3>>& axes, int probes = 20000) {
  double worst = 0.0;
  // deterministic Fibonacci sphere probes
  const double ga = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < probes; ++i) {
    double z = 1.0 - 2.0 * (i + 0.5) / probes;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double th = ga * i;
    std::array<double, 3> p = {r * std::cos(th), r * std::sin(th), z};
    double best = 0.0;
    for (const auto& a : axes) {
      double dot = std::abs(p[0] * a[0] + p[1] * a[1] + p[2] * a[2]);  // axis: sign-free
      best = std::max(best, std::min(1.0, dot));
    }
    worst = std::max(worst, std::acos(best));
  }
  return worst;
}

inline Mat bloch_projector(const std::array<double, 3>& u, int sign) {
  Mat p(2, 2);
  double s = sign;
  p << (1.0 + s * u[2]) / 2.0, s * cxd(u[0], -u[1]) / 2.0, s * cxd(u[0], u[1]) / 2.0, (1.0 - s * u[2]) / 2.0;
  return p;
}

struct NetOracle {
  std::vector<std::array<double, 3>> axes;
  double covering_angle = 0.0;
  // resolution bound on the visibility gap: snapping the axes of an exact
  // model to the net moves every rank-1 projector by at most sin(angle/2) in
  // operator norm
  double resolution() const { return 2.0 * std::sin(covering_angle / 2.0); }

  explicit NetOracle(int subdivisions = 4) : axes(icosphere_axes(subdivisions)) {
    covering_angle = net_covering_angle(axes);
  }

  // LP: max v with Phi_v(E_a) = sum over net measurements of q * P stacked,
  // q >= 0, sum q = 1. Net measurement = ordered pair (outcome i, outcome j)
  // per axis plus n trash strategies.
  double max_visibility(const Povm& p) const {
    if (p.dim != 2) throw std::invalid_argument("net oracle: qubit POVMs only");
    const int n = p.outcomes();
    conic::ConicProblem prob;
    prob.maximize = true;
    int v = prob.add_free();
    prob.set_objective(v, 0, 1.0);

    // rows: per outcome, svec coordinate (4 per outcome); plus normalization
    std::vector<int> rows;
    for (int a = 0; a < n; ++a) {
      Mat depol_dir = p.effects[static_cast<size_t>(a)] -
                      p.effects[static_cast<size_t>(a)].trace().real() / 2.0 * Mat::Identity(2, 2);
      Eigen::VectorXd dv = conic::svec(depol_dir);
      Eigen::VectorXd base = conic::svec(Mat(p.effects[static_cast<size_t>(a)].trace().real() / 2.0 *
                                             Mat::Identity(2, 2)));
      for (int coord = 0; coord < 4; ++coord) {
        int r = prob.new_row(base(coord));
        if (dv(coord) != 0.0) prob.add_entry(r, v, 0, -dv(coord));
        rows.push_back(r);
      }
    }
    int norm_row = prob.new_row(1.0);

    auto add_measurement = [&](const std::vector<Mat>& effects) {
      int q = prob.add_nonneg();
      prob.add_entry(norm_row, q, 0, 1.0);
      for (int a = 0; a < n; ++a) {
        Eigen::VectorXd ev = conic::svec(effects[static_cast<size_t>(a)]);
        for (int coord = 0; coord < 4; ++coord)
          if (ev(coord) != 0.0) prob.add_entry(rows[static_cast<size_t>(4 * a + coord)], q, 0, ev(coord));
      }
    };

    for (const auto& u : axes)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          std::vector<Mat> eff(static_cast<size_t>(n), Mat::Zero(2, 2));
          eff[static_cast<size_t>(i)] = bloch_projector(u, +1);
          eff[static_cast<size_t>(j)] = bloch_projector(u, -1);
          add_measurement(eff);
        }
    for (int a = 0; a < n; ++a) {
      std::vector<Mat> eff(static_cast<size_t>(n), Mat::Zero(2, 2));
      eff[static_cast<size_t>(a)] = Mat::Identity(2, 2);
      add_measurement(eff);
    }

    conic::SolveOptions opts;
    opts.feas_tol = 1e-8;
    opts.gap_tol = 1e-8;
    conic::ConicSolution sol = conic::solve(prob, opts);
    if (sol.status != conic::SolveStatus::Optimal)
      throw std::runtime_error(std::string("net oracle: solver failure (") + sol.message + ")");
    return std::min(1.0, sol.objective);
  }
};

}  // namespace povmsim::testsupport
