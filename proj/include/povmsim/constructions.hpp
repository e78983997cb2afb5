#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "povmsim/operators.hpp"
#include "povmsim/povm.hpp"

namespace povmsim {

inline constexpr double kPi = std::numbers::pi_v<double>;

// ---------------------------------------------------------------------------
// Weyl-Heisenberg generators: X = sum |j+1><j|, Z = sum w^j |j><j|, w = e^{2pi i/d}.
inline std::pair<Mat, Mat> weyl_heisenberg(int d) {
  if (d < 2) throw std::invalid_argument("weyl_heisenberg: d must be >= 2");
  Mat X = Mat::Zero(d, d), Z = Mat::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    X((j + 1) % d, j) = 1.0;
    Z(j, j) = std::polar(1.0, 2.0 * kPi * j / d);
  }
  return {X, Z};
}

inline Mat mat_power(const Mat& m, int p) {
  Mat out = Mat::Identity(m.rows(), m.cols());
  for (int i = 0; i < p; ++i) out = out * m;
  return out;
}

// Weyl-Heisenberg orbit of a fiducial: |psi_(a0,a1)> = X^a0 Z^a1 |phi>,
// row-major in (a0, a1).
inline std::vector<Vec> wh_orbit_states(const Vec& fiducial) {
  const int d = static_cast<int>(fiducial.size());
  auto [X, Z] = weyl_heisenberg(d);
  std::vector<Vec> states;
  states.reserve(static_cast<size_t>(d) * d);
  for (int a0 = 0; a0 < d; ++a0)
    for (int a1 = 0; a1 < d; ++a1) states.push_back(mat_power(X, a0) * mat_power(Z, a1) * fiducial);
  return states;
}

inline double sic_overlap_deviation(const std::vector<Vec>& states) {
  const int d = static_cast<int>(states.front().size());
  double worst = 0.0;
  for (size_t i = 0; i < states.size(); ++i)
    for (size_t j = i + 1; j < states.size(); ++j) {
      double ov = std::norm(states[i].dot(states[j]));
      worst = std::max(worst, std::abs(ov - 1.0 / (d + 1)));
    }
  return worst;
}

// d^2 effects |psi_a><psi_a| / d from the WH orbit of a unit fiducial.
// Raises if the uniform-overlap check fails.
inline Povm sic_from_fiducial(const Vec& fiducial, const std::string& label = "sic") {
  Vec fid = normalized_state(fiducial);
  auto states = wh_orbit_states(fid);
  double dev = sic_overlap_deviation(states);
  if (dev > tols().sic_overlap)
    throw std::invalid_argument("sic_from_fiducial: overlap deviation " + std::to_string(dev) +
                                " exceeds tolerance; not a SIC fiducial");
  Povm p;
  p.dim = static_cast<int>(fid.size());
  p.label = label;
  for (const Vec& s : states) p.effects.push_back(projector(s) / p.dim);
  return p;
}

// ---------------------------------------------------------------------------
// Named fiducials.

// |phi_2> = sqrt((3+sqrt3)/6)|0> + e^{-i pi/4} sqrt((3-sqrt3)/6)|1>
inline Vec qubit_sic_fiducial() {
  Vec f(2);
  f(0) = std::sqrt((3.0 + std::sqrt(3.0)) / 6.0);
  f(1) = std::polar(std::sqrt((3.0 - std::sqrt(3.0)) / 6.0), -kPi / 4.0);
  return f;
}

inline Povm qubit_sic() { return sic_from_fiducial(qubit_sic_fiducial(), "sic2"); }

// |phi^(theta)> = (|1> - e^{i theta}|2>)/sqrt(2); theta in [0, pi/9] is the
// canonical fundamental domain (wider values accepted).
inline Vec qutrit_sic_fiducial(double theta) {
  Vec f(3);
  f(0) = 0.0;
  f(1) = 1.0 / std::sqrt(2.0);
  f(2) = -std::polar(1.0 / std::sqrt(2.0), theta);
  return f;
}

inline Povm qutrit_sic(double theta) {
  return sic_from_fiducial(qutrit_sic_fiducial(theta), "sic3:" + std::to_string(theta));
}

inline Povm norrell_sic() {
  Povm p = qutrit_sic(kPi / 9.0);
  p.label = "norrell";
  return p;
}

// Nine effects from the normalized columns of the 3x9 Hesse matrix. The
// column order coincides with the WH orbit of |phi^(0)>: column 3*a0+a1+1
// equals X^a0 Z^a1 |phi^(0)> exactly.
inline Povm hesse_sic() {
  const cxd w = std::polar(1.0, 2.0 * kPi / 3.0);
  const cxd w2 = w * w;
  Mat cols(3, 9);
  cols << 0, 0, 0, -1, -w2, -w, 1, w, w2,
          1, w, w2, 0, 0, 0, -1, -w2, -w,
         -1, -w2, -w, 1, w, w2, 0, 0, 0;
  Povm p;
  p.dim = 3;
  p.label = "hesse";
  for (int a = 0; a < 9; ++a) {
    Vec psi = normalized_state(cols.col(a));
    p.effects.push_back(projector(psi) / 3.0);
  }
  return p;
}

// The unique (up to unitaries) d=4 SIC fiducial, given up to proportionality:
// sqrt2|0> + z(1-z)(g^{3/2}+conj z)|1> + (2-sqrt2)i|2> + z(1-z)(g^{3/2}-conj z)|3>,
// z = e^{i pi/4}, g the golden ratio.
inline Vec ququart_sic_fiducial() {
  const cxd z = std::polar(1.0, kPi / 4.0);
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  const double g32 = std::pow(g, 1.5);
  Vec f(4);
  f(0) = std::sqrt(2.0);
  f(1) = z * (1.0 - z) * (g32 + std::conj(z));
  f(2) = cxd(0.0, 2.0 - std::sqrt(2.0));
  f(3) = z * (1.0 - z) * (g32 - std::conj(z));
  return normalized_state(f);
}

inline Povm ququart_sic() { return sic_from_fiducial(ququart_sic_fiducial(), "sic4"); }

// ---------------------------------------------------------------------------
// Hesse decomposition machinery (72 projective measurements).

// V = exp(2pi i/3 |0><0|), W = exp(2pi i/3 |nu><nu|),
// |nu> = (|0> + w|1> + w|2>)/sqrt3.
inline std::pair<Mat, Mat> hesse_stabilizer_generators() {
  const cxd w = std::polar(1.0, 2.0 * kPi / 3.0);
  Mat V = Mat::Identity(3, 3);
  V(0, 0) = w;
  Vec nu(3);
  nu << 1.0, w, w;
  nu /= std::sqrt(3.0);
  Mat W = Mat::Identity(3, 3) + (w - 1.0) * projector(nu);
  return {V, W};
}

// |xi> = (|0> + 2 e^{-5 pi i/9}|1> + 2 e^{5 pi i/9}|2>)/3
inline Vec hesse_decomposition_fiducial() {
  Vec xi(3);
  xi(0) = 1.0 / 3.0;
  xi(1) = std::polar(2.0 / 3.0, -5.0 * kPi / 9.0);
  xi(2) = std::polar(2.0 / 3.0, 5.0 * kPi / 9.0);
  return xi;
}

inline double hesse_visibility() { return (1.0 + 4.0 * std::cos(kPi / 9.0)) / 6.0; }

namespace detail {

// Partition vectors into mutually-orthogonal triples, greedily in input order
// with a backtracking fallback. Throws if no exact cover exists.
inline std::vector<std::array<int, 3>> orthogonal_triples(const std::vector<Vec>& vecs, double tol = 1e-8) {
  const int n = static_cast<int>(vecs.size());
  if (n % 3 != 0) throw std::runtime_error("orthogonal_triples: count not divisible by 3");
  std::vector<std::vector<char>> orth(static_cast<size_t>(n), std::vector<char>(static_cast<size_t>(n), 0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      orth[static_cast<size_t>(i)][static_cast<size_t>(j)] = orth[static_cast<size_t>(j)][static_cast<size_t>(i)] =
          std::abs(vecs[static_cast<size_t>(i)].dot(vecs[static_cast<size_t>(j)])) < tol;
  std::vector<char> used(static_cast<size_t>(n), 0);
  std::vector<std::array<int, 3>> triples;
  std::function<bool()> rec = [&]() -> bool {
    int a = -1;
    for (int i = 0; i < n; ++i)
      if (!used[static_cast<size_t>(i)]) {
        a = i;
        break;
      }
    if (a < 0) return true;
    used[static_cast<size_t>(a)] = 1;
    for (int b = a + 1; b < n; ++b) {
      if (used[static_cast<size_t>(b)] || !orth[static_cast<size_t>(a)][static_cast<size_t>(b)]) continue;
      used[static_cast<size_t>(b)] = 1;
      for (int c = b + 1; c < n; ++c) {
        if (used[static_cast<size_t>(c)] || !orth[static_cast<size_t>(a)][static_cast<size_t>(c)] ||
            !orth[static_cast<size_t>(b)][static_cast<size_t>(c)])
          continue;
        used[static_cast<size_t>(c)] = 1;
        triples.push_back({a, b, c});
        if (rec()) return true;
        triples.pop_back();
        used[static_cast<size_t>(c)] = 0;
      }
      used[static_cast<size_t>(b)] = 0;
    }
    used[static_cast<size_t>(a)] = 0;
    return false;
  };
  if (!rec()) throw std::runtime_error("orthogonal_triples: grouping failure (group generation bug?)");
  return triples;
}

}  // namespace detail

struct HesseDecomposition {
  SimulationModel model;                        // 72 equiprobable orthonormal-basis measurements
  double visibility = 0.0;                      // (1 + 4 cos(pi/9))/6
  std::vector<Vec> orbit;                       // the 216 projector vectors
  std::vector<int> outcome_of;                  // orbit index -> Hesse outcome 0..8
  std::vector<std::array<int, 3>> triples;      // orbit indices per measurement
  std::vector<std::array<int, 3>> outcome_triples;  // sorted outcome labels per measurement
};

// The 72-measurement projective model of the depolarized Hesse SIC: orbit of
// |xi> under <X,V,W> (216 projectors), grouped into 72 orthonormal triples.
// Each projector is assigned the outcome a = (a0,a1) of the coset
// X^a0 Z^a1 SL(2,3)|xi> it belongs to.
inline HesseDecomposition hesse_simulation_model() {
  auto [X, Z] = weyl_heisenberg(3);
  auto [V, W] = hesse_stabilizer_generators();
  UnitarySet sl23 = generate_group({V, W}, 64);
  UnitarySet pc3 = generate_group({X, V, W}, 512);
  Vec xi = hesse_decomposition_fiducial();

  HesseDecomposition out;
  out.visibility = hesse_visibility();
  out.orbit = group_orbit(pc3, xi);
  if (out.orbit.size() != 216) throw std::runtime_error("hesse_simulation_model: orbit size != 216");

  // coset representatives per outcome
  std::vector<std::vector<Vec>> cosets(9);
  for (int a0 = 0; a0 < 3; ++a0)
    for (int a1 = 0; a1 < 3; ++a1) {
      Mat g0 = mat_power(X, a0) * mat_power(Z, a1);
      for (const Mat& s : sl23.elements)
        cosets[static_cast<size_t>(3 * a0 + a1)].push_back(phase_canonical(Vec(g0 * s * xi)));
    }
  out.outcome_of.assign(out.orbit.size(), -1);
  for (size_t i = 0; i < out.orbit.size(); ++i) {
    for (int a = 0; a < 9 && out.outcome_of[i] < 0; ++a)
      for (const Vec& rep : cosets[static_cast<size_t>(a)])
        if ((out.orbit[i] - rep).cwiseAbs().maxCoeff() < 1e-8) {
          out.outcome_of[i] = a;
          break;
        }
    if (out.outcome_of[i] < 0) throw std::runtime_error("hesse_simulation_model: projector outside cosets");
  }

  out.triples = detail::orthogonal_triples(out.orbit);
  if (out.triples.size() != 72) throw std::runtime_error("hesse_simulation_model: expected 72 triples");

  out.model.output_outcomes = 9;
  for (const auto& t : out.triples) {
    ProjectiveMeasurement pm;
    pm.povm.dim = 3;
    pm.povm.effects.assign(9, Mat::Zero(3, 3));
    std::array<int, 3> labels{};
    for (int k = 0; k < 3; ++k) {
      int a = out.outcome_of[static_cast<size_t>(t[static_cast<size_t>(k)])];
      labels[static_cast<size_t>(k)] = a;
      if (max_abs(pm.povm.effects[static_cast<size_t>(a)]) > 0)
        throw std::runtime_error("hesse_simulation_model: two projectors share an outcome in one basis");
      pm.povm.effects[static_cast<size_t>(a)] = projector(out.orbit[static_cast<size_t>(t[static_cast<size_t>(k)])]);
    }
    std::sort(labels.begin(), labels.end());
    out.outcome_triples.push_back(labels);
    out.model.entries.push_back({1.0 / 72.0, std::move(pm)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flagged SIC2 (Appendix-E1-style closed forms and models).

struct FlaggedSic2Params {
  int d = 0;
  double eps = 0.0, lambda = 0.0, kappa = 0.0, theta = 0.0;
  double v = 0.0;
  bool outside_proven_range = false;  // d > 14: closed form computed, model may not exist
};

// eps = 1/(4 + d + (d-2)sqrt3 + 2 sqrt(6 + 2 sqrt3 (d-2))), v = 1 - d*eps,
// lambda = 1 - (d-2) eps, kappa = 1 - (d-1) eps, tan^2 theta = 1 - 2(d-2) eps.
inline FlaggedSic2Params fsic2_params(int d) {
  if (d < 2) throw std::invalid_argument("fsic2_params: d must be >= 2");
  FlaggedSic2Params p;
  p.d = d;
  p.outside_proven_range = d > 14;
  const double s3 = std::sqrt(3.0);
  p.eps = 1.0 / (4.0 + d + (d - 2) * s3 + 2.0 * std::sqrt(6.0 + 2.0 * s3 * (d - 2)));
  p.v = 1.0 - d * p.eps;
  p.lambda = 1.0 - (d - 2) * p.eps;
  p.kappa = 1.0 - (d - 1) * p.eps;
  p.theta = std::atan(std::sqrt(1.0 - 2.0 * (d - 2) * p.eps));  // branch in (0, pi/2)
  return p;
}

// E_fSIC2 in dimension d: qubit SIC embedded plus d-2 flags (d+2 outcomes).
inline Povm fsic2_povm(int d) {
  if (d < 3) throw std::invalid_argument("fsic2_povm: d must be >= 3");
  Povm p = flag(qubit_sic(), d - 2);
  p.label = "fsic2:" + std::to_string(d);
  return p;
}

namespace detail {

// Solve B e^{i a} + C e^{i b} = T (|T| = A) for phases a, b; two-link closed
// form, branch chosen by the caller via sign.
inline std::pair<double, double> two_link_phases(double A, double B, double C, cxd T, int sign) {
  double cosg = (A * A + B * B - C * C) / (2.0 * A * B);
  cosg = std::clamp(cosg, -1.0, 1.0);
  double g = sign * std::acos(cosg);
  double a = std::arg(T) + g;
  cxd eb = (T - B * std::polar(1.0, a)) / C;
  return {a, std::arg(eb)};
}

struct Fsic2Phases {
  double alpha = 0.0, beta = 0.0;
  double residual2 = 0.0, residual3 = 0.0;
};

// Orthogonality phases of the projective refinement:
//   sqrt(xi-d+3) e^{i pi/4} + sqrt(xi) e^{i alpha} + (d-3) e^{i beta} = 0,
//   2 sqrt(xi) cos(alpha-beta) + d - 2 = 0,  xi = 1/eps - d + 1.
inline Fsic2Phases fsic2_phases(const FlaggedSic2Params& p) {
  const int d = p.d;
  const double xi = 1.0 / p.eps - d + 1.0;
  const double A = std::sqrt(xi - d + 3.0), B = std::sqrt(xi), C = d - 3.0;
  const cxd T = -A * std::polar(1.0, kPi / 4.0);
  Fsic2Phases out;
  if (C < 1e-14) {  // d = 3: single flag, no third condition
    out.alpha = std::arg(T / B);
    out.beta = 0.0;
  } else {
    if (A > B + C || B > A + C || C > A + B)
      throw std::runtime_error("fsic2_phases: triangle inequality violated (d > 14)");
    double bestres = 1e300;
    for (int sign : {+1, -1}) {
      auto [a, b] = two_link_phases(A, B, C, T, sign);
      double r3 = std::abs(2.0 * std::sqrt(xi) * std::cos(a - b) + d - 2.0);
      if (r3 < bestres) {
        bestres = r3;
        out.alpha = a;
        out.beta = b;
      }
    }
  }
  out.residual2 = std::abs(A * std::polar(1.0, kPi / 4.0) + B * std::polar(1.0, out.alpha) +
                           C * std::polar(1.0, out.beta));
  out.residual3 = C < 1e-14 ? 0.0
                            : std::abs(2.0 * std::sqrt(xi) * std::cos(out.alpha - out.beta) + d - 2.0);
  if (out.residual2 > tols().phase_solve || out.residual3 > tols().phase_solve)
    throw std::runtime_error("fsic2_phases: phase solve failed, residual " +
                             std::to_string(std::max(out.residual2, out.residual3)));
  return out;
}

// |theta> = cos t |0> + e^{-i pi/4} sin t |1> embedded in d dims.
inline Vec theta_ket(int d, double t) {
  Vec v = Vec::Zero(d);
  v(0) = std::cos(t);
  v(1) = std::polar(std::sin(t), -kPi / 4.0);
  return v;
}

}  // namespace detail

// The six intermediate d-effect POVMs F^{(ij)} and the 6 * 2^{d-2} projective
// measurements refining them. Outcome layout follows fsic2_povm(d): outcomes
// 0..3 carry the embedded qubit SIC, outcomes 4..d+1 the flags.
inline SimulationModel fsic2_model(int d) {
  if (d < 3 || d > 14) throw std::invalid_argument("fsic2_model: supported for 3 <= d <= 14");
  const FlaggedSic2Params p = fsic2_params(d);
  const auto ph = detail::fsic2_phases(p);
  const int n = d + 2;

  // refinement of F^{(12)}: one projective measurement per sign vector
  auto refinement_vectors = [&](unsigned signs) {
    auto sgn = [&](int j) { return (signs >> (j - 2)) & 1u ? -1.0 : 1.0; };  // j = 2..d-1
    std::vector<Vec> pis(static_cast<size_t>(n), Vec::Zero(d));
    Vec p1 = std::sqrt(p.lambda) * detail::theta_ket(d, p.theta);
    Vec p2 = std::sqrt(p.lambda) * detail::theta_ket(d, -p.theta);
    for (int j = 2; j < d; ++j) {
      p1(j) += std::sqrt(p.eps) * sgn(j);
      p2(j) -= std::sqrt(p.eps) * sgn(j);
    }
    pis[0] = p1;
    pis[1] = p2;
    for (int k = 4; k < n; ++k) {
      int jj = k - 2;
      Vec pk = Vec::Zero(d);
      pk(1) = std::sqrt(2.0 * p.eps);
      pk(jj) = std::polar(std::sqrt(p.kappa), ph.alpha) * sgn(jj);
      for (int j = 2; j < d; ++j)
        if (j != jj) pk(j) = std::polar(std::sqrt(p.eps), ph.beta) * sgn(j);
      pis[static_cast<size_t>(k)] = pk;
    }
    return pis;
  };

  // automorphisms of the embedded qubit SIC: U = exp(2pi i/3 |phi_2><phi_2|) + I,
  // Paulis on the first two dimensions
  const Vec phi2 = qubit_sic_fiducial();
  const cxd w = std::polar(1.0, 2.0 * kPi / 3.0);
  Mat U2 = Mat::Identity(2, 2) + (w - 1.0) * projector(phi2);
  std::vector<Mat> paulis(4, Mat::Identity(2, 2));
  paulis[1] << 0, 1, 1, 0;
  paulis[2] << 0, cxd(0, -1), cxd(0, 1), 0;
  paulis[3] << 1, 0, 0, -1;
  const Povm sic2 = qubit_sic();
  auto perm_of = [&](const Mat& g) -> std::optional<std::array<int, 4>> {
    std::array<int, 4> pm{-1, -1, -1, -1};
    for (int i = 0; i < 4; ++i) {
      Mat gi = g * sic2.effects[static_cast<size_t>(i)] * g.adjoint();
      for (int j = 0; j < 4; ++j)
        if (max_abs(Mat(gi - sic2.effects[static_cast<size_t>(j)])) < 1e-9) pm[static_cast<size_t>(i)] = j;
      if (pm[static_cast<size_t>(i)] < 0) return std::nullopt;
    }
    return pm;
  };
  std::vector<std::pair<Mat, std::array<int, 4>>> autos;
  Mat Ua = Mat::Identity(2, 2);
  for (int a = 0; a < 3; ++a) {
    for (const Mat& P : paulis) {
      Mat g = Ua * P;
      if (auto pm = perm_of(g)) autos.emplace_back(g, *pm);
    }
    Ua = Ua * U2;
  }

  SimulationModel model;
  model.output_outcomes = n;
  const double weight = 1.0 / (6.0 * static_cast<double>(1u << (d - 2)));
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      // first automorphism sending the SIC pair {0,1} to {i,j}
      const std::pair<Mat, std::array<int, 4>>* found = nullptr;
      for (const auto& cand : autos) {
        int m0 = cand.second[0], m1 = cand.second[1];
        if ((m0 == i && m1 == j) || (m0 == j && m1 == i)) {
          found = &cand;
          break;
        }
      }
      if (!found) throw std::runtime_error("fsic2_model: automorphism for pair not found");
      Mat g = Mat::Identity(d, d);
      g.topLeftCorner(2, 2) = found->first;
      const int to0 = found->second[0], to1 = found->second[1];
      for (unsigned signs = 0; signs < (1u << (d - 2)); ++signs) {
        auto pis = refinement_vectors(signs);
        ProjectiveMeasurement pm;
        pm.povm.dim = d;
        pm.povm.effects.assign(static_cast<size_t>(n), Mat::Zero(d, d));
        pm.povm.effects[static_cast<size_t>(to0)] = g * projector(pis[0]) * g.adjoint();
        pm.povm.effects[static_cast<size_t>(to1)] = g * projector(pis[1]) * g.adjoint();
        for (int k = 4; k < n; ++k)
          pm.povm.effects[static_cast<size_t>(k)] = g * projector(pis[static_cast<size_t>(k)]) * g.adjoint();
        model.entries.push_back({weight, std::move(pm)});
      }
    }
  return model;
}

// ---------------------------------------------------------------------------
// Flagged Hesse SIC (Appendix-E2-style consistency equation and models).

struct FlaggedHesseParams {
  int d = 0;
  double theta = 0.0, phi = 0.0;
  double eps = 0.0, lambda = 0.0, kappa = 0.0;
  double v = 0.0;
  double residual = 0.0;
  int root_count = 0;
};

namespace detail {

inline cxd fsic3_consistency(int d, double th, double ph) {
  double s = std::sin(th), c = std::cos(th);
  double S = s * s * std::sin(ph) * std::sin(ph);
  return static_cast<double>(d - 3) * (1.0 - S) * std::polar(1.0, 8.0 * kPi / 9.0 + ph) +
         s * s * std::polar(1.0, 2.0 * kPi / 3.0 + 3.0 * ph) + 2.0 * std::sqrt(2.0) * c * s;
}

inline double fsic3_visibility(int d, double th, double ph) {
  double S = std::pow(std::sin(th) * std::sin(ph), 2);
  double denom = 2.0 * d / (3.0 * S - 1.0) - (d - 3);
  return 3.0 / denom;
}

}  // namespace detail

// All numeric roots of the consistency equation on [0,pi] x [0,2pi), found by
// multistart damped Newton on a 64x64 grid; returns every distinct (theta,phi)
// with a visibility in (0,1].
inline std::vector<FlaggedHesseParams> fsic3_all_roots(int d) {
  if (d < 4) throw std::invalid_argument("fsic3: d must be >= 4");
  std::vector<FlaggedHesseParams> roots;
  const int grid = 64;
  for (int gi = 0; gi < grid; ++gi)
    for (int gj = 0; gj < grid; ++gj) {
      double th = 0.02 + (kPi - 0.04) * gi / (grid - 1);
      double ph = 0.02 + (2.0 * kPi - 0.04) * gj / (grid - 1);
      bool ok = false;
      for (int it = 0; it < 80; ++it) {
        cxd r = detail::fsic3_consistency(d, th, ph);
        if (std::abs(r) < 1e-13) {
          ok = true;
          break;
        }
        const double h = 1e-7;
        cxd rth = detail::fsic3_consistency(d, th + h, ph);
        cxd rph = detail::fsic3_consistency(d, th, ph + h);
        double j00 = (rth.real() - r.real()) / h, j01 = (rph.real() - r.real()) / h;
        double j10 = (rth.imag() - r.imag()) / h, j11 = (rph.imag() - r.imag()) / h;
        double det = j00 * j11 - j01 * j10;
        if (std::abs(det) < 1e-18) break;
        double dth = (-r.real() * j11 + r.imag() * j01) / det;
        double dph = (-j00 * r.imag() + j10 * r.real()) / det;
        double norm = std::hypot(dth, dph);
        if (norm > 1.0) {  // damping
          dth /= norm;
          dph /= norm;
        }
        th += dth;
        ph += dph;
      }
      if (!ok && std::abs(detail::fsic3_consistency(d, th, ph)) > 1e-12) continue;
      th = std::fmod(std::fmod(th, 2.0 * kPi) + 2.0 * kPi, 2.0 * kPi);
      ph = std::fmod(std::fmod(ph, 2.0 * kPi) + 2.0 * kPi, 2.0 * kPi);
      if (th > kPi) continue;
      double v = detail::fsic3_visibility(d, th, ph);
      if (!(v > 0.0 && v <= 1.0)) continue;
      bool dup = false;
      for (const auto& r0 : roots)
        if (std::abs(r0.theta - th) < 1e-7 && std::abs(r0.phi - ph) < 1e-7) dup = true;
      if (dup) continue;
      FlaggedHesseParams p;
      p.d = d;
      p.theta = th;
      p.phi = ph;
      p.v = v;
      p.eps = (1.0 - v) / d;
      p.lambda = 1.0 - (d - 3) * p.eps;
      p.kappa = 1.0 - (d - 1) * p.eps;
      p.residual = std::abs(detail::fsic3_consistency(d, th, ph));
      roots.push_back(p);
    }
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) { return a.v > b.v; });
  for (auto& r : roots) r.root_count = static_cast<int>(roots.size());
  if (roots.empty()) throw std::runtime_error("fsic3_all_roots: no root found");
  return roots;
}

// Maximum-visibility root.
inline FlaggedHesseParams fsic3_params(int d) { return fsic3_all_roots(d).front(); }

// E_fSIC3 in dimension d: Hesse SIC embedded plus d-3 flags (d+6 outcomes).
inline Povm fsic3_povm(int d) {
  if (d < 4) throw std::invalid_argument("fsic3_povm: d must be >= 4");
  Povm p = flag(hesse_sic(), d - 3);
  p.label = "fsic3:" + std::to_string(d);
  return p;
}

// |alpha> = (|0> + e^{-8 pi i/9}|1> + e^{8 pi i/9}|2>)/sqrt3
inline Vec fsic3_alpha() {
  Vec a(3);
  a(0) = 1.0 / std::sqrt(3.0);
  a(1) = std::polar(1.0 / std::sqrt(3.0), -8.0 * kPi / 9.0);
  a(2) = std::polar(1.0 / std::sqrt(3.0), 8.0 * kPi / 9.0);
  return a;
}

// 72 * 2^{d-3} projective measurements simulating Phi_v(E_fSIC3). The seed
// measurement F^{(169)} is built from the max-visibility consistency root; the
// remaining 71 come from conjugation by the projective Clifford group, acting
// trivially on the flag dimensions.
inline SimulationModel fsic3_model(int d) {
  if (d < 4 || d > 9) throw std::invalid_argument("fsic3_model: supported for 4 <= d <= 9");
  auto roots = fsic3_all_roots(d);
  const int n = d + 6;

  auto [X, Z] = weyl_heisenberg(3);
  auto [V, W] = hesse_stabilizer_generators();
  const Mat h6 = X * Z * Z, h9 = X * X * Z * Z;
  const Vec alpha = fsic3_alpha();

  auto embed_vec = [&](const Vec& x) {
    Vec big = Vec::Zero(d);
    big.head(3) = x;
    return big;
  };

  // select a max-visibility root that satisfies completeness on the qutrit block;
  // the theta/phi pairing carries conjugate phases on |1> and |2>
  FlaggedHesseParams p;
  Vec u1, u6, u9;
  bool chosen = false;
  for (const auto& cand : roots) {
    if (cand.v < roots.front().v - 1e-9) break;
    Vec tp(3);
    tp(0) = std::cos(cand.theta);
    tp(1) = std::polar(std::sin(cand.theta) / std::sqrt(2.0), cand.phi);
    tp(2) = std::polar(std::sin(cand.theta) / std::sqrt(2.0), -cand.phi);
    Vec c6 = h6 * V * tp, c9 = h9 * V * V * tp;
    Mat M = cand.lambda * (projector(tp) + projector(c6) + projector(c9)) +
            3.0 * (d - 3) * cand.eps * projector(alpha);
    if (max_abs(Mat(M - Mat::Identity(3, 3))) < 1e-10) {
      p = cand;
      u1 = tp;
      u6 = c6;
      u9 = c9;
      chosen = true;
      break;
    }
  }
  if (!chosen) throw std::runtime_error("fsic3_model: no completeness-compatible root");

  // refinement phases: zeta_i on the SIC-part vectors, (rho, a, b) on the flags
  const double eflag = p.eps * (d - 3);
  cxd z1 = 1.0;
  cxd z6 = -p.lambda * u1.dot(u6) / eflag;  // dot() = <u1|u6>
  cxd z9 = -p.lambda * u1.dot(u9) / eflag;
  if (std::abs(std::abs(z6) - 1.0) > 1e-8 || std::abs(std::abs(z9) - 1.0) > 1e-8 ||
      std::abs(std::conj(z6) * z9 + p.lambda * u6.dot(u9) / eflag) > 1e-8)
    throw std::runtime_error("fsic3_model: phase solve failure (zeta)");
  cxd q1 = u1.dot(alpha) * z1;
  if (std::abs(q1 - u6.dot(alpha) * z6) > 1e-8 || std::abs(q1 - u9.dot(alpha) * z9) > 1e-8)
    throw std::runtime_error("fsic3_model: phase solve failure (flag alignment)");
  double aph = 0.0, bph = 0.0;
  cxd rho;
  const double sel = std::sqrt(3.0 * p.eps * p.lambda);
  if (d == 4) {
    rho = -std::conj(z1) * std::sqrt(p.eps * p.kappa) / (sel * u1.dot(alpha));
  } else {
    double cab = -(d - 2) * p.eps / (2.0 * std::sqrt(p.kappa * p.eps));
    if (std::abs(cab) > 1.0) throw std::runtime_error("fsic3_model: phase solve failure (flag pair)");
    double delta = std::acos(cab);
    cxd C0 = std::sqrt(p.kappa * p.eps) + (d - 4) * p.eps * std::polar(1.0, -delta);
    if (std::abs(sel * std::abs(q1) - std::abs(C0)) > 1e-8)
      throw std::runtime_error("fsic3_model: phase solve failure (magnitude)");
    double t = std::arg(-sel * q1) - std::arg(C0);
    aph = t;
    bph = t - delta;
    cxd C = std::sqrt(p.kappa * p.eps) * std::polar(1.0, aph) + (d - 4) * p.eps * std::polar(1.0, bph);
    rho = -C / (sel * q1);
  }
  if (std::abs(std::abs(rho) - 1.0) > 1e-8) throw std::runtime_error("fsic3_model: phase solve failure (rho)");

  // projective refinement of F^{(169)}
  const std::array<std::pair<int, std::pair<Vec, cxd>>, 3> sic_parts = {
      std::make_pair(0, std::make_pair(u1, z1)), std::make_pair(5, std::make_pair(u6, z6)),
      std::make_pair(8, std::make_pair(u9, z9))};
  auto refinement = [&](unsigned signs) {
    auto sgn = [&](int j) { return (signs >> (j - 3)) & 1u ? -1.0 : 1.0; };  // j = 3..d-1
    std::vector<std::pair<int, Vec>> out;  // (outcome, vector)
    for (const auto& [a, uz] : sic_parts) {
      Vec v = std::sqrt(p.lambda) * embed_vec(uz.first);
      for (int j = 3; j < d; ++j) v(j) += uz.second * std::sqrt(p.eps) * sgn(j);
      out.emplace_back(a, v);
    }
    for (int k = 9; k < n; ++k) {  // flag outcomes (0-based)
      int jj = k - 6;              // flag dimension 3..d-1
      Vec v = std::sqrt(3.0 * p.eps) * rho * embed_vec(alpha);
      v(jj) += std::polar(std::sqrt(p.kappa), aph) * sgn(jj);
      for (int j = 3; j < d; ++j)
        if (j != jj) v(j) += std::polar(std::sqrt(p.eps), bph) * sgn(j);
      out.emplace_back(k, v);
    }
    return out;
  };

  // 72 conjugates, one per outcome triple
  const Povm hesse = hesse_sic();
  UnitarySet pc3 = generate_group({X, V, W}, 512);
  auto perm_of = [&](const Mat& c) {
    std::array<int, 9> pm{};
    for (int i = 0; i < 9; ++i) {
      Mat ci = c * hesse.effects[static_cast<size_t>(i)] * c.adjoint();
      int hit = -1;
      for (int j = 0; j < 9; ++j)
        if (max_abs(Mat(ci - hesse.effects[static_cast<size_t>(j)])) < 1e-9) hit = j;
      if (hit < 0) throw std::runtime_error("fsic3_model: group element does not permute the Hesse SIC");
      pm[static_cast<size_t>(i)] = hit;
    }
    return pm;
  };

  SimulationModel model;
  model.output_outcomes = n;
  const double weight = 1.0 / (72.0 * static_cast<double>(1u << (d - 3)));
  std::vector<std::array<int, 3>> seen;
  for (const Mat& c : pc3.elements) {
    auto pm = perm_of(c);
    std::array<int, 3> tri = {pm[0], pm[5], pm[8]};
    std::array<int, 3> sorted_tri = tri;
    std::sort(sorted_tri.begin(), sorted_tri.end());
    bool dup = false;
    for (const auto& s : seen)
      if (s == sorted_tri) dup = true;
    if (dup) continue;
    seen.push_back(sorted_tri);
    Mat cd = Mat::Identity(d, d);
    cd.topLeftCorner(3, 3) = c;
    for (unsigned signs = 0; signs < (1u << (d - 3)); ++signs) {
      ProjectiveMeasurement meas;
      meas.povm.dim = d;
      meas.povm.effects.assign(static_cast<size_t>(n), Mat::Zero(d, d));
      for (const auto& [a, vct] : refinement(signs)) {
        int target = a < 9 ? pm[static_cast<size_t>(a)] : a;
        Vec moved = cd * vct;
        meas.povm.effects[static_cast<size_t>(target)] = projector(moved);
      }
      model.entries.push_back({weight, std::move(meas)});
    }
  }
  if (seen.size() != 72) throw std::runtime_error("fsic3_model: expected 72 distinct outcome triples");
  return model;
}

// ---------------------------------------------------------------------------

struct DecompositionReport {
  double max_deviation = 0.0;           // | apply_simulation(m) - target | elementwise
  double max_projectivity_residual = 0.0;
  double weight_deviation = 0.0;        // | sum q - 1 |
};

// Closes the loop on the analytic models: how far the model's mixture is from
// the target POVM, plus per-entry projectivity residuals.
inline DecompositionReport verify_decomposition(const SimulationModel& m, const Povm& target) {
  Povm mixed = apply_simulation(m);
  if (mixed.dim != target.dim || mixed.outcomes() != target.outcomes())
    throw std::invalid_argument("verify_decomposition: dimension/outcome mismatch");
  DecompositionReport rep;
  for (int a = 0; a < target.outcomes(); ++a)
    rep.max_deviation = std::max(
        rep.max_deviation, max_abs(Mat(mixed.effects[static_cast<size_t>(a)] - target.effects[static_cast<size_t>(a)])));
  double wsum = 0.0;
  for (const auto& e : m.entries) {
    wsum += e.weight;
    for (const Mat& P : e.measurement.povm.effects)
      rep.max_projectivity_residual = std::max(rep.max_projectivity_residual, max_abs(Mat(P * P - P)));
  }
  rep.weight_deviation = std::abs(wsum - 1.0);
  return rep;
}

}  // namespace povmsim
