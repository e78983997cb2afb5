#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "povmsim/tolerances.hpp"

namespace povmsim {

using cxd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline bool entries_finite(const Mat& a) {
  return a.allFinite();
}

inline double hermitian_deviation(const Mat& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const Mat& a, double tol = tols().hermitian) {
  return a.rows() == a.cols() && hermitian_deviation(a) <= tol;
}

inline void require_square(const Mat& a, const char* who) {
  if (a.rows() != a.cols()) throw std::invalid_argument(std::string(who) + ": matrix not square");
  if (!entries_finite(a)) throw std::invalid_argument(std::string(who) + ": non-finite entries");
}

inline void require_hermitian(const Mat& a, const char* who, double tol = tols().hermitian) {
  require_square(a, who);
  double dev = hermitian_deviation(a);
  if (dev > tol)
    throw std::invalid_argument(std::string(who) + ": not Hermitian (deviation " + std::to_string(dev) + ")");
}

// tr(A^dag B)
inline cxd frobenius_inner(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("frobenius_inner: dimension mismatch");
  return (a.adjoint() * b).trace();
}

// Smallest eigenvalue of a Hermitian operator.
inline double min_eigenvalue(const Mat& a, double herm_tol = tols().hermitian) {
  require_hermitian(a, "min_eigenvalue", herm_tol);
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_abs(const Mat& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline Mat projector(const Vec& psi) {
  return psi * psi.adjoint();
}

inline Vec normalized_state(Vec v) {
  double n = v.norm();
  if (n <= 0 || !v.allFinite()) throw std::invalid_argument("normalized_state: zero or non-finite vector");
  return v / n;
}

inline bool is_unitary(const Mat& u, double tol = tols().unitary) {
  return u.rows() == u.cols() && max_abs(Mat(u.adjoint() * u - Mat::Identity(u.rows(), u.cols()))) <= tol;
}

// Divide out the phase of the first entry whose modulus exceeds tol. Two
// operators equal up to a global phase canonicalize to the same matrix.
inline Mat phase_canonical(const Mat& u, double tol = 1e-7) {
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      cxd x = u(i, j);
      if (std::abs(x) > tol) return u * (std::conj(x) / std::abs(x));
    }
  return u;
}

inline Vec phase_canonical(const Vec& v, double tol = 1e-7) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    cxd x = v(i);
    if (std::abs(x) > tol) return v * (std::conj(x) / std::abs(x));
  }
  return v;
}

// Finite unitary group, elements deduplicated up to global phase.
struct UnitarySet {
  int dim = 0;
  std::vector<Mat> elements;
  double dedup_tol = tols().phase_dedup;

  int size() const { return static_cast<int>(elements.size()); }

  bool contains(const Mat& u) const {
    Mat c = phase_canonical(u);
    for (const Mat& e : elements)
      if (max_abs(Mat(e - c)) <= dedup_tol) return true;
    return false;
  }
};

// Closure of the generators under multiplication, up to global phase.
// Throws if the closure exceeds max_size or a generator is not unitary.
inline UnitarySet generate_group(const std::vector<Mat>& generators, int max_size) {
  if (generators.empty()) throw std::invalid_argument("generate_group: no generators");
  const int d = static_cast<int>(generators.front().rows());
  for (const Mat& g : generators) {
    if (g.rows() != d || g.cols() != d)
      throw std::invalid_argument("generate_group: generator dimension mismatch");
    if (!is_unitary(g)) throw std::invalid_argument("generate_group: non-unitary generator");
  }
  UnitarySet set;
  set.dim = d;
  set.elements.push_back(phase_canonical(Mat(Mat::Identity(d, d))));
  std::vector<Mat> frontier = set.elements;
  while (!frontier.empty()) {
    std::vector<Mat> fresh;
    for (const Mat& g : generators)
      for (const Mat& h : frontier) {
        Mat c = phase_canonical(Mat(g * h));
        if (!set.contains(c)) {
          set.elements.push_back(c);
          fresh.push_back(c);
          if (set.size() > max_size)
            throw std::runtime_error("generate_group: closure exceeds max_size " + std::to_string(max_size));
        }
      }
    frontier = std::move(fresh);
  }
  return set;
}

// Orbit {g|psi> : g in group}, deduplicated up to global phase.
inline std::vector<Vec> group_orbit(const UnitarySet& group, const Vec& psi, double tol = tols().phase_dedup) {
  std::vector<Vec> orbit;
  for (const Mat& g : group.elements) {
    Vec p = phase_canonical(Vec(g * psi));
    bool seen = false;
    for (const Vec& q : orbit)
      if ((p - q).cwiseAbs().maxCoeff() <= tol) {
        seen = true;
        break;
      }
    if (!seen) orbit.push_back(p);
  }
  return orbit;
}

}  // namespace povmsim
