#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "povmsim/operators.hpp"

namespace povmsim::conic {

// Real parametrization of Hermitian k x k matrices by k^2 coordinates:
// coords 0..k-1 hold the diagonal, then for each pair i < j (ordered by
// column j, then row i) two coords sqrt2*Re(A_ij) and sqrt2*Im(A_ij).
// The Frobenius inner product of two Hermitian matrices equals the Euclidean
// dot product of their coordinate vectors.

inline int svec_dim(int k) { return k * k; }

inline int svec_pair_base(int k, int i, int j) {
  // pairs enumerated (0,1),(0,2),(1,2),(0,3),... : for column j there are
  // j(j-1)/2 earlier pairs plus i
  return k + (j * (j - 1) / 2 + i) * 2;
}

inline void svec_into(const Mat& a, double* out) {
  const int k = static_cast<int>(a.rows());
  const double s2 = std::sqrt(2.0);
  for (int i = 0; i < k; ++i) out[i] = a(i, i).real();
  for (int j = 1; j < k; ++j)
    for (int i = 0; i < j; ++i) {
      int base = svec_pair_base(k, i, j);
      out[base] = s2 * a(i, j).real();
      out[base + 1] = s2 * a(i, j).imag();
    }
}

inline Eigen::VectorXd svec(const Mat& a) {
  Eigen::VectorXd out(svec_dim(static_cast<int>(a.rows())));
  svec_into(a, out.data());
  return out;
}

inline Mat smat(const double* x, int k) {
  Mat a(k, k);
  const double inv2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < k; ++i) a(i, i) = x[i];
  for (int j = 1; j < k; ++j)
    for (int i = 0; i < j; ++i) {
      int base = svec_pair_base(k, i, j);
      a(i, j) = cxd(x[base] * inv2, x[base + 1] * inv2);
      a(j, i) = std::conj(a(i, j));
    }
  return a;
}

inline Mat smat(const Eigen::VectorXd& x, int k) { return smat(x.data(), k); }

}  // namespace povmsim::conic
