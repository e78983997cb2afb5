#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "povmsim/conic/problem.hpp"
#include "povmsim/conic/svec.hpp"

namespace povmsim::conic {

enum class SolveStatus { Optimal, PrimalInfeasible, DualInfeasible, IterLimit };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::PrimalInfeasible: return "PrimalInfeasible";
    case SolveStatus::DualInfeasible: return "DualInfeasible";
    default: return "IterLimit";
  }
}

struct SolveOptions {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iter = 200;
  bool verbose = false;
  double static_reg = 1e-10;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::IterLimit;
  Eigen::VectorXd x;          // primal coordinates (original variable layout)
  Eigen::VectorXd eq_dual;    // y with  c_int - A^T y - P^T z = 0 (c_int = min-sense objective)
  Eigen::VectorXd cone_dual;  // z per coordinate (0 on free coords)
  double objective = 0.0;     // user sense
  double gap = 0.0;           // relative duality gap
  double primal_residual = 0.0, dual_residual = 0.0;
  int iterations = 0;
  double wall_ms = 0.0;
  std::string message;

  Mat block_value(const ConicProblem& p, int var) const {
    const VarInfo& vi = p.vars[static_cast<size_t>(var)];
    return smat(x.data() + vi.offset, vi.size);
  }
  Mat block_dual(const ConicProblem& p, int var) const {
    const VarInfo& vi = p.vars[static_cast<size_t>(var)];
    return smat(cone_dual.data() + vi.offset, vi.size);
  }
  double scalar_value(const ConicProblem& p, int var) const {
    return x(p.vars[static_cast<size_t>(var)].offset);
  }
};

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Vd = Eigen::VectorXd;

// Homogeneous self-dual primal-dual path following with Nesterov-Todd scaling
// and Mehrotra predictor-corrector, over products of complex-Hermitian PSD
// cones and the nonnegative orthant, with free variables and equalities.
class ConelpSolver {
 public:
  ConelpSolver(const ConicProblem& prob, const SolveOptions& opts) : p_(prob), o_(opts) {
    n_ = p_.num_coords;
    rows_ = p_.num_rows();
    c_ = Vd::Zero(n_);
    for (int i = 0; i < n_; ++i) c_(i) = p_.objective[static_cast<size_t>(i)];
    if (p_.maximize) c_ = -c_;
    b_ = Vd::Zero(rows_);
    for (int r = 0; r < rows_; ++r) b_(r) = p_.rhs[static_cast<size_t>(r)];

    for (size_t v = 0; v < p_.vars.size(); ++v) {
      const VarInfo& vi = p_.vars[v];
      if (vi.kind == VarKind::PsdBlock) {
        psd_.push_back({static_cast<int>(v), vi.size, vi.offset, mcone_});
        mcone_ += vi.coords();
        deg_ += vi.size;
      } else if (vi.kind == VarKind::Nonneg) {
        nn_.push_back({static_cast<int>(v), vi.offset, mcone_});
        mcone_ += 1;
        deg_ += 1;
      } else {
        free_coords_.push_back(vi.offset);
      }
    }
    cone_to_x_.resize(static_cast<size_t>(mcone_));
    for (const auto& blk : psd_)
      for (int cidx = 0; cidx < blk.size * blk.size; ++cidx)
        cone_to_x_[static_cast<size_t>(blk.cone_offset + cidx)] = blk.x_offset + cidx;
    for (const auto& s : nn_) cone_to_x_[static_cast<size_t>(s.cone_offset)] = s.x_offset;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(p_.entries.size());
    for (const auto& e : p_.entries) trips.emplace_back(e.row, e.col, e.val);
    A_ = SpMat(rows_, n_);
    A_.setFromTriplets(trips.begin(), trips.end());
    A_.makeCompressed();
    At_ = A_.transpose();

    nrm_b_ = std::max(1.0, b_.norm());
    nrm_c_ = std::max(1.0, c_.norm());
    lp_mode_ = psd_.empty();
  }

  ConicSolution run() {
    auto t0 = std::chrono::steady_clock::now();
    ConicSolution sol;
    sol.x = Vd::Zero(n_);
    sol.eq_dual = Vd::Zero(rows_);
    sol.cone_dual = Vd::Zero(n_);

    x_ = Vd::Zero(n_);
    y_ = Vd::Zero(rows_);
    s_ = Vd::Zero(mcone_);
    z_ = Vd::Zero(mcone_);
    tau_ = 1.0;
    kappa_ = 1.0;

    if (!init_points(sol)) {
      finish(sol, t0);
      return sol;
    }

    double best_metric = 1e300;
    double best_pres = 1e300, best_dres = 1e300, best_gap = 1e300, best_pcost = 0.0;
    Vd bx = Vd::Zero(n_), by = Vd::Zero(rows_), bz = Vd::Zero(mcone_);
    double btau = 1.0;
    int stall = 0;

    for (int it = 0; it <= o_.max_iter; ++it) {
      // residuals
      Vd hrx = At_ * y_;
      add_scatter(hrx, z_, -1.0);  // G^T z = -P^T z
      Vd rx = hrx + c_ * tau_;
      Vd hry = A_ * x_;
      Vd ry = hry - b_ * tau_;
      Vd hrz = s_ - gather(x_);  // G x + s
      Vd rz = hrz;               // h = 0
      double cx = c_.dot(x_), by_ = b_.dot(y_);
      double rtau = kappa_ + cx + by_;

      double gap = s_.dot(z_);
      double mu = (gap + tau_ * kappa_) / (deg_ + 1);
      double pcost = cx / tau_;
      double pres = std::max(ry.norm() / nrm_b_, rz.norm()) / tau_;
      double dres = rx.norm() / nrm_c_ / tau_;
      double gap_rel = (gap / (tau_ * tau_)) / std::max(1.0, std::abs(pcost));

      if (o_.verbose)
        printf("it %3d  pcost % .9e  pres %.2e dres %.2e gap %.2e tau %.2e kap %.2e solv %.1e\n", it, pcost, pres,
               dres, gap_rel, tau_, kappa_, last_solve_residual_);

      sol.iterations = it;
      if (pres <= o_.feas_tol && dres <= o_.feas_tol && gap_rel <= o_.gap_tol) {
        sol.status = SolveStatus::Optimal;
        sol.x = x_ / tau_;
        sol.eq_dual = -y_ / tau_;
        scatter_set(sol.cone_dual, z_, 1.0 / tau_);
        sol.objective = p_.maximize ? -pcost : pcost;
        sol.gap = gap_rel;
        sol.primal_residual = pres;
        sol.dual_residual = dres;
        finish(sol, t0);
        return sol;
      }
      double pinf = 1e300, dinf = 1e300;
      if (-by_ > 0) {
        pinf = (hrx.norm() / nrm_c_) / (-by_);
        if (pinf < best_pinf_) {
          best_pinf_ = pinf;
          pinf_y_ = -y_ / (-by_);
          pinf_z_ = z_ / (-by_);
        }
        if (pinf <= o_.feas_tol) {
          sol.status = SolveStatus::PrimalInfeasible;
          sol.eq_dual = pinf_y_;
          scatter_set(sol.cone_dual, pinf_z_, 1.0);
          sol.message = "primal infeasibility certificate: b^T y = -1, ||A^T y + G^T z|| <= tol, z in K*";
          sol.gap = pinf;
          finish(sol, t0);
          return sol;
        }
      }
      if (-cx > 0) {
        dinf = std::max(hry.norm() / nrm_b_, hrz.norm()) / (-cx);
        if (dinf < best_dinf_) {
          best_dinf_ = dinf;
          dinf_x_ = x_ / (-cx);
        }
        if (dinf <= o_.feas_tol) {
          sol.status = SolveStatus::DualInfeasible;
          sol.x = dinf_x_;
          sol.message = "dual infeasibility certificate: improving ray with c^T x = -1";
          sol.gap = dinf;
          finish(sol, t0);
          return sol;
        }
      }
      double metric = std::max({pres, dres, gap_rel});
      if (metric < best_metric) {
        best_metric = metric;
        best_pres = pres;
        best_dres = dres;
        best_gap = gap_rel;
        best_pcost = pcost;
        bx = x_ / tau_;
        by = y_;
        bz = z_;
        btau = tau_;
      }
      // progress: either the optimality metric or a certificate is improving.
      // Slow-but-steady linear rates are fine; only a genuine floor (no
      // measurable improvement over many iterations) stops the run early.
      double progress = std::min({metric, pinf, dinf});
      if (progress < 0.99 * best_progress_) {
        best_progress_ = progress;
        stall = 0;
      } else if (++stall >= 25) {
        break;
      }
      if (it == o_.max_iter) break;

      if (!compute_scaling()) {
        sol.message = "numerical breakdown: iterate left the cone interior";
        break;
      }

      // direction computation, bumping the regularization if the KKT solves
      // come back inaccurate (tiny pivots slip through the fixed pipeline)
      Vd ds(mcone_), dz(mcone_);
      double dtau = 0, dkappa = 0;
      Vd dx(n_), dy(rows_);
      reg_ = o_.static_reg;
      double best_solve = 1e300;
      for (int attempt = 0; attempt < 4; ++attempt, reg_ *= 1e3) {
        if (!factorize()) continue;
        double worst_solve = 0.0;

        Vd x1(n_), y1(rows_), z1(mcone_);
        solve3(-c_, b_, Vd::Zero(mcone_), x1, y1, z1);
        worst_solve = std::max(worst_solve, last_solve_residual_);
        double den0 = c_.dot(x1) + b_.dot(y1) - kappa_ / tau_;
        if (!std::isfinite(den0) || std::abs(den0) < 1e-300) continue;

        Vd dsa(mcone_), dza(mcone_);
        double dtaua = 0, dkappaa = 0;
        {
          Vd rhsB = jordan_sq_neg();  // -lam o lam
          double rhs_g = -tau_ * kappa_;
          direction(rx, ry, rz, rtau, rhsB, rhs_g, x1, y1, z1, den0, dsa, dza, dtaua, dkappaa, nullptr, nullptr);
        }
        worst_solve = std::max(worst_solve, last_solve_residual_);
        double t_aff = max_step_scaled(dsa, dza, dtaua, dkappaa);
        double alpha_aff = t_aff <= 0 ? 1.0 : std::min(1.0, 1.0 / t_aff);
        double sigma = std::pow(1.0 - alpha_aff, 3.0);

        Vd ds_c(mcone_), dz_c(mcone_), dx_c(n_), dy_c(rows_);
        double dtau_c = 0, dkappa_c = 0;
        {
          Vd rhsB = jordan_sq_neg();
          add_jordan_product(rhsB, dsa, dza, -1.0);
          add_identity(rhsB, sigma * (gap + tau_ * kappa_) / (deg_ + 1));
          double rhs_g = sigma * mu - tau_ * kappa_ - dtaua * dkappaa;
          direction(rx, ry, rz, rtau, rhsB, rhs_g, x1, y1, z1, den0, ds_c, dz_c, dtau_c, dkappa_c, &dx_c, &dy_c);
        }
        // gate on the full Newton-system residual of the combined direction;
        // the tau-elimination sub-solves may be individually inconsistent for
        // infeasible problems, their combination is what matters
        double dir_res;
        {
          Vd ds_u(mcone_), dz_u(mcone_);
          if (identity_scaling_) {
            ds_u = ds_c;
            dz_u = dz_c;
          } else {
            unscale_s(ds_c, ds_u);
            unscale_z(dz_c, dz_u);
          }
          Vd e1 = At_ * dy_c + c_ * dtau_c + rx;
          add_scatter(e1, dz_u, -1.0);
          Vd e2 = A_ * dx_c - b_ * dtau_c + ry;
          Vd e3 = ds_u - gather(dx_c) + rz;
          double e4 = std::abs(c_.dot(dx_c) + b_.dot(dy_c) + dkappa_c + rtau);
          double scale = std::max({1.0, rx.lpNorm<Eigen::Infinity>(), ry.lpNorm<Eigen::Infinity>(),
                                   rz.lpNorm<Eigen::Infinity>()});
          dir_res = std::max({e1.lpNorm<Eigen::Infinity>(), e2.lpNorm<Eigen::Infinity>(),
                              e3.lpNorm<Eigen::Infinity>(), e4}) /
                    scale;
        }
        if (std::isfinite(dir_res) && dir_res < best_solve) {
          best_solve = dir_res;
          ds.swap(ds_c);
          dz.swap(dz_c);
          dx.swap(dx_c);
          dy.swap(dy_c);
          dtau = dtau_c;
          dkappa = dkappa_c;
        }
        (void)worst_solve;
        if (best_solve <= 1e-8) break;
      }
      if (best_solve > 1e-5) {
        sol.message = "numerical breakdown: KKT solves lost accuracy (" + std::to_string(best_solve) + ")";
        break;
      }
      double t_comb = max_step_scaled(ds, dz, dtau, dkappa);
      double alpha = t_comb <= 0 ? 1.0 : std::min(1.0, 0.99 / t_comb);

      // unscale directions and update
      Vd ds_u(mcone_), dz_u(mcone_);
      unscale_s(ds, ds_u);
      unscale_z(dz, dz_u);
      x_ += alpha * dx;
      y_ += alpha * dy;
      s_ += alpha * ds_u;
      z_ += alpha * dz_u;
      tau_ += alpha * dtau;
      kappa_ += alpha * dkappa;
      if (tau_ <= 0 || kappa_ <= 0) {
        sol.message = "numerical breakdown: tau/kappa left positivity";
        break;
      }
    }

    // report the best iterate; Optimal only if it genuinely met the tolerances
    sol.primal_residual = best_pres;
    sol.dual_residual = best_dres;
    sol.gap = best_gap;
    sol.objective = p_.maximize ? -best_pcost : best_pcost;
    if (best_pres <= o_.feas_tol && best_dres <= o_.feas_tol && best_gap <= o_.gap_tol) {
      sol.status = SolveStatus::Optimal;
    } else if (best_pinf_ <= 1e-7) {
      // the accumulated Farkas certificate is conclusive even though the last
      // iterations lost accuracy
      sol.status = SolveStatus::PrimalInfeasible;
      sol.eq_dual = pinf_y_;
      scatter_set(sol.cone_dual, pinf_z_, 1.0);
      sol.gap = best_pinf_;
      sol.message = "primal infeasibility certificate (residual " + std::to_string(best_pinf_) + ")";
      finish(sol, t0);
      return sol;
    } else if (best_dinf_ <= 1e-7) {
      sol.status = SolveStatus::DualInfeasible;
      sol.x = dinf_x_;
      sol.gap = best_dinf_;
      sol.message = "dual infeasibility certificate (residual " + std::to_string(best_dinf_) + ")";
      finish(sol, t0);
      return sol;
    } else {
      sol.status = SolveStatus::IterLimit;
      if (sol.message.empty())
        sol.message = "iteration limit reached (best metric " + std::to_string(best_metric) + ")";
    }
    sol.x = bx;
    sol.eq_dual = -by / btau;
    scatter_set(sol.cone_dual, bz, 1.0 / btau);
    finish(sol, t0);
    return sol;
  }

 private:
  struct PsdInfo {
    int var, size, x_offset, cone_offset;
  };
  struct NnInfo {
    int var, x_offset, cone_offset;
  };
  struct PsdScale {
    Mat r, rinv;
    Vd lam;
  };

  const ConicProblem& p_;
  SolveOptions o_;
  int n_ = 0, rows_ = 0, mcone_ = 0, deg_ = 0;
  bool lp_mode_ = false;
  Vd c_, b_;
  SpMat A_, At_;
  double nrm_b_ = 1, nrm_c_ = 1;
  std::vector<PsdInfo> psd_;
  std::vector<NnInfo> nn_;
  std::vector<int> free_coords_;
  std::vector<int> cone_to_x_;

  Vd x_, y_, s_, z_;
  double tau_ = 1, kappa_ = 1;

  std::vector<PsdScale> scale_;
  Vd nn_w2_, nn_lam_;  // per nonneg coord: w^2 = s/z, lam = sqrt(s z)
  bool identity_scaling_ = true;

  // sparse saddle backend
  SpMat kkt_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
  bool pattern_done_ = false;
  double reg_ = 1e-9;

  // dense LP backend
  Eigen::MatrixXd lp_mat_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lp_lu_;

  void finish(ConicSolution& sol, std::chrono::steady_clock::time_point t0) {
    sol.wall_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(std::chrono::steady_clock::now() - t0)
            .count();
  }

  // ---- cone-vector plumbing -------------------------------------------------
  Vd gather(const Vd& xfull) const {
    Vd out(mcone_);
    for (int i = 0; i < mcone_; ++i) out(i) = xfull(cone_to_x_[static_cast<size_t>(i)]);
    return out;
  }
  void add_scatter(Vd& xfull, const Vd& cone, double w) const {
    for (int i = 0; i < mcone_; ++i) xfull(cone_to_x_[static_cast<size_t>(i)]) += w * cone(i);
  }
  void scatter_set(Vd& xfull, const Vd& cone, double w) const {
    xfull.setZero();
    for (int i = 0; i < mcone_; ++i) xfull(cone_to_x_[static_cast<size_t>(i)]) = w * cone(i);
  }

  // ---- scaling --------------------------------------------------------------
  bool compute_scaling() {
    identity_scaling_ = false;
    scale_.resize(psd_.size());
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      Mat S = smat(s_.data() + blk.cone_offset, blk.size);
      Mat Z = smat(z_.data() + blk.cone_offset, blk.size);
      Eigen::LLT<Mat> ls(S), lz(Z);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
      Mat L1 = ls.matrixL(), L2 = lz.matrixL();
      Eigen::JacobiSVD<Mat> svd(Mat(L2.adjoint() * L1), Eigen::ComputeFullU | Eigen::ComputeFullV);
      Vd lam = svd.singularValues();
      if (lam.minCoeff() <= 0) return false;
      Mat di = lam.cwiseSqrt().cwiseInverse().asDiagonal();
      scale_[bi].r = L1 * svd.matrixV() * di;
      scale_[bi].rinv = di * svd.matrixU().adjoint() * L2.adjoint();
      scale_[bi].lam = lam;
    }
    nn_w2_.resize(static_cast<Eigen::Index>(nn_.size()));
    nn_lam_.resize(static_cast<Eigen::Index>(nn_.size()));
    for (size_t i = 0; i < nn_.size(); ++i) {
      double sv = s_(nn_[i].cone_offset), zv = z_(nn_[i].cone_offset);
      if (sv <= 0 || zv <= 0) return false;
      nn_w2_(static_cast<Eigen::Index>(i)) = sv / zv;
      nn_lam_(static_cast<Eigen::Index>(i)) = std::sqrt(sv * zv);
    }
    return true;
  }

  // (W^T W)^{-1} u : per psd block w^{-1} U w^{-1} with w = r r^dag; per nonneg u/w^2
  Vd winv_apply(const Vd& u) const {
    Vd out(mcone_);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      Mat U = smat(u.data() + blk.cone_offset, blk.size);
      Mat R;
      if (identity_scaling_) {
        R = U;
      } else {
        const Mat& rinv = scale_[bi].rinv;
        Mat winv = rinv.adjoint() * rinv;
        R = winv * U * winv;
      }
      svec_into(R, out.data() + blk.cone_offset);
    }
    for (size_t i = 0; i < nn_.size(); ++i)
      out(nn_[i].cone_offset) =
          identity_scaling_ ? u(nn_[i].cone_offset) : u(nn_[i].cone_offset) / nn_w2_(static_cast<Eigen::Index>(i));
    return out;
  }

  // scaled variables: dz_tilde = W dz = r^dag dz r ; ds_tilde = W^{-dag} ds = r^{-1} ds r^{-dag}
  void scale_z(const Vd& u, Vd& out) const {
    out.resize(mcone_);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      Mat U = smat(u.data() + blk.cone_offset, blk.size);
      Mat R = scale_[bi].r.adjoint() * U * scale_[bi].r;
      svec_into(R, out.data() + blk.cone_offset);
    }
    for (size_t i = 0; i < nn_.size(); ++i)
      out(nn_[i].cone_offset) = u(nn_[i].cone_offset) * std::sqrt(nn_w2_(static_cast<Eigen::Index>(i)));
  }
  // W^{-dag} u = r^{-1} u r^{-dag}; the s-side scaling map
  void scale_s(const Vd& u, Vd& out) const {
    out.resize(mcone_);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      Mat U = smat(u.data() + blk.cone_offset, blk.size);
      Mat R = scale_[bi].rinv * U * scale_[bi].rinv.adjoint();
      svec_into(R, out.data() + blk.cone_offset);
    }
    for (size_t i = 0; i < nn_.size(); ++i)
      out(nn_[i].cone_offset) = u(nn_[i].cone_offset) / std::sqrt(nn_w2_(static_cast<Eigen::Index>(i)));
  }
  void unscale_z(const Vd& u, Vd& out) const {  // dz = r^{-dag} u r^{-1}
    out.resize(mcone_);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      Mat U = smat(u.data() + blk.cone_offset, blk.size);
      Mat R = scale_[bi].rinv.adjoint() * U * scale_[bi].rinv;
      svec_into(R, out.data() + blk.cone_offset);
    }
    for (size_t i = 0; i < nn_.size(); ++i)
      out(nn_[i].cone_offset) = u(nn_[i].cone_offset) / std::sqrt(nn_w2_(static_cast<Eigen::Index>(i)));
  }
  void unscale_s(const Vd& u, Vd& out) const {  // ds = r u r^dag
    out.resize(mcone_);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      Mat U = smat(u.data() + blk.cone_offset, blk.size);
      Mat R = scale_[bi].r * U * scale_[bi].r.adjoint();
      svec_into(R, out.data() + blk.cone_offset);
    }
    for (size_t i = 0; i < nn_.size(); ++i)
      out(nn_[i].cone_offset) = u(nn_[i].cone_offset) * std::sqrt(nn_w2_(static_cast<Eigen::Index>(i)));
  }
  // W^dag applied to a scaled-space vector: r u r^dag (same as unscale_s)
  void w_adjoint(const Vd& u, Vd& out) const { unscale_s(u, out); }

  // ---- Jordan algebra in scaled space (lambda diagonal) ----------------------
  Vd jordan_sq_neg() const {  // -lam o lam
    Vd out = Vd::Zero(mcone_);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      for (int i = 0; i < blk.size; ++i)
        out(blk.cone_offset + i) = -scale_[bi].lam(i) * scale_[bi].lam(i);
    }
    for (size_t i = 0; i < nn_.size(); ++i) {
      double l = nn_lam_(static_cast<Eigen::Index>(i));
      out(nn_[i].cone_offset) = -l * l;
    }
    return out;
  }
  void add_identity(Vd& v, double w) const {
    for (const auto& blk : psd_)
      for (int i = 0; i < blk.size; ++i) v(blk.cone_offset + i) += w;
    for (const auto& s : nn_) v(s.cone_offset) += w;
  }
  void add_jordan_product(Vd& acc, const Vd& u, const Vd& v, double w) const {
    for (const auto& blk : psd_) {
      Mat U = smat(u.data() + blk.cone_offset, blk.size);
      Mat V = smat(v.data() + blk.cone_offset, blk.size);
      Mat J = (U * V + V * U) / 2.0;
      Vd jv(blk.size * blk.size);
      svec_into(J, jv.data());
      acc.segment(blk.cone_offset, blk.size * blk.size) += w * jv;
    }
    for (const auto& s : nn_) acc(s.cone_offset) += w * u(s.cone_offset) * v(s.cone_offset);
  }
  // solve lam o X = B
  Vd lambda_solve(const Vd& bvec) const {
    Vd out(mcone_);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      Mat B = smat(bvec.data() + blk.cone_offset, blk.size);
      Mat X(blk.size, blk.size);
      for (int i = 0; i < blk.size; ++i)
        for (int j = 0; j < blk.size; ++j)
          X(i, j) = 2.0 * B(i, j) / (scale_[bi].lam(i) + scale_[bi].lam(j));
      svec_into(X, out.data() + blk.cone_offset);
    }
    for (size_t i = 0; i < nn_.size(); ++i)
      out(nn_[i].cone_offset) = bvec(nn_[i].cone_offset) / nn_lam_(static_cast<Eigen::Index>(i));
    return out;
  }

  // largest t with lam + a*d >= 0 for a <= 1/t, computed per cone in scaled space
  double max_step_scaled(const Vd& ds, const Vd& dz, double dtau, double dkappa) const {
    double t = 0.0;
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      for (const Vd* dir : {&ds, &dz}) {
        Mat D = smat(dir->data() + blk.cone_offset, blk.size);
        for (int i = 0; i < blk.size; ++i)
          for (int j = 0; j < blk.size; ++j)
            D(i, j) /= std::sqrt(scale_[bi].lam(i) * scale_[bi].lam(j));
        Eigen::SelfAdjointEigenSolver<Mat> es(D, Eigen::EigenvaluesOnly);
        t = std::max(t, -es.eigenvalues().minCoeff());
      }
    }
    for (size_t i = 0; i < nn_.size(); ++i) {
      double l = nn_lam_(static_cast<Eigen::Index>(i));
      t = std::max(t, -ds(nn_[i].cone_offset) / l);
      t = std::max(t, -dz(nn_[i].cone_offset) / l);
    }
    t = std::max(t, -dtau / tau_);
    t = std::max(t, -dkappa / kappa_);
    return t;
  }

  // ---- KKT ------------------------------------------------------------------
  // saddle system [H + reg, A^T; A, -reg] with H = G^T (W^T W)^{-1} G
  bool factorize() {
    if (lp_mode_) return factorize_lp();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(n_) + p_.entries.size() + psd_.size() * 64);
    for (size_t bi = 0; bi < psd_.size(); ++bi) {
      const auto& blk = psd_[bi];
      const int k = blk.size, kk = k * k;
      // columns of the svec representation of U -> w^{-1} U w^{-1}; in the
      // initialization pass the scaling is the identity. The full dense block
      // pattern is emitted either way so the symbolic factorization is stable.
      Eigen::MatrixXd M;
      if (identity_scaling_) {
        M = Eigen::MatrixXd::Identity(kk, kk);
      } else {
        const Mat& rinv = scale_[bi].rinv;
        Mat winv = rinv.adjoint() * rinv;
        M.resize(kk, kk);
        Vd col(kk), basis(kk);
        for (int cidx = 0; cidx < kk; ++cidx) {
          basis.setZero();
          basis(cidx) = 1.0;
          Mat E = smat(basis.data(), k);
          Mat R = winv * E * winv;
          svec_into(R, col.data());
          M.col(cidx) = col;
        }
      }
      for (int i = 0; i < kk; ++i)
        for (int j = 0; j <= i; ++j) {
          double v = (M(i, j) + M(j, i)) / 2.0;
          if (i == j) v += reg_;
          trips.emplace_back(blk.x_offset + i, blk.x_offset + j, v);
        }
    }
    for (size_t i = 0; i < nn_.size(); ++i)
      trips.emplace_back(nn_[i].x_offset, nn_[i].x_offset,
                         (identity_scaling_ ? 1.0 : 1.0 / nn_w2_(static_cast<Eigen::Index>(i))) + reg_);
    for (int fc : free_coords_) trips.emplace_back(fc, fc, reg_);
    for (const auto& e : p_.entries) trips.emplace_back(n_ + e.row, e.col, e.val);  // lower triangle
    for (int r = 0; r < rows_; ++r) trips.emplace_back(n_ + r, n_ + r, -reg_);

    SpMat K(n_ + rows_, n_ + rows_);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    if (!pattern_done_) {
      ldlt_.analyzePattern(K);
      pattern_done_ = true;
    }
    ldlt_.factorize(K);
    if (ldlt_.info() != Eigen::Success) {
      reg_ *= 100.0;
      K.setZero();
      K.setFromTriplets(trips.begin(), trips.end());
      ldlt_.factorize(K);
      if (ldlt_.info() != Eigen::Success) return false;
    }
    kkt_ = std::move(K);
    return true;
  }

  bool factorize_lp() {
    // dense (free + rows) system after eliminating the nonneg diagonal block
    const int nf = static_cast<int>(free_coords_.size());
    Vd hinv(mcone_);
    for (size_t i = 0; i < nn_.size(); ++i)
      hinv(static_cast<Eigen::Index>(i)) = identity_scaling_ ? 1.0 : nn_w2_(static_cast<Eigen::Index>(i));
    // per-cone-column and per-free-column slices of A, built once
    if (!lp_cols_built_) {
      lp_Ac_.assign(static_cast<size_t>(mcone_), {});
      lp_Af_.assign(static_cast<size_t>(nf), {});
      std::vector<int> x_to_cone(static_cast<size_t>(n_), -1);
      for (int i = 0; i < mcone_; ++i) x_to_cone[static_cast<size_t>(cone_to_x_[static_cast<size_t>(i)])] = i;
      std::vector<int> x_to_free(static_cast<size_t>(n_), -1);
      for (int i = 0; i < nf; ++i) x_to_free[static_cast<size_t>(free_coords_[static_cast<size_t>(i)])] = i;
      for (const auto& e : p_.entries) {
        int ci = x_to_cone[static_cast<size_t>(e.col)];
        if (ci >= 0)
          lp_Ac_[static_cast<size_t>(ci)].emplace_back(e.row, e.val);
        else
          lp_Af_[static_cast<size_t>(x_to_free[static_cast<size_t>(e.col)])].emplace_back(e.row, e.val);
      }
      lp_cols_built_ = true;
    }
    // S = A_c diag(hinv) A_c^T over cone columns
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(rows_, rows_);
    for (int ci = 0; ci < mcone_; ++ci) {
      const auto& col = lp_Ac_[static_cast<size_t>(ci)];
      double w = hinv(ci);
      for (size_t a = 0; a < col.size(); ++a)
        for (size_t bb = 0; bb < col.size(); ++bb) S(col[a].first, col[bb].first) += w * col[a].second * col[bb].second;
    }
    lp_mat_ = Eigen::MatrixXd::Zero(nf + rows_, nf + rows_);
    lp_mat_.topLeftCorner(nf, nf) = reg_ * Eigen::MatrixXd::Identity(nf, nf);
    for (int i = 0; i < nf; ++i)
      for (const auto& [r, v] : lp_Af_[static_cast<size_t>(i)]) {
        lp_mat_(i, nf + r) = v;
        lp_mat_(nf + r, i) = v;
      }
    lp_mat_.bottomRightCorner(rows_, rows_) = -(S + reg_ * Eigen::MatrixXd::Identity(rows_, rows_));
    lp_lu_.compute(lp_mat_);
    lp_hinv_ = hinv;
    return true;
  }

  // solve [H A^T; A 0][dx;dy] = [u;v] with refinement against the unregularized saddle
  void kkt_solve(const Vd& u, const Vd& v, Vd& dx, Vd& dy) const {
    auto apply = [&](const Vd& xx, const Vd& yy, Vd& ru, Vd& rv) {
      // H xx = scatter(winv(gather xx)) on cone coords; frees contribute 0
      Vd hx = Vd::Zero(n_);
      Vd g = gather(xx);
      Vd wg = winv_apply(g);
      add_scatter(hx, wg, 1.0);
      ru = hx + At_ * yy;
      rv = A_ * xx;
    };
    auto solve_once = [&](const Vd& uu, const Vd& vv, Vd& ox, Vd& oy) {
      if (lp_mode_) {
        const int nf = static_cast<int>(free_coords_.size());
        Vd rhs(nf + rows_);
        // rhs_f = u_f ; rhs_y = v - A_c Hc^{-1} u_c
        Vd t = vv;
        for (int ci = 0; ci < mcone_; ++ci) {
          double uc = uu(cone_to_x_[static_cast<size_t>(ci)]);
          double w = lp_hinv_(ci) * uc;
          for (const auto& [r, val] : lp_Ac_[static_cast<size_t>(ci)]) t(r) -= val * w;
        }
        for (int i = 0; i < nf; ++i) rhs(i) = uu(free_coords_[static_cast<size_t>(i)]);
        rhs.tail(rows_) = t;
        Vd sol = lp_lu_.solve(rhs);
        oy = sol.tail(rows_);
        ox = Vd::Zero(n_);
        for (int i = 0; i < nf; ++i) ox(free_coords_[static_cast<size_t>(i)]) = sol(i);
        // dx_c = Hc^{-1}(u_c - A_c^T dy)
        for (int ci = 0; ci < mcone_; ++ci) {
          double acy = 0;
          for (const auto& [r, val] : lp_Ac_[static_cast<size_t>(ci)]) acy += val * oy(r);
          ox(cone_to_x_[static_cast<size_t>(ci)]) = lp_hinv_(ci) * (uu(cone_to_x_[static_cast<size_t>(ci)]) - acy);
        }
      } else {
        Vd rhs(n_ + rows_);
        rhs.head(n_) = uu;
        rhs.tail(rows_) = vv;
        Vd sol = ldlt_.solve(rhs);
        ox = sol.head(n_);
        oy = sol.tail(rows_);
      }
    };
    solve_once(u, v, dx, dy);
    // iterative refinement against the unregularized saddle
    double prev_res = 1e300;
    const double scale = std::max(1.0, std::max(u.lpNorm<Eigen::Infinity>(), v.lpNorm<Eigen::Infinity>()));
    for (int pass = 0; pass < 5; ++pass) {
      Vd ru(n_), rv(rows_);
      apply(dx, dy, ru, rv);
      Vd eu = u - ru, ev = v - rv;
      double res = std::max(eu.lpNorm<Eigen::Infinity>(), ev.lpNorm<Eigen::Infinity>());
      if (res <= 1e-13 * scale || res >= 0.5 * prev_res) break;
      prev_res = res;
      Vd cx(n_), cy(rows_);
      solve_once(eu, ev, cx, cy);
      dx += cx;
      dy += cy;
    }
  }

  void solve3_once(const Vd& u, const Vd& v, const Vd& w, Vd& dx, Vd& dy, Vd& dz_tilde) const {
    Vd rx = u;
    Vd ww = winv_apply(w);
    add_scatter(rx, ww, -1.0);  // G^T (W^T W)^{-1} w = -P^T winv(w)
    kkt_solve(rx, v, dx, dy);
    Vd gw = -gather(dx) - w;
    if (identity_scaling_)
      dz_tilde = gw;
    else
      scale_s(gw, dz_tilde);
  }

  // rows: A^T dy + G^T dz = u ; A dx = v ; G dx - W^T W dz = w.
  // dz comes out in SCALED form dz_tilde = W dz = W^{-dag}(G dx - w); the
  // single half-scaling application keeps the recovery conditioned like
  // sqrt(mu) instead of mu. Refinement runs on the full 3x3 system so the
  // dual residual does not inherit the saddle conditioning floor.
  void solve3(const Vd& u, const Vd& v, const Vd& w, Vd& dx, Vd& dy, Vd& dz_tilde) const {
    solve3_once(u, v, w, dx, dy, dz_tilde);
    const double scale = std::max({1.0, u.lpNorm<Eigen::Infinity>(), v.lpNorm<Eigen::Infinity>(),
                                   w.lpNorm<Eigen::Infinity>()});
    double prev = 1e300;
    for (int pass = 0; pass < 6; ++pass) {
      Vd dz(mcone_);
      if (identity_scaling_)
        dz = dz_tilde;
      else
        unscale_z(dz_tilde, dz);
      Vd r1 = u - At_ * dy;
      add_scatter(r1, dz, 1.0);  // - G^T dz = +P^T dz
      Vd r2 = v - A_ * dx;
      Vd wtw(mcone_);
      if (identity_scaling_) {
        wtw = dz_tilde;
      } else {
        w_adjoint(dz_tilde, wtw);  // W^T W dz = W^dag(dz_tilde)
      }
      Vd r3 = w + gather(dx) + wtw;
      double res = std::max({r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>(),
                             r3.lpNorm<Eigen::Infinity>()});
      last_solve_residual_ = res / scale;
      if (res <= 1e-13 * scale || res >= 0.5 * prev) break;
      prev = res;
      Vd cx(n_), cy(rows_), cz(mcone_);
      solve3_once(r1, r2, r3, cx, cy, cz);
      dx += cx;
      dy += cy;
      dz_tilde += cz;
    }
  }
  mutable double last_solve_residual_ = 0.0;

  // one Newton direction for the HSD system; ds_t, dz_t come out in scaled form
  void direction(const Vd& rx, const Vd& ry, const Vd& rz, double rtau, const Vd& rhsB, double rhs_g, const Vd& x1,
                 const Vd& y1, const Vd& z1t, double den0, Vd& ds_t, Vd& dz_t, double& dtau, double& dkappa,
                 Vd* dx_out, Vd* dy_out) {
    Vd D0 = lambda_solve(rhsB);
    Vd wD0(mcone_);
    w_adjoint(D0, wD0);
    Vd bz = -rz - wD0;
    Vd x2(n_), y2(rows_), z2t(mcone_);
    solve3(-rx, -ry, bz, x2, y2, z2t);
    double btau = -rtau - rhs_g / tau_;
    dtau = (btau - c_.dot(x2) - b_.dot(y2)) / den0;
    Vd dx = x2 + dtau * x1;
    Vd dy = y2 + dtau * y1;
    dz_t = z2t + dtau * z1t;
    ds_t = D0 - dz_t;
    dkappa = (rhs_g - kappa_ * dtau) / tau_;
    if (dx_out) *dx_out = dx;
    if (dy_out) *dy_out = dy;
  }

  bool init_points(ConicSolution& sol) {
    identity_scaling_ = true;
    reg_ = o_.static_reg;
    if (!factorize()) {
      sol.message = "initialization: KKT factorization failed";
      return false;
    }
    Vd x0(n_), y0(rows_), z0(mcone_);
    solve3(Vd::Zero(n_), b_, Vd::Zero(mcone_), x0, y0, z0);
    x_ = x0;
    s_ = -z0;  // = gather(x0)
    shift_into_cone(s_);
    Vd x1(n_), y1(rows_), z1(mcone_);
    solve3(-c_, Vd::Zero(rows_), Vd::Zero(mcone_), x1, y1, z1);
    y_ = y1;
    z_ = z1;
    shift_into_cone(z_);
    tau_ = 1.0;
    kappa_ = 1.0;
    return true;
  }

  void shift_into_cone(Vd& v) const {
    double t = -1e300;
    for (const auto& blk : psd_) {
      Mat M = smat(v.data() + blk.cone_offset, blk.size);
      Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
      t = std::max(t, -es.eigenvalues().minCoeff());
    }
    for (const auto& s : nn_) t = std::max(t, -v(s.cone_offset));
    double nrm = std::max(1.0, v.norm());
    if (t >= -1e-8 * nrm) {
      for (const auto& blk : psd_)
        for (int i = 0; i < blk.size; ++i) v(blk.cone_offset + i) += 1.0 + t;
      for (const auto& s : nn_) v(s.cone_offset) += 1.0 + t;
    }
  }

  std::vector<std::vector<std::pair<int, double>>> lp_Ac_, lp_Af_;
  bool lp_cols_built_ = false;
  Vd lp_hinv_;
  double best_progress_ = 1e300;
  double best_pinf_ = 1e300, best_dinf_ = 1e300;
  Vd pinf_y_, pinf_z_, dinf_x_;
};

}  // namespace detail

inline ConicSolution solve(const ConicProblem& prob, const SolveOptions& opts = {}) {
  PresolveResult pre = presolve(prob);
  ConicSolution out;
  if (pre.infeasible) {
    out.status = SolveStatus::PrimalInfeasible;
    out.message = "presolve: " + pre.reason;
    out.x = Eigen::VectorXd::Zero(prob.num_coords);
    out.eq_dual = Eigen::VectorXd::Zero(prob.num_rows());
    out.cone_dual = Eigen::VectorXd::Zero(prob.num_coords);
    return out;
  }
  detail::ConelpSolver solver(pre.reduced, opts);
  ConicSolution red = solver.run();

  // map back
  out = red;
  out.x = Eigen::VectorXd::Zero(prob.num_coords);
  out.cone_dual = Eigen::VectorXd::Zero(prob.num_coords);
  out.eq_dual = Eigen::VectorXd::Zero(prob.num_rows());
  for (size_t v = 0; v < prob.vars.size(); ++v) {
    const VarInfo& vi = prob.vars[v];
    int rv = pre.var_map[v];
    if (rv < 0) {
      if (vi.kind != VarKind::PsdBlock) out.x(vi.offset) = pre.fixed_value[v];
      continue;  // pinned psd blocks stay zero
    }
    const VarInfo& rvi = pre.reduced.vars[static_cast<size_t>(rv)];
    for (int c = 0; c < vi.coords(); ++c) {
      out.x(vi.offset + c) = red.x(rvi.offset + c);
      out.cone_dual(vi.offset + c) = red.cone_dual(rvi.offset + c);
    }
  }
  for (int r = 0; r < prob.num_rows(); ++r)
    if (pre.row_map[static_cast<size_t>(r)] >= 0) out.eq_dual(r) = red.eq_dual(pre.row_map[static_cast<size_t>(r)]);
  if (red.status == SolveStatus::Optimal) out.objective = red.objective + pre.objective_constant;
  return out;
}

}  // namespace povmsim::conic
