#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "povmsim/conic/problem.hpp"
#include "povmsim/conic/solver.hpp"
#include "povmsim/constructions.hpp"
#include "povmsim/povm.hpp"
#include "povmsim/rank_vectors.hpp"

namespace povmsim {

struct SolverStats {
  conic::SolveStatus status = conic::SolveStatus::IterLimit;
  double gap = 0.0;
  int iterations = 0;
  double wall_ms = 0.0;
};

struct VisibilityResult {
  double v = 0.0;
  NoiseKind noise = NoiseKind::Depolarizing;
  bool exact = false;
  // active simulation blocks of the optimum: rank vector and per-outcome
  // effects F_{a|r} (inactive outcomes hold zero matrices)
  std::vector<std::pair<RankVector, std::vector<Mat>>> blocks;
  std::optional<SimulationModel> extracted_model;
  std::optional<Povm> worst_noise;
  std::vector<Mat> gammas;  // dual multipliers (Appendix-B sign convention)
  Mat beta_op;              // worst-case dual operator; empty for depolarizing
  double predicted_threshold = 0.0;
  SolverStats stats;
};

struct WitnessCertificate {
  std::vector<Mat> gammas;
  double predicted_threshold = 0.0;
  double gap = 0.0;
  Mat beta_op;  // worst-case only
  NoiseKind noise = NoiseKind::Depolarizing;
};

struct WitnessAnsatzResult {
  Povm target;
  double beta = 0.0;
  double v_beta = 0.0;
  std::vector<std::pair<int, double>> per_package;  // (package index, beta_Rj)
  int package_size = 0;
};

enum class FeasibilityStatus { SimulableCertified, NotSimulable, NotInCriterion };

namespace detail {

// Shared constraint scaffolding for the rank-vector partitioned programs.
// Per rank vector r with active set S (|S| = m) and blocks F_{a|r}, a in S:
//   trace rows:        tr(F_a) - (r_a/d) sum_b tr(F_b) = 0  for all but one a
//   completeness rows: sum_a F_a - (1/d sum_b tr F_b) I = 0 on every svec
//                      coordinate except the last diagonal one.
// The omitted rows are linear combinations of the kept ones; dropping them
// keeps A full row rank.
struct RankBlockLayout {
  std::vector<RankVector> rvecs;
  std::vector<std::vector<int>> block_var;      // per rvec: var id per active outcome
  std::vector<std::vector<int>> active;         // per rvec: active outcome list
};

inline void add_rank_local_rows(conic::ConicProblem& prob, int d, const RankVector& rv,
                                const std::vector<int>& block_vars) {
  const auto act = rv.active_outcomes();
  const int m = static_cast<int>(act.size());
  // trace rows
  for (int ai = 0; ai + 1 < m; ++ai) {
    int row = prob.new_row(0.0);
    double ra = rv.r[static_cast<size_t>(act[static_cast<size_t>(ai)])];
    for (int bi = 0; bi < m; ++bi) {
      double coef = (bi == ai ? 1.0 : 0.0) - ra / static_cast<double>(d);
      for (int i = 0; i < d; ++i) prob.add_entry(row, block_vars[static_cast<size_t>(bi)], i, coef);
    }
  }
  // completeness rows: svec coords, all diagonals but the last, all off-diagonals
  for (int coord = 0; coord < d * d; ++coord) {
    if (coord == d - 1) continue;  // dependent diagonal row
    int row = prob.new_row(0.0);
    bool diag = coord < d;
    for (int bi = 0; bi < m; ++bi) {
      prob.add_entry(row, block_vars[static_cast<size_t>(bi)], coord, 1.0);
      if (diag)
        for (int i = 0; i < d; ++i)
          prob.add_entry(row, block_vars[static_cast<size_t>(bi)], i, -1.0 / static_cast<double>(d));
    }
  }
}

inline RankBlockLayout add_rank_blocks(conic::ConicProblem& prob, int d, const std::vector<RankVector>& rvecs) {
  RankBlockLayout lay;
  lay.rvecs = rvecs;
  for (const auto& rv : rvecs) {
    auto act = rv.active_outcomes();
    std::vector<int> vars;
    vars.reserve(act.size());
    for (size_t i = 0; i < act.size(); ++i) vars.push_back(prob.add_psd_block(d));
    add_rank_local_rows(prob, d, rv, vars);
    lay.block_var.push_back(std::move(vars));
    lay.active.push_back(std::move(act));
  }
  return lay;
}

struct CouplingRows {
  // per outcome a, svec coord -> row id or -1 (dropped dependent row)
  std::vector<std::vector<int>> row_of;
};

// Rows sum_{r: r_a > 0} F_{a|r}[coord] + (extra terms added by the caller) = rhs.
// The diagonal rows of outcome 0 except the last are exact combinations of the
// other kept rows and are dropped.
inline CouplingRows add_coupling_rows(conic::ConicProblem& prob, int d, int n, const RankBlockLayout& lay,
                                      const std::vector<Eigen::VectorXd>& rhs_per_outcome) {
  CouplingRows cr;
  cr.row_of.assign(static_cast<size_t>(n), std::vector<int>(static_cast<size_t>(d * d), -1));
  for (int a = 0; a < n; ++a)
    for (int coord = 0; coord < d * d; ++coord) {
      if (a == 0 && coord < d - 1) continue;  // dependent diagonal rows
      int row = prob.new_row(rhs_per_outcome[static_cast<size_t>(a)](coord));
      cr.row_of[static_cast<size_t>(a)][static_cast<size_t>(coord)] = row;
      for (size_t ri = 0; ri < lay.rvecs.size(); ++ri) {
        const auto& act = lay.active[ri];
        for (size_t bi = 0; bi < act.size(); ++bi)
          if (act[bi] == a) prob.add_entry(row, lay.block_var[ri][bi], coord, 1.0);
      }
    }
  return cr;
}

inline std::vector<Mat> extract_gammas(const conic::ConicProblem& prob, const conic::ConicSolution& sol, int d,
                                       int n, const CouplingRows& cr) {
  std::vector<Mat> gammas;
  gammas.reserve(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d * d);
    for (int coord = 0; coord < d * d; ++coord) {
      int row = cr.row_of[static_cast<size_t>(a)][static_cast<size_t>(coord)];
      if (row >= 0) g(coord) = -sol.eq_dual(row);
    }
    gammas.push_back(conic::smat(g, d));
    (void)prob;
  }
  return gammas;
}

inline std::vector<RankVector> default_ranks(int n, int d) { return enumerate_rank_vectors(n, d); }

}  // namespace detail

// ---------------------------------------------------------------------------

// Maximal depolarizing or worst-case visibility of p under the rank-vector
// partitioned projective-simulation criterion. For d <= 3 the criterion is
// sufficient, so the value is the threshold itself (exact = true); for d >= 4
// it is an upper bound unless projective-model extraction succeeds.
inline VisibilityResult visibility(const Povm& p, NoiseKind noise, const conic::SolveOptions& opts = {},
                                   const std::vector<RankVector>* rank_subset = nullptr,
                                   std::ostream* dump_to = nullptr) {
  require_valid(p, "visibility");
  const int d = p.dim, n = p.outcomes();

  VisibilityResult out;
  out.noise = noise;

  if (all_effects_proportional_to_identity(p)) {  // trivially simulable
    out.v = 1.0;
    out.exact = true;
    out.predicted_threshold = 1.0;
    out.stats.status = conic::SolveStatus::Optimal;
    return out;
  }

  conic::ConicProblem prob;
  prob.maximize = true;
  int v_var = prob.add_free();
  prob.set_objective(v_var, 0, 1.0);

  std::vector<RankVector> rvecs = rank_subset ? *rank_subset : detail::default_ranks(n, d);
  detail::RankBlockLayout lay = detail::add_rank_blocks(prob, d, rvecs);

  std::vector<Eigen::VectorXd> rhs(static_cast<size_t>(n));
  std::vector<int> noise_vars;
  detail::CouplingRows cr;
  if (noise == NoiseKind::Depolarizing) {
    // sum_r F_{a|r} - v (E_a - tr(E_a) I/d) = tr(E_a) I/d ; plus cap v + t = 1
    for (int a = 0; a < n; ++a)
      rhs[static_cast<size_t>(a)] =
          conic::svec(Mat(p.effects[static_cast<size_t>(a)].trace().real() / d * Mat::Identity(d, d)));
    cr = detail::add_coupling_rows(prob, d, n, lay, rhs);
    for (int a = 0; a < n; ++a) {
      Mat coeff = -(p.effects[static_cast<size_t>(a)] -
                    p.effects[static_cast<size_t>(a)].trace().real() / d * Mat::Identity(d, d));
      Eigen::VectorXd cv = conic::svec(coeff);
      for (int coord = 0; coord < d * d; ++coord) {
        int row = cr.row_of[static_cast<size_t>(a)][static_cast<size_t>(coord)];
        if (row >= 0 && cv(coord) != 0.0) prob.add_entry(row, v_var, 0, cv(coord));
      }
    }
    int cap_t = prob.add_nonneg();
    int cap_row = prob.new_row(1.0);
    prob.add_entry(cap_row, v_var, 0, 1.0);
    prob.add_entry(cap_row, cap_t, 0, 1.0);
  } else {
    // sum_r F_{a|r} - v E_a - N_a = 0 ; sum_a N_a + v I = I with N_a >= 0
    for (int a = 0; a < n; ++a) rhs[static_cast<size_t>(a)] = Eigen::VectorXd::Zero(d * d);
    cr = detail::add_coupling_rows(prob, d, n, lay, rhs);
    for (int a = 0; a < n; ++a) {
      noise_vars.push_back(prob.add_psd_block(d));
      Eigen::VectorXd ev = conic::svec(p.effects[static_cast<size_t>(a)]);
      for (int coord = 0; coord < d * d; ++coord) {
        int row = cr.row_of[static_cast<size_t>(a)][static_cast<size_t>(coord)];
        if (row < 0) continue;
        if (ev(coord) != 0.0) prob.add_entry(row, v_var, 0, -ev(coord));
        prob.add_entry(row, noise_vars.back(), coord, -1.0);
      }
    }
    Eigen::VectorXd iv = conic::svec(Mat(Mat::Identity(d, d)));
    for (int coord = 0; coord < d * d; ++coord) {
      int row = prob.new_row(iv(coord));
      for (int a = 0; a < n; ++a) prob.add_entry(row, noise_vars[static_cast<size_t>(a)], coord, 1.0);
      if (iv(coord) != 0.0) prob.add_entry(row, v_var, 0, iv(coord));
    }
  }

  if (dump_to) conic::dump_problem(prob, *dump_to);
  conic::ConicSolution sol = conic::solve(prob, opts);
  out.stats = {sol.status, sol.gap, sol.iterations, sol.wall_ms};
  if (sol.status != conic::SolveStatus::Optimal)
    throw std::runtime_error(std::string("visibility: solver did not reach optimality (") + sol.message + ")");

  out.v = std::clamp(sol.objective, 0.0, 1.0);
  for (size_t ri = 0; ri < lay.rvecs.size(); ++ri) {
    std::vector<Mat> effs(static_cast<size_t>(n), Mat::Zero(d, d));
    for (size_t bi = 0; bi < lay.active[ri].size(); ++bi)
      effs[static_cast<size_t>(lay.active[ri][bi])] = sol.block_value(prob, lay.block_var[ri][bi]);
    out.blocks.emplace_back(lay.rvecs[ri], std::move(effs));
  }
  out.gammas = detail::extract_gammas(prob, sol, d, n, cr);
  out.predicted_threshold = 1.0;
  {
    double acc = 1.0;
    for (int a = 0; a < n; ++a)
      acc += frobenius_inner(out.gammas[static_cast<size_t>(a)], p.effects[static_cast<size_t>(a)]).real();
    out.predicted_threshold = acc;
  }
  if (noise == NoiseKind::WorstCase) {
    // recover the adversarial POVM from N_a = (1-v) E_noise^a
    if (1.0 - out.v > 1e-7) {
      Povm wn;
      wn.dim = d;
      wn.label = "worst-noise";
      for (int a = 0; a < n; ++a)
        wn.effects.push_back(sol.block_value(prob, noise_vars[static_cast<size_t>(a)]) / (1.0 - out.v));
      out.worst_noise = wn;
    }
    // dual operator beta from the noise-completeness rows (-Gamma_a - beta is psd)
    Eigen::VectorXd bv = Eigen::VectorXd::Zero(d * d);
    int base_row = prob.num_rows() - d * d;
    for (int coord = 0; coord < d * d; ++coord) bv(coord) = sol.eq_dual(base_row + coord);
    out.beta_op = conic::smat(bv, d);
  }

  out.exact = (d <= 3);
  return out;
}

// Eq.-(4)-style feasibility of the POVM itself (no noise). Optimal means a
// rank-partitioned projective mixture exists; infeasible means no such mixture
// (conclusive for d <= 3, "not in criterion" otherwise).
inline FeasibilityStatus feasibility(const Povm& p, const std::vector<RankVector>* rank_subset = nullptr,
                                     const conic::SolveOptions& opts = {}) {
  require_valid(p, "feasibility");
  const int d = p.dim, n = p.outcomes();
  conic::ConicProblem prob;
  std::vector<RankVector> rvecs = rank_subset ? *rank_subset : detail::default_ranks(n, d);
  detail::RankBlockLayout lay = detail::add_rank_blocks(prob, d, rvecs);
  std::vector<Eigen::VectorXd> rhs(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) rhs[static_cast<size_t>(a)] = conic::svec(p.effects[static_cast<size_t>(a)]);
  detail::add_coupling_rows(prob, d, n, lay, rhs);
  conic::ConicSolution sol = conic::solve(prob, opts);
  if (sol.status == conic::SolveStatus::Optimal) return FeasibilityStatus::SimulableCertified;
  if (sol.status == conic::SolveStatus::PrimalInfeasible)
    return d <= 3 ? FeasibilityStatus::NotSimulable : FeasibilityStatus::NotInCriterion;
  throw std::runtime_error(std::string("feasibility: solver failure (") + sol.message + ")");
}

// Dual certificate for non-simulability. The gammas satisfy the Appendix-B
// dual feasibility identity and predicted_threshold = 1 + sum_a tr(Gamma_a E_a).
inline WitnessCertificate dual_certificate(const Povm& p, NoiseKind noise, const conic::SolveOptions& opts = {}) {
  if (all_effects_proportional_to_identity(p))
    throw std::domain_error("dual_certificate: trivial POVM (all effects proportional to identity), threshold 1");
  VisibilityResult res = visibility(p, noise, opts);
  WitnessCertificate cert;
  cert.gammas = res.gammas;
  cert.predicted_threshold = res.predicted_threshold;
  cert.gap = std::abs(res.predicted_threshold - res.v);
  cert.beta_op = res.beta_op;
  cert.noise = noise;
  return cert;
}

inline WitnessCertificate certificate_from(const VisibilityResult& res) {
  WitnessCertificate cert;
  cert.gammas = res.gammas;
  cert.predicted_threshold = res.predicted_threshold;
  cert.gap = std::abs(res.predicted_threshold - res.v);
  cert.beta_op = res.beta_op;
  cert.noise = res.noise;
  return cert;
}

// W_target(E) = (1/d) sum_a <psi_a|E_a|psi_a> for a rank-1 target POVM.
inline double witness_value(const Povm& e, const Povm& target) {
  if (e.dim != target.dim || e.outcomes() != target.outcomes())
    throw std::invalid_argument("witness_value: dimension or outcome mismatch");
  double acc = 0.0;
  for (int a = 0; a < e.outcomes(); ++a) {
    const Mat& t = target.effects[static_cast<size_t>(a)];
    Eigen::SelfAdjointEigenSolver<Mat> es(t);
    int top = static_cast<int>(es.eigenvalues().size()) - 1;
    if (es.eigenvalues()(top) < 1e-12) continue;  // zero effect contributes nothing
    double second = top > 0 ? es.eigenvalues()(top - 1) : 0.0;
    if (second > 1e-9) throw std::invalid_argument("witness_value: target effect is not rank-1");
    Vec psi = es.eigenvectors().col(top);
    acc += (psi.adjoint() * e.effects[static_cast<size_t>(a)] * psi).value().real();
  }
  return acc / e.dim;
}

// Upper bound beta on the witness over rank-restricted projective simulations,
// maximized package-by-package over the rank-vector stream in enumeration
// order. v_beta = (d beta - 1)/(d - 1).
inline WitnessAnsatzResult witness_bound(const Povm& target, int package_size, int threads = 1,
                                         const conic::SolveOptions& opts = {}) {
  require_valid(target, "witness_bound");
  const int d = target.dim, n = target.outcomes();
  if (package_size < 1) throw std::invalid_argument("witness_bound: package_size must be >= 1");
  // rank-1 targets only; extract the eigenvectors once
  std::vector<Mat> objective(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    const Mat& t = target.effects[static_cast<size_t>(a)];
    Eigen::SelfAdjointEigenSolver<Mat> es(t);
    int top = static_cast<int>(es.eigenvalues().size()) - 1;
    if (top > 0 && es.eigenvalues()(top - 1) > 1e-9)
      throw std::invalid_argument("witness_bound: target effect is not rank-1");
    Vec psi = es.eigenvectors().col(top);
    objective[static_cast<size_t>(a)] = projector(psi) / d;
  }

  std::vector<std::vector<RankVector>> packages;
  {
    RankVectorStream stream(n, d);
    RankVector rv;
    std::vector<RankVector> cur;
    while (stream.next(rv)) {
      cur.push_back(rv);
      if (static_cast<int>(cur.size()) == package_size) {
        packages.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) packages.push_back(std::move(cur));
  }

  WitnessAnsatzResult out;
  out.target = target;
  out.package_size = package_size;
  out.per_package.resize(packages.size());

  auto run_package = [&](int j) {
    const auto& pkg = packages[static_cast<size_t>(j)];
    conic::ConicProblem prob;
    prob.maximize = true;
    detail::RankBlockLayout lay = detail::add_rank_blocks(prob, d, pkg);
    // normalization sum_r q_r = 1 with q_r = (1/d) sum_a tr F_{a|r}
    int norm_row = prob.new_row(1.0);
    for (size_t ri = 0; ri < lay.rvecs.size(); ++ri)
      for (size_t bi = 0; bi < lay.active[ri].size(); ++bi)
        for (int i = 0; i < d; ++i)
          prob.add_entry(norm_row, lay.block_var[ri][bi], i, 1.0 / static_cast<double>(d));
    for (size_t ri = 0; ri < lay.rvecs.size(); ++ri)
      for (size_t bi = 0; bi < lay.active[ri].size(); ++bi)
        prob.set_objective_block(lay.block_var[ri][bi],
                                 objective[static_cast<size_t>(lay.active[ri][bi])]);
    conic::ConicSolution sol = conic::solve(prob, opts);
    if (sol.status != conic::SolveStatus::Optimal)
      throw std::runtime_error("witness_bound: package " + std::to_string(j) + " failed (" + sol.message + ")");
    out.per_package[static_cast<size_t>(j)] = {j, sol.objective};
  };

  if (threads <= 1 || packages.size() <= 1) {
    for (int j = 0; j < static_cast<int>(packages.size()); ++j) run_package(j);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int nw = std::min<int>(threads, static_cast<int>(packages.size()));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(nw));
    for (int w = 0; w < nw; ++w)
      pool.emplace_back([&, w] {
        try {
          for (int j = next.fetch_add(1); j < static_cast<int>(packages.size()); j = next.fetch_add(1))
            run_package(j);
        } catch (...) {
          errors[static_cast<size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  out.beta = 0.0;
  for (const auto& [j, bj] : out.per_package) out.beta = std::max(out.beta, bj);
  out.v_beta = (d * out.beta - 1.0) / (d - 1.0);
  return out;
}

// If every heavy block of the solved visibility program is (weight times) a
// projective measurement, package them into an explicit SimulationModel.
inline std::optional<SimulationModel> extract_model(const VisibilityResult& result) {
  if (result.blocks.empty()) return std::nullopt;
  const auto& t = tols();
  SimulationModel model;
  double wsum = 0.0;
  int n = 0, d = 0;
  for (const auto& [rv, effs] : result.blocks) {
    n = static_cast<int>(effs.size());
    d = static_cast<int>(effs.front().rows());
    double q = 0.0;
    for (const Mat& f : effs) q += f.trace().real();
    q /= d;
    if (q <= t.block_weight) continue;
    ProjectiveMeasurement pm;
    pm.povm.dim = d;
    pm.povm.effects.assign(static_cast<size_t>(n), Mat::Zero(d, d));
    Mat total = Mat::Zero(d, d);
    for (int a = 0; a < n; ++a) {
      Mat o = effs[static_cast<size_t>(a)] / q;
      if (max_abs(Mat(o * o - o)) > t.extract_proj) return std::nullopt;
      pm.povm.effects[static_cast<size_t>(a)] = o;
      total += o;
    }
    if (max_abs(Mat(total - Mat::Identity(d, d))) > t.extract_proj) return std::nullopt;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (max_abs(Mat(pm.povm.effects[static_cast<size_t>(a)] * pm.povm.effects[static_cast<size_t>(b)])) >
            t.extract_proj)
          return std::nullopt;
    model.entries.push_back({q, std::move(pm)});
    wsum += q;
  }
  if (model.entries.empty() || std::abs(wsum - 1.0) > 1e-5) return std::nullopt;
  for (auto& e : model.entries) e.weight /= wsum;  // remove solver-level drift
  model.output_outcomes = n;
  return model;
}

// Try projective-model extraction on an upper-bound result; on success the
// value is a proven threshold.
inline void attach_extraction(VisibilityResult& res, const Povm& p) {
  if (res.exact || res.blocks.empty()) return;
  auto model = extract_model(res);
  if (!model) return;
  Povm target = res.noise == NoiseKind::Depolarizing
                    ? depolarize(p, res.v)
                    : [&] {
                        Povm t = depolarize(p, 1.0);
                        if (res.worst_noise)
                          for (int a = 0; a < p.outcomes(); ++a)
                            t.effects[static_cast<size_t>(a)] =
                                res.v * p.effects[static_cast<size_t>(a)] +
                                (1.0 - res.v) * res.worst_noise->effects[static_cast<size_t>(a)];
                        return t;
                      }();
  auto rep = verify_decomposition(*model, target);
  if (rep.max_deviation <= 1e-8) {
    res.extracted_model = std::move(model);
    res.exact = true;
  }
}

struct ThresholdRelationReport {
  double v_depol = 0.0;
  double v_worst = 0.0;
  double v_worst_flagged = 0.0;
  bool depol_le_worst = false;
  bool flagging_monotone = false;
};

// Worst-case dominates depolarizing, and flagging cannot lower the worst-case
// threshold.
inline ThresholdRelationReport threshold_relation_check(const Povm& p, const conic::SolveOptions& opts = {}) {
  ThresholdRelationReport rep;
  rep.v_depol = visibility(p, NoiseKind::Depolarizing, opts).v;
  rep.v_worst = visibility(p, NoiseKind::WorstCase, opts).v;
  rep.v_worst_flagged = visibility(flag(p, 1), NoiseKind::WorstCase, opts).v;
  rep.depol_le_worst = rep.v_depol <= rep.v_worst + 1e-6;
  rep.flagging_monotone = rep.v_worst_flagged >= rep.v_worst - 1e-6;
  return rep;
}

}  // namespace povmsim
