#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "povmsim/operators.hpp"
#include "povmsim/tolerances.hpp"

namespace povmsim {

enum class NoiseKind { Depolarizing, WorstCase };

inline const char* noise_name(NoiseKind k) {
  return k == NoiseKind::Depolarizing ? "depol" : "worst";
}

struct Povm {
  int dim = 0;
  std::vector<Mat> effects;
  std::string label;

  int outcomes() const { return static_cast<int>(effects.size()); }
};

struct ValidationIssue {
  std::string what;
  double magnitude = 0.0;
};
using ValidationReport = std::vector<ValidationIssue>;

// Reports violated POVM invariants with magnitudes; empty means valid.
// Zero effects are permitted and count as PSD.
inline ValidationReport validate(const Povm& p) {
  ValidationReport rep;
  const auto& t = tols();
  if (p.dim <= 0) {
    rep.push_back({"nonpositive dimension", static_cast<double>(-p.dim)});
    return rep;
  }
  if (p.effects.empty()) {
    rep.push_back({"no effects", 0.0});
    return rep;
  }
  Mat sum = Mat::Zero(p.dim, p.dim);
  for (int a = 0; a < p.outcomes(); ++a) {
    const Mat& e = p.effects[static_cast<size_t>(a)];
    if (e.rows() != p.dim || e.cols() != p.dim) {
      rep.push_back({"effect " + std::to_string(a) + " dimension mismatch", 0.0});
      continue;
    }
    if (!entries_finite(e)) {
      rep.push_back({"effect " + std::to_string(a) + " has non-finite entries", 0.0});
      continue;
    }
    double hdev = hermitian_deviation(e);
    if (hdev > t.hermitian) {
      rep.push_back({"effect " + std::to_string(a) + " not Hermitian", hdev});
      continue;
    }
    Mat h = (e + e.adjoint()) / 2.0;
    double mineig = Eigen::SelfAdjointEigenSolver<Mat>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (mineig < -t.psd) rep.push_back({"effect " + std::to_string(a) + " not PSD", -mineig});
    sum += h;
  }
  double cdev = max_abs(Mat(sum - Mat::Identity(p.dim, p.dim)));
  if (cdev > t.completeness) rep.push_back({"completeness violated", cdev});
  return rep;
}

inline bool is_valid(const Povm& p) { return validate(p).empty(); }

inline void require_valid(const Povm& p, const char* who) {
  auto rep = validate(p);
  if (!rep.empty())
    throw std::invalid_argument(std::string(who) + ": invalid POVM (" + rep.front().what + ")");
}

// Phi_v(X) = v X + (1-v)/d tr(X) I applied to every effect.
inline Povm depolarize(const Povm& p, double v) {
  if (v < 0.0 || v > 1.0) throw std::invalid_argument("depolarize: v outside [0,1]");
  Povm out = p;
  for (Mat& e : out.effects)
    e = v * e + ((1.0 - v) / p.dim) * e.trace().real() * Mat::Identity(p.dim, p.dim);
  return out;
}

// A POVM whose effects are mutually orthogonal projectors (zero effects allowed).
struct ProjectiveMeasurement {
  Povm povm;

  int dim() const { return povm.dim; }
  int outcomes() const { return povm.outcomes(); }
};

inline ValidationReport validate_projective(const ProjectiveMeasurement& m) {
  ValidationReport rep = validate(m.povm);
  const auto& t = tols();
  const auto& eff = m.povm.effects;
  for (size_t a = 0; a < eff.size(); ++a) {
    double idem = max_abs(Mat(eff[a] * eff[a] - eff[a]));
    if (idem > t.projective) rep.push_back({"effect " + std::to_string(a) + " not idempotent", idem});
    for (size_t b = a + 1; b < eff.size(); ++b) {
      double cross = max_abs(Mat(eff[a] * eff[b]));
      if (cross > t.projective)
        rep.push_back({"effects " + std::to_string(a) + "," + std::to_string(b) + " not orthogonal", cross});
    }
  }
  return rep;
}

inline bool is_projective(const ProjectiveMeasurement& m) { return validate_projective(m).empty(); }

// Mixture of projective measurements with optional classical post-processing.
// Without a table, entry measurements share the model's outcome count. With a
// table, entry lambda has its own measurement outcome alphabet k and post[lambda]
// is the row-stochastic matrix p(a|k,lambda) of shape (outcomes_k x n_out).
struct SimulationEntry {
  double weight = 0.0;
  ProjectiveMeasurement measurement;
};

struct SimulationModel {
  std::vector<SimulationEntry> entries;
  std::vector<Eigen::MatrixXd> post;  // empty => no post-processing
  int output_outcomes = 0;

  bool has_postprocessing() const { return !post.empty(); }
};

inline ValidationReport validate_model(const SimulationModel& m) {
  ValidationReport rep;
  const auto& t = tols();
  if (m.entries.empty()) {
    rep.push_back({"no entries", 0.0});
    return rep;
  }
  double wsum = 0.0;
  for (size_t l = 0; l < m.entries.size(); ++l) {
    const auto& e = m.entries[l];
    if (e.weight < -t.weights || e.weight > 1.0 + t.weights)
      rep.push_back({"entry " + std::to_string(l) + " weight outside [0,1]", e.weight});
    wsum += e.weight;
    auto sub = validate_projective(e.measurement);
    for (auto& is : sub) rep.push_back({"entry " + std::to_string(l) + ": " + is.what, is.magnitude});
    if (!m.has_postprocessing() && e.measurement.outcomes() != m.output_outcomes)
      rep.push_back({"entry " + std::to_string(l) + " outcome count mismatch", 0.0});
  }
  if (std::abs(wsum - 1.0) > t.weights) rep.push_back({"weights do not sum to 1", std::abs(wsum - 1.0)});
  if (m.has_postprocessing()) {
    if (m.post.size() != m.entries.size()) {
      rep.push_back({"post-processing table count mismatch", 0.0});
      return rep;
    }
    for (size_t l = 0; l < m.post.size(); ++l) {
      const auto& tbl = m.post[l];
      if (tbl.rows() != m.entries[l].measurement.outcomes() || tbl.cols() != m.output_outcomes) {
        rep.push_back({"post table " + std::to_string(l) + " shape mismatch", 0.0});
        continue;
      }
      if (tbl.minCoeff() < -t.postproc_rows)
        rep.push_back({"post table " + std::to_string(l) + " negative entry", -tbl.minCoeff()});
      for (Eigen::Index k = 0; k < tbl.rows(); ++k) {
        double rsum = tbl.row(k).sum();
        if (std::abs(rsum - 1.0) > t.postproc_rows)
          rep.push_back({"post table " + std::to_string(l) + " row " + std::to_string(k) + " not stochastic",
                         std::abs(rsum - 1.0)});
      }
    }
  }
  return rep;
}

// E_a = sum_lambda q_lambda sum_k p(a|k,lambda) P_{k|lambda}
inline Povm apply_simulation(const SimulationModel& m) {
  if (m.entries.empty()) throw std::invalid_argument("apply_simulation: empty model");
  int d = m.entries.front().measurement.dim();
  int n = m.output_outcomes;
  for (const auto& e : m.entries) {
    if (e.measurement.dim() != d) throw std::invalid_argument("apply_simulation: dimension mismatch");
    if (!m.has_postprocessing() && e.measurement.outcomes() != n)
      throw std::invalid_argument("apply_simulation: outcome-count mismatch across entries");
  }
  Povm out;
  out.dim = d;
  out.effects.assign(static_cast<size_t>(n), Mat::Zero(d, d));
  for (size_t l = 0; l < m.entries.size(); ++l) {
    const auto& e = m.entries[l];
    if (!m.has_postprocessing()) {
      for (int a = 0; a < n; ++a)
        out.effects[static_cast<size_t>(a)] += e.weight * e.measurement.povm.effects[static_cast<size_t>(a)];
    } else {
      const auto& tbl = m.post[l];
      for (int k = 0; k < e.measurement.outcomes(); ++k)
        for (int a = 0; a < n; ++a)
          out.effects[static_cast<size_t>(a)] +=
              e.weight * tbl(k, a) * e.measurement.povm.effects[static_cast<size_t>(k)];
    }
  }
  return out;
}

// Rewrites a post-processed model as a plain mixture of projective
// measurements, exactly. Each entry's stochastic table decomposes into
// deterministic strategies g : k -> a; the strategy's measurement has effects
// G_{a} = sum_k P_k [g(k)=a]. The greedy peel below zeroes at least one table
// entry per round, so an entry with K outcomes spawns at most K(n-1)+1
// strategies over the outcome alphabet actually present.
inline SimulationModel eliminate_postprocessing(const SimulationModel& m) {
  if (!m.has_postprocessing()) return m;
  auto rep = validate_model(m);
  for (const auto& is : rep)
    if (is.what.find("stochastic") != std::string::npos || is.what.find("negative") != std::string::npos)
      throw std::invalid_argument("eliminate_postprocessing: non-stochastic table (" + is.what + ")");
  const int n = m.output_outcomes;
  SimulationModel out;
  out.output_outcomes = n;
  for (size_t l = 0; l < m.entries.size(); ++l) {
    const auto& entry = m.entries[l];
    const int K = entry.measurement.outcomes();
    Eigen::MatrixXd tbl = m.post[l];
    while (true) {
      // first strictly positive column per row -> deterministic strategy
      std::vector<int> g(static_cast<size_t>(K), -1);
      double w = 1.0;
      bool any = false;
      for (int k = 0; k < K; ++k) {
        for (int a = 0; a < n; ++a)
          if (tbl(k, a) > 1e-14) {
            g[static_cast<size_t>(k)] = a;
            w = std::min(w, tbl(k, a));
            any = true;
            break;
          }
        if (g[static_cast<size_t>(k)] < 0) {
          any = false;
          break;
        }
      }
      if (!any || w <= 1e-14) break;
      ProjectiveMeasurement pm;
      pm.povm.dim = entry.measurement.dim();
      pm.povm.effects.assign(static_cast<size_t>(n), Mat::Zero(pm.povm.dim, pm.povm.dim));
      for (int k = 0; k < K; ++k)
        pm.povm.effects[static_cast<size_t>(g[static_cast<size_t>(k)])] +=
            entry.measurement.povm.effects[static_cast<size_t>(k)];
      out.entries.push_back({entry.weight * w, std::move(pm)});
      for (int k = 0; k < K; ++k) tbl(k, g[static_cast<size_t>(k)]) -= w;
    }
  }
  return out;
}

// Embed into d + extra_dims dimensions and append one rank-1 flag effect per
// added dimension.
inline Povm flag(const Povm& p, int extra_dims) {
  if (extra_dims < 1) throw std::invalid_argument("flag: extra_dims must be >= 1");
  const int d = p.dim, D = p.dim + extra_dims;
  Povm out;
  out.dim = D;
  out.label = p.label.empty() ? "" : p.label + "+flags";
  for (const Mat& e : p.effects) {
    Mat big = Mat::Zero(D, D);
    big.topLeftCorner(d, d) = e;
    out.effects.push_back(big);
  }
  for (int k = 0; k < extra_dims; ++k) {
    Mat big = Mat::Zero(D, D);
    big(d + k, d + k) = 1.0;
    out.effects.push_back(big);
  }
  return out;
}

// One effect per partition set, each the sum of its members. The partition
// must cover all outcomes exactly once.
inline Povm coarse_grain(const Povm& p, const std::vector<std::vector<int>>& partition) {
  std::vector<int> seen(static_cast<size_t>(p.outcomes()), 0);
  for (const auto& set : partition)
    for (int a : set) {
      if (a < 0 || a >= p.outcomes()) throw std::invalid_argument("coarse_grain: outcome index out of range");
      if (seen[static_cast<size_t>(a)]++) throw std::invalid_argument("coarse_grain: outcome repeated");
    }
  for (int a = 0; a < p.outcomes(); ++a)
    if (!seen[static_cast<size_t>(a)]) throw std::invalid_argument("coarse_grain: outcome not covered");
  Povm out;
  out.dim = p.dim;
  out.label = p.label;
  for (const auto& set : partition) {
    Mat e = Mat::Zero(p.dim, p.dim);
    for (int a : set) e += p.effects[static_cast<size_t>(a)];
    out.effects.push_back(e);
  }
  return out;
}

inline bool all_effects_proportional_to_identity(const Povm& p, double tol = 1e-9) {
  for (const Mat& e : p.effects) {
    Mat diff = e - (e.trace() / static_cast<double>(p.dim)) * Mat::Identity(p.dim, p.dim);
    if (max_abs(diff) > tol) return false;
  }
  return true;
}

}  // namespace povmsim
