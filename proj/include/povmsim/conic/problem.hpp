#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "povmsim/conic/svec.hpp"
#include "povmsim/operators.hpp"

namespace povmsim::conic {

enum class VarKind { PsdBlock, Nonneg, Free };

struct VarInfo {
  VarKind kind = VarKind::Free;
  int size = 1;    // Hermitian block size k (scalars: 1)
  int offset = 0;  // first coordinate in x
  int coords() const { return kind == VarKind::PsdBlock ? size * size : 1; }
};

// Canonical conic program
//   min/max  c . x   s.t.  A x = b,  every PsdBlock psd, every Nonneg >= 0.
// Hermitian blocks live in the svec parametrization of svec.hpp, so <H, X>
// constraints are plain rows over real coordinates.
struct ConicProblem {
  std::vector<VarInfo> vars;
  int num_coords = 0;
  bool maximize = false;
  std::vector<double> objective;  // dense, length num_coords

  struct Entry {
    int row, col;
    double val;
  };
  std::vector<Entry> entries;
  std::vector<double> rhs;

  int num_rows() const { return static_cast<int>(rhs.size()); }

  int add_var(VarKind kind, int size = 1) {
    if (kind == VarKind::PsdBlock && size < 1) throw std::invalid_argument("add_var: bad block size");
    VarInfo vi;
    vi.kind = kind;
    vi.size = kind == VarKind::PsdBlock ? size : 1;
    vi.offset = num_coords;
    vars.push_back(vi);
    num_coords += vi.coords();
    objective.resize(static_cast<size_t>(num_coords), 0.0);
    return static_cast<int>(vars.size()) - 1;
  }
  int add_psd_block(int k) { return add_var(VarKind::PsdBlock, k); }
  int add_nonneg() { return add_var(VarKind::Nonneg); }
  int add_free() { return add_var(VarKind::Free); }

  int new_row(double b) {
    rhs.push_back(b);
    return num_rows() - 1;
  }

  int coord_of(int var, int local = 0) const { return vars[static_cast<size_t>(var)].offset + local; }

  void add_entry(int row, int var, int local, double val) {
    if (val == 0.0) return;
    entries.push_back({row, coord_of(var, local), val});
  }

  // coefficient <H, X_var> on a Hermitian block
  void add_block_entry(int row, int var, const Mat& h) {
    const VarInfo& vi = vars[static_cast<size_t>(var)];
    if (vi.kind != VarKind::PsdBlock || h.rows() != vi.size)
      throw std::invalid_argument("add_block_entry: not a matching PSD block");
    Eigen::VectorXd coeff = svec(h);
    for (int i = 0; i < coeff.size(); ++i)
      if (coeff(i) != 0.0) entries.push_back({row, vi.offset + i, coeff(i)});
  }

  void set_objective(int var, int local, double val) { objective[static_cast<size_t>(coord_of(var, local))] = val; }

  void set_objective_block(int var, const Mat& h) {
    const VarInfo& vi = vars[static_cast<size_t>(var)];
    Eigen::VectorXd coeff = svec(h);
    for (int i = 0; i < coeff.size(); ++i) objective[static_cast<size_t>(vi.offset + i)] = coeff(i);
  }
};

// One line per nonzero: sparse text dump for cross-solver debugging.
inline void dump_problem(const ConicProblem& p, std::ostream& os) {
  os << "# povmsim conic problem dump\n";
  os << "sense " << (p.maximize ? "maximize" : "minimize") << "\n";
  os << "vars " << p.vars.size() << " coords " << p.num_coords << " rows " << p.num_rows() << "\n";
  for (size_t i = 0; i < p.vars.size(); ++i) {
    const auto& v = p.vars[i];
    os << "var " << i << " "
       << (v.kind == VarKind::PsdBlock ? "psd" : v.kind == VarKind::Nonneg ? "nonneg" : "free");
    if (v.kind == VarKind::PsdBlock) os << " " << v.size;
    os << "\n";
  }
  for (int i = 0; i < p.num_coords; ++i)
    if (p.objective[static_cast<size_t>(i)] != 0.0) os << "obj " << i << " " << p.objective[static_cast<size_t>(i)] << "\n";
  for (const auto& e : p.entries) os << "A " << e.row << " " << e.col << " " << e.val << "\n";
  for (int r = 0; r < p.num_rows(); ++r)
    if (p.rhs[static_cast<size_t>(r)] != 0.0) os << "rhs " << r << " " << p.rhs[static_cast<size_t>(r)] << "\n";
}

// ---------------------------------------------------------------------------
// Presolve: structurally-zero block removal, fixed-scalar elimination, empty
// and duplicate row removal. Solutions map back losslessly via the index maps.

struct PresolveResult {
  ConicProblem reduced;
  std::vector<int> var_map;          // original var -> reduced var, -1 if eliminated
  std::vector<double> fixed_value;   // per original var (scalars fixed by presolve)
  std::vector<int> row_map;          // original row -> reduced row, -1 if dropped
  double objective_constant = 0.0;   // contribution of fixed scalars, user sense
  bool infeasible = false;
  std::string reason;
};

inline PresolveResult presolve(const ConicProblem& orig) {
  PresolveResult out;
  const int nv = static_cast<int>(orig.vars.size());
  const int nr = orig.num_rows();
  out.var_map.assign(static_cast<size_t>(nv), 0);
  out.fixed_value.assign(static_cast<size_t>(nv), 0.0);
  out.row_map.assign(static_cast<size_t>(nr), 0);

  std::vector<char> var_dead(static_cast<size_t>(nv), 0);
  std::vector<char> row_dead(static_cast<size_t>(nr), 0);
  std::vector<double> rhs = orig.rhs;

  // coordinate -> variable lookup
  std::vector<int> coord_var(static_cast<size_t>(orig.num_coords));
  for (int v = 0; v < nv; ++v)
    for (int c = 0; c < orig.vars[static_cast<size_t>(v)].coords(); ++c)
      coord_var[static_cast<size_t>(orig.vars[static_cast<size_t>(v)].offset + c)] = v;

  // group entries per row
  std::vector<std::vector<ConicProblem::Entry>> row_entries(static_cast<size_t>(nr));
  for (const auto& e : orig.entries) row_entries[static_cast<size_t>(e.row)].push_back(e);

  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < nr; ++r) {
      if (row_dead[static_cast<size_t>(r)]) continue;
      // live entries of this row
      std::vector<const ConicProblem::Entry*> live;
      for (const auto& e : row_entries[static_cast<size_t>(r)])
        if (!var_dead[static_cast<size_t>(coord_var[static_cast<size_t>(e.col)])] && e.val != 0.0)
          live.push_back(&e);

      if (live.empty()) {
        if (std::abs(rhs[static_cast<size_t>(r)]) > 1e-12) {
          out.infeasible = true;
          out.reason = "row " + std::to_string(r) + " empty with nonzero rhs";
          return out;
        }
        row_dead[static_cast<size_t>(r)] = 1;
        changed = true;
        continue;
      }

      // zero-trace PSD block: support equals the diagonal of one block, all
      // coefficients of one sign, rhs 0  =>  block pinned to zero
      int v0 = coord_var[static_cast<size_t>(live.front()->col)];
      const VarInfo& vi = orig.vars[static_cast<size_t>(v0)];
      if (vi.kind == VarKind::PsdBlock && std::abs(rhs[static_cast<size_t>(r)]) <= 1e-14) {
        bool all_diag_same_block = true, pos = true, neg = true;
        std::vector<char> diag_hit(static_cast<size_t>(vi.size), 0);
        for (const auto* e : live) {
          int local = e->col - vi.offset;
          if (coord_var[static_cast<size_t>(e->col)] != v0 || local < 0 || local >= vi.size) {
            all_diag_same_block = false;
            break;
          }
          diag_hit[static_cast<size_t>(local)] = 1;
          pos = pos && e->val > 0;
          neg = neg && e->val < 0;
        }
        bool full_diag = all_diag_same_block;
        for (char h : diag_hit) full_diag = full_diag && h;
        if (full_diag && (pos || neg)) {
          var_dead[static_cast<size_t>(v0)] = 1;  // psd with zero trace is zero
          row_dead[static_cast<size_t>(r)] = 1;
          changed = true;
          continue;
        }
      }

      // singleton row on a scalar: fix the variable
      if (live.size() == 1) {
        int v = coord_var[static_cast<size_t>(live.front()->col)];
        const VarInfo& svi = orig.vars[static_cast<size_t>(v)];
        if (svi.kind != VarKind::PsdBlock) {
          double val = rhs[static_cast<size_t>(r)] / live.front()->val;
          if (svi.kind == VarKind::Nonneg && val < -1e-10) {
            out.infeasible = true;
            out.reason = "nonneg scalar fixed to negative value";
            return out;
          }
          out.fixed_value[static_cast<size_t>(v)] = val;
          var_dead[static_cast<size_t>(v)] = 2;  // 2 = fixed, not zero
          row_dead[static_cast<size_t>(r)] = 1;
          // substitute into every other row
          for (int r2 = 0; r2 < nr; ++r2) {
            if (row_dead[static_cast<size_t>(r2)]) continue;
            for (const auto& e : row_entries[static_cast<size_t>(r2)])
              if (coord_var[static_cast<size_t>(e.col)] == v) rhs[static_cast<size_t>(r2)] -= e.val * val;
          }
          out.objective_constant += orig.objective[static_cast<size_t>(orig.vars[static_cast<size_t>(v)].offset)] * val;
          changed = true;
          continue;
        }
      }
    }
  }

  // duplicate rows (identical live coefficient sets)
  std::map<std::vector<std::pair<int, double>>, int> seen;
  for (int r = 0; r < nr; ++r) {
    if (row_dead[static_cast<size_t>(r)]) continue;
    std::vector<std::pair<int, double>> key;
    for (const auto& e : row_entries[static_cast<size_t>(r)])
      if (!var_dead[static_cast<size_t>(coord_var[static_cast<size_t>(e.col)])] && e.val != 0.0)
        key.emplace_back(e.col, e.val);
    std::sort(key.begin(), key.end());
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(std::move(key), r);
    } else {
      if (std::abs(rhs[static_cast<size_t>(r)] - rhs[static_cast<size_t>(it->second)]) > 1e-12) {
        out.infeasible = true;
        out.reason = "duplicate rows with conflicting rhs";
        return out;
      }
      row_dead[static_cast<size_t>(r)] = 1;
    }
  }

  // rebuild
  ConicProblem& red = out.reduced;
  red.maximize = orig.maximize;
  for (int v = 0; v < nv; ++v) {
    if (var_dead[static_cast<size_t>(v)]) {
      out.var_map[static_cast<size_t>(v)] = -1;
      continue;
    }
    const VarInfo& vi = orig.vars[static_cast<size_t>(v)];
    out.var_map[static_cast<size_t>(v)] = red.add_var(vi.kind, vi.size);
    for (int c = 0; c < vi.coords(); ++c)
      red.objective[static_cast<size_t>(red.vars.back().offset + c)] =
          orig.objective[static_cast<size_t>(vi.offset + c)];
  }
  for (int r = 0; r < nr; ++r) {
    if (row_dead[static_cast<size_t>(r)]) {
      out.row_map[static_cast<size_t>(r)] = -1;
      continue;
    }
    out.row_map[static_cast<size_t>(r)] = red.new_row(rhs[static_cast<size_t>(r)]);
  }
  for (const auto& e : orig.entries) {
    int v = coord_var[static_cast<size_t>(e.col)];
    if (var_dead[static_cast<size_t>(v)] || row_dead[static_cast<size_t>(e.row)] || e.val == 0.0) continue;
    int local = e.col - orig.vars[static_cast<size_t>(v)].offset;
    red.add_entry(out.row_map[static_cast<size_t>(e.row)], out.var_map[static_cast<size_t>(v)], local, e.val);
  }
  return out;
}

}  // namespace povmsim::conic
