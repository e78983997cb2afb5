#pragma once

#include <atomic>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "povmsim/constructions.hpp"
#include "povmsim/povm_json.hpp"
#include "povmsim/search.hpp"
#include "povmsim/simulability.hpp"

namespace povmsim {

// Bounded worker pool with input-order results.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(int count, int threads, Fn&& fn) {
  std::vector<Result> out(static_cast<size_t>(count));
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) out[static_cast<size_t>(i)] = fn(i);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(count));
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(threads, count); ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          out[static_cast<size_t>(i)] = fn(i);
        } catch (...) {
          errors[static_cast<size_t>(i)] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------

struct SweepSpec {
  std::string parameter = "theta";
  double lo = 0.0;
  double hi = kPi / 9.0;
  int samples = 25;
  NoiseKind noise = NoiseKind::Depolarizing;
};

struct SweepRow {
  double theta = 0.0;
  double v = 0.0;
  bool exact = false;
  double gap = 0.0;
  bool failed = false;
  std::string error;
};

inline std::vector<SweepRow> cmd_sweep(const SweepSpec& spec, int threads = 1,
                                       const conic::SolveOptions& opts = {}) {
  if (spec.samples < 2) throw std::invalid_argument("sweep: need at least 2 samples");
  if (!(spec.lo < spec.hi)) throw std::invalid_argument("sweep: need lo < hi");
  if (spec.parameter != "theta") throw std::invalid_argument("sweep: unknown parameter " + spec.parameter);
  return parallel_map<SweepRow>(spec.samples, threads, [&](int i) {
    SweepRow row;
    row.theta = spec.lo + (spec.hi - spec.lo) * i / (spec.samples - 1);
    try {
      VisibilityResult res = visibility(qutrit_sic(row.theta), spec.noise, opts);
      row.v = res.v;
      row.exact = res.exact;
      row.gap = res.stats.gap;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    return row;
  });
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
  os << "theta,v,exact,gap,failed\n";
  os << std::setprecision(12);
  for (const auto& r : rows)
    os << r.theta << "," << r.v << "," << (r.exact ? 1 : 0) << "," << r.gap << "," << (r.failed ? 1 : 0) << "\n";
}

// ---------------------------------------------------------------------------

struct TableRow {
  std::string label;
  std::string kind;  // "depol" | "worst" | "witness-beta" | "witness-v"
  double computed = 0.0;
  double published = 0.0;
  double deviation = 0.0;
  bool skipped = false;
  bool failed = false;
  std::string note;
};

struct TablesOptions {
  bool long_rows = false;  // include the d=4 visibility rows (minutes each)
  int threads = 1;
  int package_size = 500;
  std::string fiducial_d5;  // optional user-supplied SIC fiducial files
  std::string fiducial_d6;
  conic::SolveOptions solver;
};

namespace detail {

inline TableRow make_row(const std::string& label, const std::string& kind, double published,
                         const std::function<double()>& compute) {
  TableRow row;
  row.label = label;
  row.kind = kind;
  row.published = published;
  try {
    row.computed = compute();
    row.deviation = std::abs(row.computed - row.published);
  } catch (const std::exception& e) {
    row.failed = true;
    row.note = e.what();
  }
  return row;
}

}  // namespace detail

// Recompute the published threshold and witness tables at desk scale:
// d <= 3 rows always, d = 4 rows behind long_rows, d = 5,6 witness rows only
// when fiducial files are supplied.
inline std::vector<TableRow> cmd_tables(const TablesOptions& topt = {}) {
  struct Spec {
    std::string label, kind;
    double published;
    std::function<double()> compute;
    bool gated = false;
    std::string skip_reason;
  };
  auto depol = [&](auto make) {
    return [make, s = topt.solver] { return visibility(make(), NoiseKind::Depolarizing, s).v; };
  };
  auto worst = [&](auto make) {
    return [make, s = topt.solver] { return visibility(make(), NoiseKind::WorstCase, s).v; };
  };
  auto beta = [&](auto make) {
    return [make, this_ = topt] { return witness_bound(make(), this_.package_size, this_.threads, this_.solver).beta; };
  };
  auto vbeta = [&](auto make) {
    return
        [make, this_ = topt] { return witness_bound(make(), this_.package_size, this_.threads, this_.solver).v_beta; };
  };
  const double theta3a = kPi / 18.0;
  auto sic3a = [theta3a] { return qutrit_sic(theta3a); };

  std::vector<Spec> specs = {
      {"2a", "depol", 0.8165, depol(qubit_sic)},
      {"2a", "worst", 0.9082, worst(qubit_sic)},
      {"3a", "depol", 0.8003, depol(sic3a)},
      {"3a", "worst", 0.8687, worst(sic3a)},
      {"3b (norrell)", "depol", 0.8058, depol(norrell_sic)},
      {"3b (norrell)", "worst", 8.0 / 9.0, worst(norrell_sic)},
      {"3c (hesse)", "depol", hesse_visibility(), depol(hesse_sic)},
      {"3c (hesse)", "worst", 0.8621, worst(hesse_sic)},
      {"fsic2 d=3", "depol", 0.7985, depol([] { return fsic2_povm(3); })},
      {"fsic2 d=3", "worst", 0.9137, worst([] { return fsic2_povm(3); })},
      {"2a", "witness-beta", 1.0 / std::sqrt(6.0) + 0.5, beta(qubit_sic)},
      {"2a", "witness-v", std::sqrt(2.0 / 3.0), vbeta(qubit_sic)},
      {"3a", "witness-beta", 0.8821, beta(sic3a)},
      {"3a", "witness-v", 0.8232, vbeta(sic3a)},
      {"3b (norrell)", "witness-beta", 8.0 / 9.0, beta(norrell_sic)},
      {"3b (norrell)", "witness-v", 5.0 / 6.0, vbeta(norrell_sic)},
      {"3c (hesse)", "witness-beta", 4.0 / 9.0 * (1.0 + std::cos(kPi / 9.0)), beta(hesse_sic)},
      {"3c (hesse)", "witness-v", hesse_visibility(), vbeta(hesse_sic)},
      {"4a", "depol", 0.8255, depol(ququart_sic), !topt.long_rows, "gated behind --long (minutes-scale SDP)"},
      {"4a", "worst", 0.8739, worst(ququart_sic), !topt.long_rows, "gated behind --long (minutes-scale SDP)"},
      {"fsic3 d=4", "depol", 0.7823, depol([] { return fsic3_povm(4); }), !topt.long_rows,
       "gated behind --long (minutes-scale SDP)"},
      {"fsic3 d=4", "worst", 0.8704, worst([] { return fsic3_povm(4); }), !topt.long_rows,
       "gated behind --long (minutes-scale SDP)"},
      {"4a", "witness-beta", 0.8839, beta(ququart_sic), !topt.long_rows, "gated behind --long"},
      {"4a", "witness-v", 0.8452, vbeta(ququart_sic), !topt.long_rows, "gated behind --long"},
  };
  // d = 5, 6 witness rows need user-supplied fiducials
  auto fid_spec = [&](const std::string& path, int d, const std::string& label, double pb, double pv) {
    if (path.empty()) {
      specs.push_back({label, "witness-beta", pb, {}, true, "requires a user-supplied d=" + std::to_string(d) +
                                                                " fiducial file (--fiducial-d" + std::to_string(d) +
                                                                ")"});
      specs.push_back({label, "witness-v", pv, {}, true, "requires a user-supplied fiducial file"});
    } else {
      auto make = [path] { return sic_from_fiducial(load_fiducial(path)); };
      specs.push_back({label, "witness-beta", pb, beta(make)});
      specs.push_back({label, "witness-v", pv, vbeta(make)});
    }
  };
  fid_spec(topt.fiducial_d5, 5, "5a", 0.8669, 0.8336);
  fid_spec(topt.fiducial_d6, 6, "6a", 0.8655, 0.8386);

  return parallel_map<TableRow>(static_cast<int>(specs.size()), topt.threads, [&](int i) {
    const Spec& s = specs[static_cast<size_t>(i)];
    if (s.gated) {
      TableRow row;
      row.label = s.label;
      row.kind = s.kind;
      row.published = s.published;
      row.skipped = true;
      row.note = s.skip_reason;
      return row;
    }
    return detail::make_row(s.label, s.kind, s.published, s.compute);
  });
}

inline void write_tables(const std::vector<TableRow>& rows, std::ostream& os, bool csv = false) {
  if (csv) {
    os << "label,kind,computed,published,deviation,skipped,failed,note\n";
    os << std::setprecision(10);
    for (const auto& r : rows)
      os << r.label << "," << r.kind << "," << r.computed << "," << r.published << "," << r.deviation << ","
         << (r.skipped ? 1 : 0) << "," << (r.failed ? 1 : 0) << "," << r.note << "\n";
    return;
  }
  os << std::left << std::setw(16) << "row" << std::setw(14) << "kind" << std::setw(14) << "computed"
     << std::setw(14) << "published" << std::setw(12) << "deviation"
     << "note\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.label << std::setw(14) << r.kind;
    if (r.skipped) {
      os << std::setw(14) << "-" << std::setw(14) << std::setprecision(6) << r.published << std::setw(12) << "-"
         << "skipped: " << r.note << "\n";
    } else if (r.failed) {
      os << std::setw(14) << "failed" << std::setw(14) << r.published << std::setw(12) << "-" << r.note << "\n";
    } else {
      os << std::setw(14) << std::setprecision(8) << r.computed << std::setw(14) << r.published << std::setw(12)
         << std::setprecision(2) << std::scientific << r.deviation << std::defaultfloat << "\n";
    }
  }
}

// ---------------------------------------------------------------------------

struct VerifyRow {
  std::string what;
  double residual = 0.0;
  double projectivity = 0.0;
  double v = 0.0;
  bool ok = false;
};

// Residuals of the analytic decompositions against their depolarized targets.
inline std::vector<VerifyRow> cmd_verify(int threads = 1) {
  struct Item {
    std::string what;
    std::function<std::pair<SimulationModel, std::pair<Povm, double>>()> build;
  };
  std::vector<Item> items;
  items.push_back({"hesse 72-measurement model", [] {
                     HesseDecomposition dec = hesse_simulation_model();
                     return std::make_pair(dec.model, std::make_pair(hesse_sic(), dec.visibility));
                   }});
  for (int d = 3; d <= 6; ++d)
    items.push_back({"fsic2 d=" + std::to_string(d), [d] {
                       return std::make_pair(fsic2_model(d), std::make_pair(fsic2_povm(d), fsic2_params(d).v));
                     }});
  for (int d = 4; d <= 5; ++d)
    items.push_back({"fsic3 d=" + std::to_string(d), [d] {
                       return std::make_pair(fsic3_model(d), std::make_pair(fsic3_povm(d), fsic3_params(d).v));
                     }});
  return parallel_map<VerifyRow>(static_cast<int>(items.size()), threads, [&](int i) {
    VerifyRow row;
    row.what = items[static_cast<size_t>(i)].what;
    try {
      auto [model, target_v] = items[static_cast<size_t>(i)].build();
      auto rep = verify_decomposition(model, depolarize(target_v.first, target_v.second));
      row.residual = rep.max_deviation;
      row.projectivity = rep.max_projectivity_residual;
      row.v = target_v.second;
      row.ok = rep.max_deviation <= 1e-9 && rep.max_projectivity_residual <= 1e-9;
    } catch (const std::exception&) {
      row.ok = false;
      row.residual = -1.0;
    }
    return row;
  });
}

inline void write_verify(const std::vector<VerifyRow>& rows, std::ostream& os) {
  for (const auto& r : rows)
    os << (r.ok ? "ok   " : "FAIL ") << std::left << std::setw(30) << r.what << " v=" << std::setprecision(10)
       << r.v << "  residual=" << std::scientific << std::setprecision(2) << r.residual
       << "  projectivity=" << r.projectivity << std::defaultfloat << "\n";
}

}  // namespace povmsim
