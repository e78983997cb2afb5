// povmsim: quantify how non-projective a quantum measurement is.
//
// Subcommands: construct, validate, feasibility, visibility, witness,
// certify, search, sweep, tables, verify. Results print as JSON (or CSV for
// sweep/tables with --csv); exit code 0 iff no row or check failed.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "povmsim/constructions.hpp"
#include "povmsim/povm_json.hpp"
#include "povmsim/reports.hpp"
#include "povmsim/search.hpp"
#include "povmsim/simulability.hpp"

using namespace povmsim;
using nlohmann::json;

namespace {

Povm construct_named(const std::string& name) {
  auto split = name.find(':');
  std::string head = name.substr(0, split);
  std::string arg = split == std::string::npos ? "" : name.substr(split + 1);
  if (head == "sic2") return qubit_sic();
  if (head == "hesse") return hesse_sic();
  if (head == "norrell") return norrell_sic();
  if (head == "sic4") return ququart_sic();
  if (head == "sic3") return qutrit_sic(arg.empty() ? 0.0 : std::stod(arg));
  if (head == "fsic2") return fsic2_povm(arg.empty() ? 3 : std::stoi(arg));
  if (head == "fsic3") return fsic3_povm(arg.empty() ? 4 : std::stoi(arg));
  throw std::invalid_argument("unknown POVM name: " + name +
                              " (expected sic2, sic3:<theta>, hesse, norrell, sic4, fsic2:<d>, fsic3:<d>)");
}

Povm load_input(const std::string& in, const std::string& name) {
  if (!name.empty()) return construct_named(name);
  if (in.empty()) throw std::invalid_argument("provide --in <povm.json> or --name <construction>");
  return load_povm(in);
}

NoiseKind parse_noise(const std::string& s) {
  if (s == "depol") return NoiseKind::Depolarizing;
  if (s == "worst") return NoiseKind::WorstCase;
  throw std::invalid_argument("noise must be 'depol' or 'worst'");
}

json result_json(const VisibilityResult& res) {
  json j;
  j["value"] = res.v;
  j["exact"] = res.exact;
  j["noise"] = noise_name(res.noise);
  j["gap"] = res.stats.gap;
  j["iterations"] = res.stats.iterations;
  j["wall_ms"] = res.stats.wall_ms;
  return j;
}

int resolve_threads(int cli_threads) {
  if (const char* env = std::getenv("POVMSIM_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return t;
  }
  if (cli_threads > 0) return cli_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(out);
    f << j.dump(2) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"projective-simulability analysis of quantum measurements (POVMs)"};
  app.require_subcommand(1);
  app.fallthrough(true);  // global flags may follow the subcommand

  double tol = 1e-8;
  int threads = 0;
  bool as_json = false, as_csv = false, long_rows = false;
  std::uint64_t seed = 0;
  app.add_option("--tol", tol, "solver feasibility/gap tolerance")->capture_default_str();
  app.add_option("--threads", threads, "worker threads (0 = hardware; POVMSIM_THREADS overrides)");
  app.add_flag("--json", as_json, "force JSON output");
  app.add_flag("--csv", as_csv, "CSV output for sweep/tables");
  app.add_option("--seed", seed, "random seed");
  app.add_flag("--long", long_rows, "include long-running d=4 rows / criteria");

  std::string in, name, out, noise_str = "depol", dump_path;

  auto* c_construct = app.add_subcommand("construct", "emit a named POVM as JSON");
  std::string cname;
  c_construct->add_option("name", cname, "sic2 | sic3:<theta> | hesse | norrell | sic4 | fsic2:<d> | fsic3:<d>")
      ->required();
  c_construct->add_option("--out", out, "output file (default stdout)");

  auto* c_validate = app.add_subcommand("validate", "check POVM invariants");
  c_validate->add_option("--in", in, "POVM JSON file");
  c_validate->add_option("--name", name, "named construction");

  auto* c_feas = app.add_subcommand("feasibility", "rank-partitioned projective-simulability criterion");
  c_feas->add_option("--in", in, "POVM JSON file");
  c_feas->add_option("--name", name, "named construction");

  auto* c_vis = app.add_subcommand("visibility", "maximal noise visibility with a projective simulation");
  c_vis->add_option("--in", in, "POVM JSON file");
  c_vis->add_option("--name", name, "named construction");
  c_vis->add_option("--noise", noise_str, "depol | worst")->capture_default_str();
  c_vis->add_option("--dump-problem", dump_path, "write the conic program in sparse text form");
  bool try_extract = false;
  c_vis->add_flag("--extract", try_extract, "attempt projective-model extraction (sets exact on success)");

  auto* c_wit = app.add_subcommand("witness", "state-discrimination witness bound for a rank-1 target");
  c_wit->add_option("--in", in, "target POVM JSON file");
  c_wit->add_option("--name", name, "named construction");
  int package_size = 500;
  c_wit->add_option("--package-size", package_size, "rank vectors per SDP package")->capture_default_str();

  auto* c_cert = app.add_subcommand("certify", "dual witness certificate for non-simulability");
  c_cert->add_option("--in", in, "POVM JSON file");
  c_cert->add_option("--name", name, "named construction");
  c_cert->add_option("--noise", noise_str, "depol | worst")->capture_default_str();

  auto* c_search = app.add_subcommand("search", "see-saw search for the most non-projective POVM");
  int dim = 2, outcomes = 4, restarts = 20, max_iter = 50;
  c_search->add_option("--dim", dim, "Hilbert space dimension")->capture_default_str();
  c_search->add_option("--outcomes", outcomes, "number of outcomes")->capture_default_str();
  c_search->add_option("--noise", noise_str, "depol | worst")->capture_default_str();
  c_search->add_option("--restarts", restarts, "random restarts")->capture_default_str();
  c_search->add_option("--max-iter", max_iter, "see-saw iterations per restart")->capture_default_str();
  c_search->add_option("--out", out, "write the best POVM JSON here");

  auto* c_sweep = app.add_subcommand("sweep", "visibility curve over the qutrit SIC family");
  double lo = 0.0, hi = kPi / 9.0;
  int samples = 25;
  c_sweep->add_option("--from", lo, "theta lower end")->capture_default_str();
  c_sweep->add_option("--to", hi, "theta upper end")->capture_default_str();
  c_sweep->add_option("--samples", samples, "sample count")->capture_default_str();
  c_sweep->add_option("--noise", noise_str, "depol | worst")->capture_default_str();
  c_sweep->add_option("--out", out, "output file (default stdout)");

  auto* c_tables = app.add_subcommand("tables", "recompute the published threshold/witness tables");
  std::string fid5, fid6;
  c_tables->add_option("--fiducial-d5", fid5, "JSON amplitudes of a d=5 SIC fiducial");
  c_tables->add_option("--fiducial-d6", fid6, "JSON amplitudes of a d=6 SIC fiducial");

  auto* c_verify = app.add_subcommand("verify", "residuals of the analytic simulation models");

  CLI11_PARSE(app, argc, argv);

  conic::SolveOptions sopt;
  sopt.feas_tol = tol;
  sopt.gap_tol = tol;
  const int nthreads = resolve_threads(threads);
  (void)as_json;

  try {
    if (c_construct->parsed()) {
      Povm p = construct_named(cname);
      emit(to_json(p), out);
      return 0;
    }
    if (c_validate->parsed()) {
      Povm p = load_input(in, name);
      auto rep = validate(p);
      json j;
      j["valid"] = rep.empty();
      j["issues"] = json::array();
      for (const auto& is : rep) j["issues"].push_back({{"what", is.what}, {"magnitude", is.magnitude}});
      emit(j, "");
      return rep.empty() ? 0 : 1;
    }
    if (c_feas->parsed()) {
      Povm p = load_input(in, name);
      auto st = feasibility(p, nullptr, sopt);
      json j;
      j["status"] = st == FeasibilityStatus::SimulableCertified ? "simulable-certified"
                    : st == FeasibilityStatus::NotSimulable     ? "not-simulable"
                                                                : "not-in-criterion";
      emit(j, "");
      return 0;
    }
    if (c_vis->parsed()) {
      Povm p = load_input(in, name);
      std::optional<std::ofstream> dump;
      if (!dump_path.empty()) dump.emplace(dump_path);
      VisibilityResult res =
          visibility(p, parse_noise(noise_str), sopt, nullptr, dump ? &*dump : nullptr);
      if (try_extract) attach_extraction(res, p);
      json j = result_json(res);
      if (try_extract) j["extracted_measurements"] = res.extracted_model ? res.extracted_model->entries.size() : 0;
      emit(j, "");
      return 0;
    }
    if (c_wit->parsed()) {
      Povm p = load_input(in, name);
      WitnessAnsatzResult w = witness_bound(p, package_size, nthreads, sopt);
      json j;
      j["beta"] = w.beta;
      j["v_beta"] = w.v_beta;
      j["packages"] = w.per_package.size();
      emit(j, "");
      return 0;
    }
    if (c_cert->parsed()) {
      Povm p = load_input(in, name);
      WitnessCertificate cert = dual_certificate(p, parse_noise(noise_str), sopt);
      json j;
      j["predicted_threshold"] = cert.predicted_threshold;
      j["gap"] = cert.gap;
      j["noise"] = noise_name(cert.noise);
      json gs = json::array();
      for (const Mat& g : cert.gammas) {
        Povm wrap;
        wrap.dim = static_cast<int>(g.rows());
        wrap.effects = {g};
        gs.push_back(to_json(wrap)["effects"][0]);
      }
      j["gammas"] = gs;
      emit(j, out);
      return 0;
    }
    if (c_search->parsed()) {
      SearchOptions so;
      so.max_iter = max_iter;
      so.restarts = restarts;
      so.seed = seed;
      so.noise = parse_noise(noise_str);
      so.threads = nthreads;
      so.solver = sopt;
      SearchOutcome res = seesaw(random_povm(dim, outcomes, seed), so);
      json j;
      j["traces"] = json::array();
      for (const auto& tr : res.traces) {
        json t;
        t["seed"] = tr.seed;
        t["converged"] = tr.converged;
        t["best_visibility"] = tr.best_result.v;
        t["iterations"] = json::array();
        for (const auto& it : tr.iterations)
          t["iterations"].push_back({{"index", it.index},
                                     {"visibility", it.visibility},
                                     {"gap", it.gap},
                                     {"improvement", it.improvement},
                                     {"accepted", it.accepted}});
        j["traces"].push_back(t);
      }
      j["clusters"] = json::array();
      for (const auto& cl : res.clusters) {
        json c;
        c["visibility"] = res.traces[static_cast<size_t>(cl.front())].best_result.v;
        c["count"] = cl.size();
        j["clusters"].push_back(c);
      }
      if (res.best_index >= 0) {
        const auto& best = res.traces[static_cast<size_t>(res.best_index)];
        j["best"] = {{"visibility", best.best_result.v},
                     {"seed", best.seed},
                     {"active_outcomes", active_outcomes(best.best_povm).size()}};
        if (!out.empty()) save_povm(best.best_povm, out);
      }
      emit(j, "");
      return res.best_index >= 0 ? 0 : 1;
    }
    if (c_sweep->parsed()) {
      SweepSpec spec;
      spec.lo = lo;
      spec.hi = hi;
      spec.samples = samples;
      spec.noise = parse_noise(noise_str);
      auto rows = cmd_sweep(spec, nthreads, sopt);
      std::ofstream file;
      std::ostream* os = &std::cout;
      if (!out.empty()) {
        file.open(out);
        os = &file;
      }
      write_sweep_csv(rows, *os);
      for (const auto& r : rows)
        if (r.failed) return 1;
      return 0;
    }
    if (c_tables->parsed()) {
      TablesOptions topt;
      topt.long_rows = long_rows;
      topt.threads = nthreads;
      topt.fiducial_d5 = fid5;
      topt.fiducial_d6 = fid6;
      topt.solver = sopt;
      auto rows = cmd_tables(topt);
      write_tables(rows, std::cout, as_csv);
      for (const auto& r : rows)
        if (r.failed) return 1;
      return 0;
    }
    if (c_verify->parsed()) {
      auto rows = cmd_verify(nthreads);
      write_verify(rows, std::cout);
      for (const auto& r : rows)
        if (!r.ok) return 1;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
