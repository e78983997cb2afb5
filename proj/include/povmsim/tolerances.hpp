#pragma once

namespace povmsim {

// Central numeric tolerances. Every validation, dedup and certification
// threshold in the library routes through one instance of this record.
struct Tolerances {
  double hermitian = 1e-12;      // max |A - A^dag| for Hermitian-tagged operators
  double json_hermitian = 1e-9;  // parser rejection threshold
  double unitary = 1e-10;        // max |U^dag U - I|
  double phase_dedup = 1e-9;     // group elements equal up to global phase
  double group_closure = 1e-9;
  double psd = 1e-9;             // effect min eigenvalue >= -psd
  double completeness = 1e-9;    // |sum_a E_a - I| elementwise
  double projective = 1e-9;      // |P^2 - P|, |P_a P_b| elementwise
  double weights = 1e-9;         // |sum_lambda q_lambda - 1|
  double postproc_rows = 1e-12;  // post-processing row sums
  double sic_overlap = 1e-8;     // | |<psi_a|psi_b>|^2 - 1/(d+1) | on construction
  double state_norm = 1e-12;
  double phase_solve = 1e-10;    // analytic-model phase conditions
  double feas = 1e-8;            // conic solver feasibility
  double gap = 1e-8;             // conic solver duality gap
  double block_weight = 1e-7;    // q threshold below which a block is ignored
  double extract_proj = 1e-6;    // projectivity residual for model extraction
  double inactive_trace = 1e-6;  // tr(E_a) below this marks an inactive outcome
};

inline const Tolerances& tols() {
  static const Tolerances t{};
  return t;
}

}  // namespace povmsim
