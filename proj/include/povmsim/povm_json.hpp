#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "povmsim/povm.hpp"

namespace povmsim {

// POVM wire format:
//   { "dim": d,
//     "effects": [ [ [ {"re":x, "im":y}, ... d entries ], ... d rows ], ... n effects ],
//     "label": "..." }
// Parsers reject effects that are non-Hermitian beyond the json_hermitian tolerance.

inline nlohmann::json to_json(const Povm& p) {
  nlohmann::json j;
  j["dim"] = p.dim;
  nlohmann::json effs = nlohmann::json::array();
  for (const Mat& e : p.effects) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < p.dim; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < p.dim; ++k) row.push_back({{"re", e(i, k).real()}, {"im", e(i, k).imag()}});
      rows.push_back(row);
    }
    effs.push_back(rows);
  }
  j["effects"] = effs;
  j["label"] = p.label;
  return j;
}

inline Povm povm_from_json(const nlohmann::json& j) {
  Povm p;
  p.dim = j.at("dim").get<int>();
  if (p.dim <= 0) throw std::invalid_argument("povm_from_json: dim must be positive");
  p.label = j.value("label", std::string{});
  const auto& effs = j.at("effects");
  for (const auto& rows : effs) {
    if (static_cast<int>(rows.size()) != p.dim) throw std::invalid_argument("povm_from_json: effect row count != dim");
    Mat e(p.dim, p.dim);
    for (int i = 0; i < p.dim; ++i) {
      const auto& row = rows.at(static_cast<size_t>(i));
      if (static_cast<int>(row.size()) != p.dim)
        throw std::invalid_argument("povm_from_json: effect column count != dim");
      for (int k = 0; k < p.dim; ++k) {
        const auto& c = row.at(static_cast<size_t>(k));
        e(i, k) = cxd(c.at("re").get<double>(), c.at("im").get<double>());
      }
    }
    if (hermitian_deviation(e) > tols().json_hermitian)
      throw std::invalid_argument("povm_from_json: non-Hermitian effect (deviation " +
                                  std::to_string(hermitian_deviation(e)) + ")");
    p.effects.push_back((e + e.adjoint()) / 2.0);
  }
  return p;
}

inline void save_povm(const Povm& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_povm: cannot open " + path);
  out << to_json(p).dump(2) << "\n";
}

inline Povm load_povm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_povm: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return povm_from_json(j);
}

// Fiducial file format (user-supplied SIC fiducials for d >= 5):
//   { "dim": d, "amplitudes": [ {"re":x, "im":y}, ... d entries ] }
inline Vec load_fiducial(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_fiducial: cannot open " + path);
  nlohmann::json j;
  in >> j;
  int d = j.at("dim").get<int>();
  const auto& amps = j.at("amplitudes");
  if (static_cast<int>(amps.size()) != d) throw std::invalid_argument("load_fiducial: amplitude count != dim");
  Vec v(d);
  for (int i = 0; i < d; ++i)
    v(i) = cxd(amps.at(static_cast<size_t>(i)).at("re").get<double>(),
               amps.at(static_cast<size_t>(i)).at("im").get<double>());
  return normalized_state(v);
}

}  // namespace povmsim
