#pragma once

// The two illustration systems and custom models from JSON.
//
// Qubit convention: basis index 0 is the excited state |1>, index 1 the
// ground state |0>, sigma_z = diag(+1, -1), so sigma_z |0> = -|0>. Site 0 is
// the leftmost tensor factor and the measured qubit.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfpt/sme.hpp"
#include "qfpt/subspace.hpp"

namespace qfpt {

namespace detail {

inline ComplexMatrix flip_flop(std::size_t i, std::size_t j, std::size_t n) {
  using namespace pauli;
  return site_operator(sigma_plus(), i, n) * site_operator(sigma_minus(), j, n) +
         site_operator(sigma_minus(), i, n) * site_operator(sigma_plus(), j, n);
}

inline ComplexMatrix total_sigma_z(std::size_t n) {
  const auto d = static_cast<Eigen::Index>(std::size_t{1} << n);
  ComplexMatrix h = ComplexMatrix::Zero(d, d);
  for (std::size_t i = 0; i < n; ++i) h += site_operator(pauli::sigma_z(), i, n);
  return h;
}

inline void check_x0(double x0, const char* what) {
  if (!(x0 >= 0.0 && x0 <= 1.0)) throw DomainError(std::string(what) + ": x0 must lie in [0, 1]");
}

}  // namespace detail

/// H = h0 (sz_1 + sz_2) + h1 (s+_1 s-_2 + s-_1 s+_2),  L = sz_1.
inline QuantumModel build_qnd2(double h0, double h1, double zeta = 1.0) {
  if (!std::isfinite(h0) || !std::isfinite(h1)) throw ModelError("qnd2: couplings must be finite");
  QuantumModel m;
  m.H = h0 * detail::total_sigma_z(2) + h1 * detail::flip_flop(0, 1, 2);
  m.Ls = {site_operator(pauli::sigma_z(), 0, 2)};
  m.zetas = {zeta};
  m.validate();
  return m;
}

/// sqrt(x0) |00> + sqrt(1 - x0) |11>
inline StateVector qnd2_initial(double x0) {
  detail::check_x0(x0, "qnd2_initial");
  const ComplexVector v = std::sqrt(x0) * product_state({false, false}).amplitudes() +
                          std::sqrt(1.0 - x0) * product_state({true, true}).amplitudes();
  return StateVector(v);
}

/// Periodic ring of five qubits, bonds (i, i+1 mod 5), L = sz on site 0.
inline QuantumModel build_ring5(double h0, double h1, double zeta = 1.0) {
  if (!std::isfinite(h0) || !std::isfinite(h1)) throw ModelError("ring5: couplings must be finite");
  constexpr std::size_t n = 5;
  QuantumModel m;
  m.H = h0 * detail::total_sigma_z(n);
  for (std::size_t i = 0; i < n; ++i) m.H += h1 * detail::flip_flop(i, (i + 1) % n, n);
  m.Ls = {site_operator(pauli::sigma_z(), 0, n)};
  m.zetas = {zeta};
  m.validate();
  return m;
}

namespace detail {

/// sqrt(2/5) sum_n sin(2 pi k n / 5) |n>, where |n> has site n flipped
/// against a uniform background (excited on ground if `excitation`).
inline ComplexVector ring_wave(int k, bool excitation) {
  constexpr std::size_t n = 5;
  ComplexVector v = ComplexVector::Zero(32);
  for (std::size_t site = 0; site < n; ++site) {
    std::vector<bool> excited(n, !excitation);
    excited[site] = excitation;
    v += std::sqrt(0.4) * std::sin(2.0 * std::numbers::pi * k * static_cast<double>(site) / 5.0) *
         product_state(excited).amplitudes();
  }
  return v;
}

}  // namespace detail

/// Three-state bases of the two ring subspaces: single-excitation waves plus
/// the all-ground state (c = -1), single-hole waves plus all-excited (c = +1).
inline std::vector<StateVector> ring5_q1_basis() {
  return {StateVector(detail::ring_wave(1, true)), StateVector(detail::ring_wave(2, true)),
          product_state(std::vector<bool>(5, false))};
}

inline std::vector<StateVector> ring5_q2_basis() {
  return {StateVector(detail::ring_wave(1, false)), StateVector(detail::ring_wave(2, false)),
          product_state(std::vector<bool>(5, true))};
}

/// [sqrt(x0) (|q11> + |q12>) + sqrt(1 - x0) (|q21> + |q22>)] / sqrt(2)
inline StateVector ring5_initial(double x0) {
  detail::check_x0(x0, "ring5_initial");
  const auto q1 = ring5_q1_basis();
  const auto q2 = ring5_q2_basis();
  const ComplexVector v = (std::sqrt(x0) * (q1[0].amplitudes() + q1[1].amplitudes()) +
                           std::sqrt(1.0 - x0) * (q2[0].amplitudes() + q2[1].amplitudes())) /
                          std::sqrt(2.0);
  return StateVector(v);
}

/// <sz_i> for every site, named sz1..szN (1-based like the figures).
inline std::vector<Observable> magnetizations(std::size_t n_sites) {
  std::vector<Observable> out;
  for (std::size_t i = 0; i < n_sites; ++i) {
    out.push_back({"sz" + std::to_string(i + 1), site_operator(pauli::sigma_z(), i, n_sites)});
  }
  return out;
}

enum class ModelKind { Qnd2, Ring5, Custom };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Qnd2: return "qnd2";
    case ModelKind::Ring5: return "ring5";
    case ModelKind::Custom: return "custom";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "qnd2") return ModelKind::Qnd2;
  if (s == "ring5") return ModelKind::Ring5;
  if (s == "custom") return ModelKind::Custom;
  throw ModelError("unknown model kind '" + s + "' (expected qnd2, ring5 or custom)");
}

struct CustomPayload {
  ComplexMatrix H;
  std::vector<ComplexMatrix> Ls;
  std::vector<double> zetas;
  std::optional<ComplexVector> psi0;
  std::vector<std::size_t> select1{0}, select2{1};
};

struct ModelSpec {
  ModelKind kind = ModelKind::Qnd2;
  double h0 = 1.0;
  double h1 = 1.0;
  double x0 = 0.1;
  std::vector<double> zetas;  // empty: 1 for every channel (custom: from payload)
  std::optional<CustomPayload> custom;

  void validate() const {
    if (!std::isfinite(h0) || !std::isfinite(h1)) throw ModelError("model: h0 and h1 must be finite");
    if (!(x0 > 0.0 && x0 < 1.0)) throw ModelError("model: x0 must lie in (0, 1)");
    if (kind == ModelKind::Custom && !custom) throw ModelError("model: kind custom needs a payload");
  }
};

/// Model, bipartition and initial state ready for simulation.
struct PreparedModel {
  QuantumModel model;
  std::vector<DfsBlock> blocks;
  SubspacePartition partition;
  StateVector psi0;
  std::vector<Observable> observables;
};

inline PreparedModel prepare(const ModelSpec& spec) {
  spec.validate();
  QuantumModel model;
  std::vector<std::size_t> s1{0}, s2{1};
  std::vector<Observable> observables;
  std::optional<StateVector> psi0;
  switch (spec.kind) {
    case ModelKind::Qnd2:
      model = build_qnd2(spec.h0, spec.h1);
      psi0 = qnd2_initial(spec.x0);
      observables = magnetizations(2);
      break;
    case ModelKind::Ring5:
      model = build_ring5(spec.h0, spec.h1);
      psi0 = ring5_initial(spec.x0);
      observables = magnetizations(5);
      break;
    case ModelKind::Custom: {
      const CustomPayload& c = *spec.custom;
      model.H = c.H;
      model.Ls = c.Ls;
      model.zetas = c.zetas.empty() ? std::vector<double>(c.Ls.size(), 1.0) : c.zetas;
      s1 = c.select1;
      s2 = c.select2;
      if (c.psi0) psi0 = StateVector(*c.psi0);
      break;
    }
  }
  if (!spec.zetas.empty()) {
    if (spec.zetas.size() == 1) {
      model.zetas.assign(model.Ls.size(), spec.zetas.front());
    } else if (spec.zetas.size() == model.Ls.size()) {
      model.zetas = spec.zetas;
    } else {
      throw ModelError("model: " + std::to_string(spec.zetas.size()) + " efficiencies for " +
                       std::to_string(model.Ls.size()) + " channels");
    }
  }
  model.validate();
  DfsSearchResult found = find_dfs(model);
  if (found.blocks.size() < 2) {
    throw ModelError("model: found " + std::to_string(found.blocks.size()) +
                     " decoherence-free subspace(s); a bipartition needs at least 2");
  }
  SubspacePartition partition = build_partition(model, found.blocks, s1, s2);
  if (!psi0) {
    const ComplexVector v = std::sqrt(spec.x0) * partition.q1_basis.col(0) +
                            std::sqrt(1.0 - spec.x0) * partition.q2_basis.col(0);
    psi0 = StateVector(v);
  }
  if (psi0->dim() != model.dim()) throw ModelError("model: psi0 dimension does not match H");
  return {std::move(model), std::move(found.blocks), std::move(partition), *psi0, std::move(observables)};
}

// JSON form:
//   {"kind": "qnd2"|"ring5"|"custom", "h0": 1, "h1": 1, "x0": 0.1, "zeta": [1.0],
//    "H": [[[re,im],...],...], "Ls": [...], "zetas": [...], "psi0": [[re,im],...],
//    "select": [[0],[1]]}

inline nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  j["h0"] = spec.h0;
  j["h1"] = spec.h1;
  j["x0"] = spec.x0;
  if (!spec.zetas.empty()) j["zeta"] = spec.zetas;
  if (spec.custom) {
    const CustomPayload& c = *spec.custom;
    j["H"] = matrix_to_json(c.H);
    j["Ls"] = nlohmann::json::array();
    for (const auto& l : c.Ls) j["Ls"].push_back(matrix_to_json(l));
    j["zetas"] = c.zetas;
    if (c.psi0) j["psi0"] = vector_to_json(*c.psi0);
    j["select"] = {c.select1, c.select2};
  }
  return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ModelError("model config must be an object");
  ModelSpec spec;
  try {
    spec.kind = model_kind_from_string(j.value("kind", std::string("qnd2")));
    spec.h0 = j.value("h0", 1.0);
    spec.h1 = j.value("h1", 1.0);
    spec.x0 = j.value("x0", 0.1);
    if (j.contains("zeta")) {
      spec.zetas = j["zeta"].is_array() ? j["zeta"].get<std::vector<double>>()
                                        : std::vector<double>{j["zeta"].get<double>()};
    }
    if (spec.kind == ModelKind::Custom) {
      CustomPayload c;
      if (!j.contains("H") || !j.contains("Ls")) throw ModelError("custom model needs H and Ls");
      c.H = matrix_from_json(j["H"]);
      for (const auto& l : j["Ls"]) c.Ls.push_back(matrix_from_json(l));
      if (j.contains("zetas")) c.zetas = j["zetas"].get<std::vector<double>>();
      if (j.contains("psi0")) c.psi0 = vector_from_json(j["psi0"]);
      if (j.contains("select")) {
        const auto& s = j["select"];
        if (!s.is_array() || s.size() != 2) throw ModelError("select must be [[...], [...]]");
        c.select1 = s[0].get<std::vector<std::size_t>>();
        c.select2 = s[1].get<std::vector<std::size_t>>();
      }
      spec.custom = std::move(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("model config: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace qfpt
