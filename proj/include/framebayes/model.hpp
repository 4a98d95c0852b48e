#ifndef FRAMEBAYES_MODEL_HPP
#define FRAMEBAYES_MODEL_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "framebayes/errors.hpp"

namespace framebayes {

// Nodal components. Rotations carry no mass and are condensed before modal analysis.
enum class Dof { ux = 0, uy = 1, rz = 2 };

inline Dof dof_from_string(const std::string& s) {
  if (s == "ux") return Dof::ux;
  if (s == "uy") return Dof::uy;
  if (s == "rz") return Dof::rz;
  throw ConfigError("unknown DOF '" + s + "' (expected ux, uy or rz)");
}

enum class StiffnessKind { fixity, log10_scale };

enum class ResultantComponent { axial = 0, moment_i = 1, moment_j = 2 };

inline ResultantComponent resultant_from_string(const std::string& s) {
  if (s == "axial") return ResultantComponent::axial;
  if (s == "moment_i") return ResultantComponent::moment_i;
  if (s == "moment_j") return ResultantComponent::moment_j;
  throw ConfigError("unknown resultant component '" + s + "'");
}

struct Node {
  int id = 0;
  double x = 0.0, y = 0.0;  // m
};

// A member end is either rigid/pinned by a fixed factor or driven by a stiffness parameter.
struct EndFixity {
  double value = 1.0;
  int param = -1;  // index into FrameModel::stiffness_params, -1 = fixed value
};

struct Element {
  int id = 0;
  int node_i = 0, node_j = 0;  // node ids
  double E = 0.0;              // N/m^2
  double A = 0.0;              // m^2
  double I = 0.0;              // m^4
  double density = 0.0;        // kg/m^3
  EndFixity fix_i, fix_j;
  int scale_param = -1;  // optional log10 EI multiplier, -1 = none

  // resolved by finalize()
  int idx_i = -1, idx_j = -1;
  double length = 0.0, cx = 0.0, cy = 0.0;
};

struct Support {
  int node = 0;
  std::array<bool, 3> fixed = {false, false, false};
};

struct ExtraMass {
  int node = 0;
  std::array<bool, 2> dofs = {true, true};  // ux, uy
  int param = -1;                           // index into mass_params
  double fraction = 1.0;                    // share of the parameter value placed here
};

struct StiffnessParam {
  std::string name;
  StiffnessKind kind = StiffnessKind::fixity;
};

struct MasterDof {
  int node = 0;
  Dof dof = Dof::ux;
  std::string channel;  // measurement channel name, e.g. "a_3x"
};

struct ObservedResultant {
  int element = 0;  // element id
  ResultantComponent component = ResultantComponent::moment_i;
  std::string channel;  // e.g. "r_1i"
};

struct ParameterSet {
  Eigen::VectorXd theta_K;
  Eigen::VectorXd theta_M;
};

/// Planar frame: geometry, sections, supports, lumped masses and the
/// parameter map that ties uncertain fixities / EI scales / masses to elements.
struct FrameModel {
  std::vector<Node> nodes;
  std::vector<Element> elements;
  std::vector<Support> supports;
  std::vector<ExtraMass> extra_masses;
  std::vector<StiffnessParam> stiffness_params;
  std::vector<std::string> mass_params;
  std::vector<MasterDof> master_dofs;
  std::vector<ObservedResultant> observed;
  std::vector<std::string> input_channels_hint;  // e.g. ground channels a_1x, a_1y

  // --- derived, filled by finalize() ---
  int n_free = 0, n_master = 0, n_slave = 0;
  // free-DOF numbering: masters first (in master_dofs order), then slaves
  std::map<std::pair<int, int>, int> dof_index;  // (node id, dof) -> free index, absent if fixed
  std::vector<int> observed_rows;                // index into the 3*n_ele basic resultant vector

  int n_elements() const { return static_cast<int>(elements.size()); }
  int n_basic() const { return 3 * n_elements(); }
  int n_theta_k() const { return static_cast<int>(stiffness_params.size()); }
  int n_theta_m() const { return static_cast<int>(mass_params.size()); }

  const Node& node_by_id(int id) const {
    for (const auto& n : nodes)
      if (n.id == id) return n;
    throw ConfigError("unknown node id " + std::to_string(id));
  }

  int element_pos(int id) const {
    for (std::size_t i = 0; i < elements.size(); ++i)
      if (elements[i].id == id) return static_cast<int>(i);
    throw ConfigError("unknown element id " + std::to_string(id));
  }

  int free_index(int node, Dof d) const {
    auto it = dof_index.find({node, static_cast<int>(d)});
    return it == dof_index.end() ? -1 : it->second;
  }

  bool is_supported(int node, Dof d) const {
    for (const auto& s : supports)
      if (s.node == node && s.fixed[static_cast<int>(d)]) return true;
    return false;
  }

  std::vector<std::string> master_channels() const {
    std::vector<std::string> out;
    for (const auto& m : master_dofs) out.push_back(m.channel);
    return out;
  }

  std::vector<std::string> resultant_channels() const {
    std::vector<std::string> out;
    for (const auto& o : observed) out.push_back(o.channel);
    return out;
  }

  void validate_parameters(const ParameterSet& theta) const {
    if (theta.theta_K.size() != n_theta_k() || theta.theta_M.size() != n_theta_m())
      throw ParameterError("parameter vector lengths do not match the model's parameter map");
    for (int i = 0; i < n_theta_k(); ++i) {
      if (stiffness_params[i].kind == StiffnessKind::fixity &&
          (theta.theta_K[i] < 0.0 || theta.theta_K[i] > 1.0))
        throw ParameterError("fixity parameter '" + stiffness_params[i].name +
                             "' outside [0,1]: " + std::to_string(theta.theta_K[i]));
    }
    for (int i = 0; i < n_theta_m(); ++i)
      if (!(theta.theta_M[i] >= 0.0))
        throw ParameterError("mass parameter '" + mass_params[i] + "' must be >= 0");
  }

  double end_fixity(const EndFixity& f, const Eigen::VectorXd& theta_K) const {
    double g = f.param >= 0 ? theta_K[f.param] : f.value;
    if (!(g >= 0.0 && g <= 1.0))
      throw ParameterError("fixity factor outside [0,1]: " + std::to_string(g));
    return g;
  }

  double stiffness_scale(const Element& e, const Eigen::VectorXd& theta_K) const {
    return e.scale_param >= 0 ? std::pow(10.0, theta_K[e.scale_param]) : 1.0;
  }

  void finalize();
};

inline void FrameModel::finalize() {
  if (nodes.empty()) throw ConfigError("model has no nodes");
  if (elements.empty()) throw ConfigError("model has no elements");

  for (auto& e : elements) {
    if (e.node_i == e.node_j)
      throw GeometryError("element " + std::to_string(e.id) + " references one node twice");
    const Node* a = nullptr;
    const Node* b = nullptr;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].id == e.node_i) {
        a = &nodes[i];
        e.idx_i = static_cast<int>(i);
      }
      if (nodes[i].id == e.node_j) {
        b = &nodes[i];
        e.idx_j = static_cast<int>(i);
      }
    }
    if (!a || !b)
      throw ConfigError("element " + std::to_string(e.id) + " references an unknown node");
    const double dx = b->x - a->x, dy = b->y - a->y;
    e.length = std::hypot(dx, dy);
    if (!(e.length > 0.0))
      throw GeometryError("element " + std::to_string(e.id) + " has zero length");
    e.cx = dx / e.length;
    e.cy = dy / e.length;
    if (!(e.E > 0.0 && e.A > 0.0 && e.I > 0.0))
      throw GeometryError("element " + std::to_string(e.id) + " needs positive E, A, I");
    if (e.density < 0.0)
      throw GeometryError("element " + std::to_string(e.id) + " has negative density");
    auto check_param = [&](int p, bool want_fixity, const char* slot) {
      if (p < 0) return;
      if (p >= n_theta_k())
        throw ConfigError("element " + std::to_string(e.id) + ": bad parameter index");
      const bool is_fix = stiffness_params[p].kind == StiffnessKind::fixity;
      if (is_fix != want_fixity)
        throw ConfigError("element " + std::to_string(e.id) + " " + slot +
                          ": parameter kind mismatch");
    };
    check_param(e.fix_i.param, true, "fixity_i");
    check_param(e.fix_j.param, true, "fixity_j");
    check_param(e.scale_param, false, "stiffness_scale");
    if (e.fix_i.param < 0 && (e.fix_i.value < 0.0 || e.fix_i.value > 1.0))
      throw ConfigError("element " + std::to_string(e.id) + ": fixed fixity outside [0,1]");
    if (e.fix_j.param < 0 && (e.fix_j.value < 0.0 || e.fix_j.value > 1.0))
      throw ConfigError("element " + std::to_string(e.id) + ": fixed fixity outside [0,1]");
  }

  for (const auto& s : supports) node_by_id(s.node);
  for (const auto& m : extra_masses) {
    node_by_id(m.node);
    if (m.param < 0 || m.param >= n_theta_m())
      throw ConfigError("extra mass at node " + std::to_string(m.node) +
                        ": bad mass parameter index");
  }

  // masters first, then remaining free DOFs as slaves
  dof_index.clear();
  int next = 0;
  for (const auto& m : master_dofs) {
    node_by_id(m.node);
    if (is_supported(m.node, m.dof))
      throw ConfigError("master DOF " + m.channel + " is constrained by a support");
    auto key = std::make_pair(m.node, static_cast<int>(m.dof));
    if (dof_index.count(key)) throw ConfigError("duplicate master DOF " + m.channel);
    dof_index[key] = next++;
  }
  n_master = next;
  for (const auto& n : nodes)
    for (int d = 0; d < 3; ++d) {
      if (is_supported(n.id, static_cast<Dof>(d))) continue;
      auto key = std::make_pair(n.id, d);
      if (!dof_index.count(key)) dof_index[key] = next++;
    }
  n_free = next;
  n_slave = n_free - n_master;
  if (n_master == 0) throw ConfigError("model declares no master DOFs");

  // every DOF that carries mass must be a master (slave DOFs are load-free)
  for (const auto& m : extra_masses)
    for (int d = 0; d < 2; ++d)
      if (m.dofs[d]) {
        int idx = free_index(m.node, static_cast<Dof>(d));
        if (idx < 0)
          throw ConfigError("extra mass on a supported DOF at node " + std::to_string(m.node));
        if (idx >= n_master)
          throw ConfigError("extra mass on non-master DOF at node " + std::to_string(m.node));
      }
  for (const auto& e : elements) {
    if (e.density == 0.0) continue;
    for (int node : {e.node_i, e.node_j})
      for (int d = 0; d < 2; ++d) {
        int idx = free_index(node, static_cast<Dof>(d));
        if (idx >= n_master)
          throw ConfigError("element self-weight would land on non-master translational DOF at "
                            "node " +
                            std::to_string(node) +
                            "; add it to master_dofs or support it");
      }
  }

  observed_rows.clear();
  for (const auto& o : observed) {
    int pos = element_pos(o.element);
    observed_rows.push_back(3 * pos + static_cast<int>(o.component));
  }
}

// ---------------------------------------------------------------------------
// JSON model file
// ---------------------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key,
                                     const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace detail

// Units block: {"length": "m" | "mm"}. With "mm", coordinates are mm, E is
// N/mm^2, A is mm^2 and I is mm^4; everything is converted to SI on load.
// Density is always kg/m^3 and masses are always kg.
inline FrameModel parse_frame_model(const nlohmann::json& j) {
  using detail::require;
  FrameModel m;

  double len = 1.0, stress = 1.0, area = 1.0, inertia = 1.0;
  if (j.contains("units")) {
    const std::string u = require(j.at("units"), "length", "units").get<std::string>();
    if (u == "mm") {
      len = 1e-3;
      stress = 1e6;  // N/mm^2 -> N/m^2
      area = 1e-6;
      inertia = 1e-12;
    } else if (u != "m") {
      throw ConfigError("units.length must be 'm' or 'mm'");
    }
  }

  for (const auto& jn : require(j, "nodes", "model")) {
    Node n;
    n.id = require(jn, "id", "node").get<int>();
    n.x = require(jn, "x", "node").get<double>() * len;
    n.y = require(jn, "y", "node").get<double>() * len;
    m.nodes.push_back(n);
  }

  if (j.contains("parameters")) {
    const auto& jp = j.at("parameters");
    if (jp.contains("stiffness"))
      for (const auto& js : jp.at("stiffness")) {
        StiffnessParam p;
        p.name = require(js, "name", "parameters.stiffness").get<std::string>();
        const std::string kind = js.value("kind", std::string("fixity"));
        if (kind == "fixity")
          p.kind = StiffnessKind::fixity;
        else if (kind == "log10_scale")
          p.kind = StiffnessKind::log10_scale;
        else
          throw ConfigError("parameters.stiffness['" + p.name + "']: unknown kind '" + kind + "'");
        m.stiffness_params.push_back(p);
      }
    if (jp.contains("mass"))
      for (const auto& js : jp.at("mass"))
        m.mass_params.push_back(require(js, "name", "parameters.mass").get<std::string>());
  }

  auto k_param_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < m.stiffness_params.size(); ++i)
      if (m.stiffness_params[i].name == name) return static_cast<int>(i);
    throw ConfigError("unknown stiffness parameter '" + name + "'");
  };
  auto m_param_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < m.mass_params.size(); ++i)
      if (m.mass_params[i] == name) return static_cast<int>(i);
    throw ConfigError("unknown mass parameter '" + name + "'");
  };
  auto parse_end = [&](const nlohmann::json& je, const char* key) {
    EndFixity f;
    if (!je.contains(key)) return f;  // rigid by default
    const auto& jf = je.at(key);
    if (jf.is_number()) {
      f.value = jf.get<double>();
    } else if (jf.is_object() && jf.contains("param")) {
      f.param = k_param_index(jf.at("param").get<std::string>());
    } else if (jf.is_object() && jf.contains("value")) {
      f.value = jf.at("value").get<double>();
    } else {
      throw ConfigError(std::string(key) + ": expected a number or {param: name}");
    }
    return f;
  };

  for (const auto& je : require(j, "elements", "model")) {
    Element e;
    const std::string where = "element";
    e.id = require(je, "id", where).get<int>();
    e.node_i = require(je, "node_i", where).get<int>();
    e.node_j = require(je, "node_j", where).get<int>();
    e.E = require(je, "E", where).get<double>() * stress;
    e.A = require(je, "A", where).get<double>() * area;
    e.I = require(je, "I", where).get<double>() * inertia;
    e.density = je.value("density", 0.0);
    e.fix_i = parse_end(je, "fixity_i");
    e.fix_j = parse_end(je, "fixity_j");
    if (je.contains("stiffness_scale"))
      e.scale_param = k_param_index(je.at("stiffness_scale").at("param").get<std::string>());
    m.elements.push_back(e);
  }

  for (const auto& js : require(j, "supports", "model")) {
    Support s;
    s.node = require(js, "node", "support").get<int>();
    for (const auto& jd : require(js, "fix", "support"))
      s.fixed[static_cast<int>(dof_from_string(jd.get<std::string>()))] = true;
    m.supports.push_back(s);
  }

  if (j.contains("extra_masses"))
    for (const auto& jm : j.at("extra_masses")) {
      ExtraMass em;
      em.node = require(jm, "node", "extra_mass").get<int>();
      em.param = m_param_index(require(jm, "param", "extra_mass").get<std::string>());
      em.fraction = jm.value("fraction", 1.0);
      if (jm.contains("dofs")) {
        em.dofs = {false, false};
        for (const auto& jd : jm.at("dofs")) {
          Dof d = dof_from_string(jd.get<std::string>());
          if (d == Dof::rz) throw ConfigError("extra_mass: rotational inertia is not supported");
          em.dofs[static_cast<int>(d)] = true;
        }
      }
      m.extra_masses.push_back(em);
    }

  for (const auto& jm : require(j, "master_dofs", "model")) {
    MasterDof md;
    md.node = require(jm, "node", "master_dof").get<int>();
    md.dof = dof_from_string(require(jm, "dof", "master_dof").get<std::string>());
    md.channel = require(jm, "channel", "master_dof").get<std::string>();
    m.master_dofs.push_back(md);
  }

  if (j.contains("observed_resultants"))
    for (const auto& jo : j.at("observed_resultants")) {
      ObservedResultant o;
      o.element = require(jo, "element", "observed_resultant").get<int>();
      o.component =
          resultant_from_string(require(jo, "component", "observed_resultant").get<std::string>());
      o.channel = require(jo, "channel", "observed_resultant").get<std::string>();
      m.observed.push_back(o);
    }

  if (j.contains("input_channels"))
    for (const auto& ji : j.at("input_channels"))
      m.input_channels_hint.push_back(ji.get<std::string>());

  m.finalize();
  return m;
}

inline FrameModel load_frame_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model file '" + path + "': " + e.what());
  }
  try {
    return parse_frame_model(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model file '" + path + "': " + e.what());
  }
}

}  // namespace framebayes

#endif
