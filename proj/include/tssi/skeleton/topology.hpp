#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tssi {

/// 1-based joint index into a topology's joint list.
using JointId = std::uint32_t;

/// Rooted joint tree. Child lists are ordered; that order fixes the
/// traversal and therefore the skeleton-image column layout.
struct SkeletonTopology {
  std::string name;
  std::size_t joint_count = 0;
  std::vector<std::string> joint_names;
  JointId root = 1;
  std::map<JointId, std::vector<JointId>> children;
  /// Optional rest position per joint (index id-1), used by the synthetic
  /// generator.
  std::vector<std::array<double, 3>> rest_pose;

  const std::vector<JointId>& children_of(JointId id) const {
    static const std::vector<JointId> none;
    auto it = children.find(id);
    return it == children.end() ? none : it->second;
  }

  /// Undirected (parent, child) pairs in declaration order.
  std::vector<std::pair<JointId, JointId>> edges() const {
    std::vector<std::pair<JointId, JointId>> out;
    for (const auto& [parent, kids] : children) {
      for (JointId c : kids) out.emplace_back(parent, c);
    }
    return out;
  }

  bool has_edge(JointId a, JointId b) const {
    const auto& ka = children_of(a);
    const auto& kb = children_of(b);
    return std::find(ka.begin(), ka.end(), b) != ka.end() || std::find(kb.begin(), kb.end(), a) != kb.end();
  }

  /// Parent of every joint (0 for the root); valid only for valid trees.
  std::vector<JointId> parents() const {
    std::vector<JointId> out(joint_count + 1, 0);
    for (const auto& [parent, kids] : children) {
      for (JointId c : kids) {
        if (c >= 1 && c <= joint_count) out[c] = parent;
      }
    }
    return out;
  }
};

enum class ViolationKind { bad_root, unknown_joint, duplicate_child, multiple_parents, cycle, disconnected, edge_count };

inline std::string to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::bad_root: return "bad_root";
    case ViolationKind::unknown_joint: return "unknown_joint";
    case ViolationKind::duplicate_child: return "duplicate_child";
    case ViolationKind::multiple_parents: return "multiple_parents";
    case ViolationKind::cycle: return "cycle";
    case ViolationKind::disconnected: return "disconnected";
    case ViolationKind::edge_count: return "edge_count";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind k) const {
    return std::any_of(violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; });
  }
  std::string summary() const {
    std::ostringstream os;
    for (const auto& v : violations) os << to_string(v.kind) << ": " << v.detail << '\n';
    return os.str();
  }
};

class TopologyError : public std::invalid_argument {
 public:
  TopologyError(const std::string& what, ValidationReport report)
      : std::invalid_argument(what + "\n" + report.summary()), report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

inline ValidationReport validate_topology(const SkeletonTopology& t) {
  ValidationReport report;
  auto add = [&](ViolationKind k, std::string msg) { report.violations.push_back({k, std::move(msg)}); };
  const std::size_t n = t.joint_count;

  if (n == 0) {
    add(ViolationKind::bad_root, "topology has no joints");
    return report;
  }
  if (t.root < 1 || t.root > n) add(ViolationKind::bad_root, "root " + std::to_string(t.root) + " out of range");
  if (!t.joint_names.empty() && t.joint_names.size() != n) {
    add(ViolationKind::unknown_joint, "joint_names has " + std::to_string(t.joint_names.size()) + " entries");
  }

  std::vector<int> parent_count(n + 1, 0);
  std::size_t edge_total = 0;
  for (const auto& [parent, kids] : t.children) {
    if (parent < 1 || parent > n) add(ViolationKind::unknown_joint, "parent " + std::to_string(parent));
    std::set<JointId> seen;
    for (JointId c : kids) {
      ++edge_total;
      if (c < 1 || c > n) {
        add(ViolationKind::unknown_joint, "child " + std::to_string(c) + " of " + std::to_string(parent));
        continue;
      }
      if (!seen.insert(c).second) {
        add(ViolationKind::duplicate_child, "joint " + std::to_string(c) + " listed twice under " + std::to_string(parent));
        continue;
      }
      ++parent_count[c];
    }
  }
  for (JointId j = 1; j <= n; ++j) {
    if (parent_count[j] > 1) add(ViolationKind::multiple_parents, "joint " + std::to_string(j));
  }
  if (t.root >= 1 && t.root <= n && parent_count[t.root] > 0) {
    add(ViolationKind::bad_root, "root " + std::to_string(t.root) + " has a parent");
  }

  // Directed cycle search over the child relation.
  std::vector<int> colour(n + 1, 0);
  bool cyclic = false;
  for (JointId start = 1; start <= n && !cyclic; ++start) {
    if (colour[start] != 0) continue;
    std::vector<std::pair<JointId, std::size_t>> stack{{start, 0}};
    colour[start] = 1;
    while (!stack.empty() && !cyclic) {
      auto& [node, next] = stack.back();
      const auto& kids = t.children_of(node);
      if (next < kids.size()) {
        const JointId c = kids[next++];
        if (c < 1 || c > n) continue;
        if (colour[c] == 1) {
          cyclic = true;
        } else if (colour[c] == 0) {
          colour[c] = 1;
          stack.emplace_back(c, 0);
        }
      } else {
        colour[node] = 2;
        stack.pop_back();
      }
    }
  }
  if (cyclic) add(ViolationKind::cycle, "child relation contains a cycle");

  if (edge_total != n - 1) {
    add(ViolationKind::edge_count, std::to_string(edge_total) + " edges for " + std::to_string(n) + " joints");
  }

  if (t.root >= 1 && t.root <= n) {
    std::vector<bool> reached(n + 1, false);
    std::vector<JointId> frontier{t.root};
    reached[t.root] = true;
    while (!frontier.empty()) {
      const JointId j = frontier.back();
      frontier.pop_back();
      for (JointId c : t.children_of(j)) {
        if (c >= 1 && c <= n && !reached[c]) {
          reached[c] = true;
          frontier.push_back(c);
        }
      }
    }
    std::vector<JointId> missing;
    for (JointId j = 1; j <= n; ++j) {
      if (!reached[j]) missing.push_back(j);
    }
    if (!missing.empty()) {
      std::string list;
      for (JointId j : missing) list += (list.empty() ? "" : ",") + std::to_string(j);
      add(ViolationKind::disconnected, "unreachable from root: " + list);
    }
  }
  return report;
}

enum class OrderKind { chain, euler_tour };

inline std::string to_string(OrderKind k) { return k == OrderKind::chain ? "chain" : "euler_tour"; }

struct JointOrder {
  std::vector<JointId> order;
  OrderKind kind = OrderKind::chain;

  std::size_t size() const { return order.size(); }
};

/// Depth-first walk that emits a joint on arrival and again after each of
/// its children returns: length 2(N-1)+1, starting and ending at the root.
inline JointOrder euler_tour(const SkeletonTopology& t) {
  if (auto report = validate_topology(t); !report.ok()) {
    throw TopologyError("euler_tour: invalid topology '" + t.name + "'", std::move(report));
  }
  JointOrder out{{}, OrderKind::euler_tour};
  out.order.reserve(2 * (t.joint_count - 1) + 1);
  std::vector<std::pair<JointId, std::size_t>> stack{{t.root, 0}};
  out.order.push_back(t.root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& kids = t.children_of(node);
    if (next < kids.size()) {
      const JointId child = kids[next++];
      out.order.push_back(child);
      stack.emplace_back(child, 0);
    } else {
      stack.pop_back();
      if (!stack.empty()) out.order.push_back(stack.back().first);
    }
  }
  return out;
}

inline JointOrder chain_order(const SkeletonTopology& t, const std::vector<JointId>& perm) {
  if (perm.size() != t.joint_count) {
    throw std::invalid_argument("chain_order: expected " + std::to_string(t.joint_count) + " joints, got " +
                                std::to_string(perm.size()));
  }
  std::vector<bool> seen(t.joint_count + 1, false);
  for (JointId j : perm) {
    if (j < 1 || j > t.joint_count) throw std::invalid_argument("chain_order: unknown joint " + std::to_string(j));
    if (seen[j]) throw std::invalid_argument("chain_order: joint " + std::to_string(j) + " repeated");
    seen[j] = true;
  }
  return {perm, OrderKind::chain};
}

inline JointOrder identity_chain(const SkeletonTopology& t) {
  std::vector<JointId> perm(t.joint_count);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<JointId>(i + 1);
  return chain_order(t, perm);
}

/// Fraction of consecutive pairs that are tree edges (or repeat a joint).
/// Orders with fewer than two entries score 1.
inline double adjacency_fraction(const JointOrder& o, const SkeletonTopology& t) {
  for (JointId j : o.order) {
    if (j < 1 || j > t.joint_count) throw std::invalid_argument("adjacency_fraction: unknown joint " + std::to_string(j));
  }
  if (o.order.size() < 2) return 1.0;
  std::size_t linked = 0;
  for (std::size_t i = 1; i < o.order.size(); ++i) {
    const JointId a = o.order[i - 1], b = o.order[i];
    if (a == b || t.has_edge(a, b)) ++linked;
  }
  return static_cast<double>(linked) / static_cast<double>(o.order.size() - 1);
}

// ---------------------------------------------------------------------------
// Topology files
//
// {
//   "name": "ntu25", "joint_count": 25, "root": 2,
//   "joints": ["base_of_spine", ...],
//   "children": {"2": [21, 1], ...},
//   "rest_pose": [[x, y, z], ...]          (optional)
// }

inline SkeletonTopology topology_from_json(const nlohmann::json& j) {
  SkeletonTopology t;
  t.name = j.value("name", std::string{});
  t.joint_count = j.at("joint_count").get<std::size_t>();
  t.root = j.at("root").get<JointId>();
  if (j.contains("joints")) t.joint_names = j.at("joints").get<std::vector<std::string>>();
  for (const auto& [key, kids] : j.at("children").items()) {
    t.children[static_cast<JointId>(std::stoul(key))] = kids.get<std::vector<JointId>>();
  }
  if (j.contains("rest_pose")) {
    for (const auto& p : j.at("rest_pose")) {
      std::array<double, 3> xyz{0.0, 0.0, 0.0};
      for (std::size_t a = 0; a < std::min<std::size_t>(3, p.size()); ++a) xyz[a] = p[a].get<double>();
      t.rest_pose.push_back(xyz);
    }
    if (t.rest_pose.size() != t.joint_count) {
      throw std::invalid_argument("topology '" + t.name + "': rest_pose has wrong length");
    }
  }
  return t;
}

inline nlohmann::json topology_to_json(const SkeletonTopology& t) {
  nlohmann::json j;
  j["name"] = t.name;
  j["joint_count"] = t.joint_count;
  j["root"] = t.root;
  j["joints"] = t.joint_names;
  nlohmann::json kids = nlohmann::json::object();
  for (const auto& [parent, list] : t.children) kids[std::to_string(parent)] = list;
  j["children"] = kids;
  if (!t.rest_pose.empty()) j["rest_pose"] = t.rest_pose;
  return j;
}

/// Loads and validates a topology file.
inline SkeletonTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("topology file " + path + ": " + e.what());
  }
  SkeletonTopology t = topology_from_json(j);
  if (auto report = validate_topology(t); !report.ok()) {
    throw TopologyError("topology file " + path + " is not a tree", std::move(report));
  }
  return t;
}

}  // namespace tssi
