#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace govq {

enum class NodeKind { office, department, team, call_center, agent_group };

std::string_view node_kind_name(NodeKind k);
std::optional<NodeKind> parse_node_kind(std::string_view text);

struct OrgNode {
  std::string id;
  std::string tenant_id;
  std::string name;
  NodeKind kind = NodeKind::team;
  std::optional<std::string> parent_id;
  std::vector<std::string> aliases;

  friend bool operator==(const OrgNode&, const OrgNode&) = default;
};

nlohmann::json to_json(const OrgNode& n);
OrgNode org_node_from_json(const nlohmann::json& j);

/// Immutable index over one tenant's org forest. Construction rejects
/// duplicate ids, dangling parents, cycles and mixed tenants (IntegrityError).
class OrgIndex {
 public:
  OrgIndex() = default;
  explicit OrgIndex(std::vector<OrgNode> nodes);

  const OrgNode* find(std::string_view id) const;
  const std::vector<OrgNode>& nodes() const { return nodes_; }
  const std::vector<std::string>& children(std::string_view id) const;
  /// The node and everything below it.
  std::set<std::string> subtree(std::string_view id) const;
  /// Leaf nodes in the subtree (the node itself when it is a leaf).
  std::set<std::string> leaves_under(std::string_view id) const;
  bool is_leaf(std::string_view id) const { return children(id).empty(); }
  std::vector<std::string> roots() const;
  const std::string& tenant_id() const { return tenant_id_; }

  nlohmann::json to_json() const;
  static OrgIndex from_json(const nlohmann::json& j);

 private:
  std::vector<OrgNode> nodes_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::map<std::string, std::vector<std::string>, std::less<>> children_;
  std::string tenant_id_;
};

struct Principal {
  std::string user_id;
  std::string tenant_id;
  /// Closed under descendants.
  std::set<std::string> permitted_target_ids;
  std::set<std::string> capabilities;

  bool unmasked() const { return capabilities.count("unmasked") > 0; }
  bool permits(std::string_view id) const { return permitted_target_ids.count(std::string(id)) > 0; }

  friend bool operator==(const Principal&, const Principal&) = default;
};

/// Builds a principal whose permitted set is the downward closure of `grants`.
/// Throws UnknownTarget for grants that are not in the org.
Principal make_principal(std::string user_id, const OrgIndex& org, const std::vector<std::string>& grants,
                         std::set<std::string> capabilities = {});

nlohmann::json to_json(const Principal& p);
Principal principal_from_json(const nlohmann::json& j);

}  // namespace govq
