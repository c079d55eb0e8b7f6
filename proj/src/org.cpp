#include "govq/org.hpp"

#include "govq/errors.hpp"

namespace govq {

std::string_view node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::office:
      return "office";
    case NodeKind::department:
      return "department";
    case NodeKind::team:
      return "team";
    case NodeKind::call_center:
      return "call_center";
    case NodeKind::agent_group:
      return "agent_group";
  }
  return "team";
}

std::optional<NodeKind> parse_node_kind(std::string_view text) {
  if (text == "office") return NodeKind::office;
  if (text == "department") return NodeKind::department;
  if (text == "team") return NodeKind::team;
  if (text == "call_center") return NodeKind::call_center;
  if (text == "agent_group") return NodeKind::agent_group;
  return std::nullopt;
}

nlohmann::json to_json(const OrgNode& n) {
  nlohmann::json j = {{"id", n.id},
                      {"tenant_id", n.tenant_id},
                      {"name", n.name},
                      {"kind", node_kind_name(n.kind)},
                      {"parent_id", nullptr},
                      {"aliases", n.aliases}};
  if (n.parent_id) j["parent_id"] = *n.parent_id;
  return j;
}

OrgNode org_node_from_json(const nlohmann::json& j) {
  try {
    OrgNode n;
    n.id = j.at("id").get<std::string>();
    n.tenant_id = j.at("tenant_id").get<std::string>();
    n.name = j.at("name").get<std::string>();
    auto kind = parse_node_kind(j.at("kind").get<std::string>());
    if (!kind) throw ParseError("unknown org node kind for " + n.id);
    n.kind = *kind;
    if (j.contains("parent_id") && !j["parent_id"].is_null()) n.parent_id = j["parent_id"].get<std::string>();
    n.aliases = j.value("aliases", std::vector<std::string>{});
    return n;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed org node: ") + e.what());
  }
}

OrgIndex::OrgIndex(std::vector<OrgNode> nodes) : nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const OrgNode& n = nodes_[i];
    if (n.id.empty()) throw IntegrityError("org node with empty id");
    if (i == 0) tenant_id_ = n.tenant_id;
    if (n.tenant_id != tenant_id_) throw IntegrityError("org spans several tenants: " + n.id);
    if (!by_id_.emplace(n.id, i).second) throw IntegrityError("duplicate org node id: " + n.id);
  }
  for (const OrgNode& n : nodes_) {
    children_[n.id];
    if (!n.parent_id) continue;
    if (by_id_.find(*n.parent_id) == by_id_.end()) {
      throw IntegrityError("org node " + n.id + " has unknown parent " + *n.parent_id);
    }
    children_[*n.parent_id].push_back(n.id);
  }
  // every node must reach a root within |nodes| steps
  for (const OrgNode& n : nodes_) {
    const OrgNode* cur = &n;
    std::size_t steps = 0;
    while (cur->parent_id) {
      if (++steps > nodes_.size()) throw IntegrityError("org hierarchy contains a cycle at " + n.id);
      cur = &nodes_[by_id_.find(*cur->parent_id)->second];
    }
  }
}

const OrgNode* OrgIndex::find(std::string_view id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &nodes_[it->second];
}

const std::vector<std::string>& OrgIndex::children(std::string_view id) const {
  static const std::vector<std::string> kNone;
  auto it = children_.find(id);
  return it == children_.end() ? kNone : it->second;
}

std::set<std::string> OrgIndex::subtree(std::string_view id) const {
  std::set<std::string> out;
  if (!find(id)) return out;
  std::vector<std::string> stack{std::string(id)};
  while (!stack.empty()) {
    std::string cur = std::move(stack.back());
    stack.pop_back();
    for (const std::string& c : children(cur)) stack.push_back(c);
    out.insert(std::move(cur));
  }
  return out;
}

std::set<std::string> OrgIndex::leaves_under(std::string_view id) const {
  std::set<std::string> out;
  for (const std::string& n : subtree(id)) {
    if (is_leaf(n)) out.insert(n);
  }
  return out;
}

std::vector<std::string> OrgIndex::roots() const {
  std::vector<std::string> out;
  for (const OrgNode& n : nodes_) {
    if (!n.parent_id) out.push_back(n.id);
  }
  return out;
}

nlohmann::json OrgIndex::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const OrgNode& n : nodes_) out.push_back(govq::to_json(n));
  return out;
}

OrgIndex OrgIndex::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("org must be a JSON array");
  std::vector<OrgNode> nodes;
  for (const auto& n : j) nodes.push_back(org_node_from_json(n));
  return OrgIndex(std::move(nodes));
}

Principal make_principal(std::string user_id, const OrgIndex& org, const std::vector<std::string>& grants,
                         std::set<std::string> capabilities) {
  Principal p;
  p.user_id = std::move(user_id);
  p.tenant_id = org.tenant_id();
  p.capabilities = std::move(capabilities);
  for (const std::string& g : grants) {
    if (!org.find(g)) throw UnknownTarget("unknown target in grant: " + g);
    auto sub = org.subtree(g);
    p.permitted_target_ids.insert(sub.begin(), sub.end());
  }
  return p;
}

nlohmann::json to_json(const Principal& p) {
  return {{"user_id", p.user_id},
          {"tenant_id", p.tenant_id},
          {"permitted_target_ids", p.permitted_target_ids},
          {"capabilities", p.capabilities}};
}

Principal principal_from_json(const nlohmann::json& j) {
  try {
    Principal p;
    p.user_id = j.at("user_id").get<std::string>();
    p.tenant_id = j.at("tenant_id").get<std::string>();
    p.permitted_target_ids = j.at("permitted_target_ids").get<std::set<std::string>>();
    p.capabilities = j.value("capabilities", std::set<std::string>{});
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed principal: ") + e.what());
  }
}

}  // namespace govq
