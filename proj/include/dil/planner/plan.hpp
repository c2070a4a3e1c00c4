#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dil/core/table.hpp"
#include "dil/registry/operator_registry.hpp"

namespace dil {

enum class NodeStatus { planned, refined, ready, running, suspended, done, failed };

std::string_view to_string(NodeStatus s);
NodeStatus parse_node_status(std::string_view name);

struct PlanNode {
    std::string node_id;
    std::string operator_id;
    Map attributes;
    Map properties;
    NodeStatus status = NodeStatus::planned;

    bool operator==(const PlanNode&) const = default;
};

struct PlanEdge {
    std::string from;
    std::string to;
    int port = 0;

    bool operator==(const PlanEdge&) const = default;
    auto operator<=>(const PlanEdge&) const = default;
};

// A next-best alternative kept aside by optimize(): if a node of the chosen
// subplan fails, the executor may splice `nodes`/`edges` in and reroute the
// consumers of `chosen` to `next`.
struct Fallback {
    std::string group;
    std::string chosen;
    std::vector<std::string> members;  // nodes owned by the chosen subplan
    std::string next;
    std::map<std::string, PlanNode> nodes;
    std::vector<PlanEdge> edges;

    bool operator==(const Fallback&) const = default;
};

// Operator DAG. A refined abstract/compound node stays in the plan as the
// placeholder of its alternatives group: alternatives[node_id] lists the roots
// of the candidate subplans, and the placeholder's consumers take the output
// of whichever root optimize() selects.
struct DataPlan {
    std::map<std::string, PlanNode> nodes;
    std::vector<PlanEdge> edges;
    std::map<std::string, std::vector<std::string>> alternatives;
    std::string root;
    std::vector<Fallback> fallbacks;

    std::vector<PlanEdge> inputs_of(const std::string& node_id) const;     // ordered by port
    std::vector<PlanEdge> consumers_of(const std::string& node_id) const;  // ordered by (to, port)
    // Topological order (Kahn, ties by node id); throws bad_request on a cycle.
    std::vector<std::string> topological_order() const;

    bool operator==(const DataPlan&) const = default;
};

nlohmann::json to_json(const DataPlan& plan);
DataPlan plan_from_json(const nlohmann::json& j);

struct PlanViolation {
    std::string kind;  // cycle, unknown_node, unknown_operator, port, attribute, alternatives, unreachable, abstract, root
    std::string node;
    std::optional<int> port;
    std::string detail;

    bool operator==(const PlanViolation&) const = default;
};

struct PlanReport {
    std::vector<PlanViolation> violations;
    bool ok() const { return violations.empty(); }
    nlohmann::json to_json() const;
};

// Structural checks: acyclicity (the cycle is listed), exactly one incoming
// edge per required port and none past the operator's arity, attribute
// schemas, alternatives groups, reachability of the root, and no abstract
// node outside a group.
PlanReport validate(const DataPlan& plan, const OperatorRegistry& operators);

}  // namespace dil
