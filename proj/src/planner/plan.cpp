#include "dil/planner/plan.hpp"

#include <algorithm>
#include <functional>
#include <queue>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"

namespace dil {

namespace {

constexpr std::string_view kStatusNames[] = {"planned", "refined", "ready", "running", "suspended", "done", "failed"};

Map map_from(const nlohmann::json& j, const char* what) {
    if (j.is_null()) return {};
    Value v = from_json(j);
    if (!v.is_map()) fail(ErrorCode::bad_request, std::string("plan node ") + what + " must be an object");
    return v.as_map();
}

nlohmann::json node_json(const PlanNode& n) {
    return {{"operator_id", n.operator_id},
            {"attributes", to_json(Value(n.attributes))},
            {"properties", to_json(Value(n.properties))},
            {"status", std::string(to_string(n.status))}};
}

PlanNode node_from(const std::string& id, const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorCode::bad_request, "plan node " + id + " must be an object");
    PlanNode n;
    n.node_id = id;
    n.operator_id = j.at("operator_id").get<std::string>();
    n.attributes = map_from(j.value("attributes", nlohmann::json()), "attributes");
    n.properties = map_from(j.value("properties", nlohmann::json()), "properties");
    n.status = parse_node_status(j.value("status", "planned"));
    return n;
}

nlohmann::json edges_json(const std::vector<PlanEdge>& edges) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : edges) out.push_back({{"from", e.from}, {"to", e.to}, {"port", e.port}});
    return out;
}

std::vector<PlanEdge> edges_from(const nlohmann::json& j) {
    std::vector<PlanEdge> out;
    if (j.is_null()) return out;
    for (const auto& e : j) {
        out.push_back({e.at("from").get<std::string>(), e.at("to").get<std::string>(), e.value("port", 0)});
    }
    return out;
}

}  // namespace

std::string_view to_string(NodeStatus s) { return kStatusNames[static_cast<int>(s)]; }

NodeStatus parse_node_status(std::string_view name) {
    for (int i = 0; i < 7; ++i) {
        if (kStatusNames[i] == name) return static_cast<NodeStatus>(i);
    }
    fail(ErrorCode::bad_request, "unknown node status \"" + std::string(name) + "\"");
}

std::vector<PlanEdge> DataPlan::inputs_of(const std::string& node_id) const {
    std::vector<PlanEdge> out;
    for (const auto& e : edges) {
        if (e.to == node_id) out.push_back(e);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.port < b.port; });
    return out;
}

std::vector<PlanEdge> DataPlan::consumers_of(const std::string& node_id) const {
    std::vector<PlanEdge> out;
    for (const auto& e : edges) {
        if (e.from == node_id) out.push_back(e);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> DataPlan::topological_order() const {
    std::map<std::string, int> indeg;
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& [id, _] : nodes) indeg[id] = 0;
    for (const auto& e : edges) {
        if (!nodes.count(e.from) || !nodes.count(e.to)) continue;
        succ[e.from].push_back(e.to);
        indeg[e.to]++;
    }
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, d] : indeg) {
        if (d == 0) ready.push(id);
    }
    std::vector<std::string> order;
    while (!ready.empty()) {
        auto id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& s : succ[id]) {
            if (--indeg[s] == 0) ready.push(s);
        }
    }
    if (order.size() != nodes.size()) fail(ErrorCode::bad_request, "plan graph has a cycle");
    return order;
}

nlohmann::json to_json(const DataPlan& plan) {
    nlohmann::json nodes = nlohmann::json::object();
    for (const auto& [id, n] : plan.nodes) nodes[id] = node_json(n);
    nlohmann::json alts = nlohmann::json::object();
    for (const auto& [g, roots] : plan.alternatives) alts[g] = roots;
    nlohmann::json j = {{"nodes", nodes}, {"edges", edges_json(plan.edges)}, {"alternatives", alts}, {"root", plan.root}};
    if (!plan.fallbacks.empty()) {
        nlohmann::json fb = nlohmann::json::array();
        for (const auto& f : plan.fallbacks) {
            nlohmann::json fnodes = nlohmann::json::object();
            for (const auto& [id, n] : f.nodes) fnodes[id] = node_json(n);
            fb.push_back({{"group", f.group},
                          {"chosen", f.chosen},
                          {"members", f.members},
                          {"next", f.next},
                          {"nodes", fnodes},
                          {"edges", edges_json(f.edges)}});
        }
        j["fallbacks"] = fb;
    }
    return j;
}

DataPlan plan_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object()) fail(ErrorCode::bad_request, "plan must be a JSON object");
        DataPlan plan;
        for (const auto& [id, n] : j.at("nodes").items()) plan.nodes.emplace(id, node_from(id, n));
        plan.edges = edges_from(j.value("edges", nlohmann::json()));
        if (j.contains("alternatives")) {
            for (const auto& [g, roots] : j["alternatives"].items()) {
                plan.alternatives[g] = roots.get<std::vector<std::string>>();
            }
        }
        plan.root = j.value("root", "");
        if (j.contains("fallbacks")) {
            for (const auto& f : j["fallbacks"]) {
                Fallback fb;
                fb.group = f.at("group").get<std::string>();
                fb.chosen = f.at("chosen").get<std::string>();
                fb.members = f.at("members").get<std::vector<std::string>>();
                fb.next = f.at("next").get<std::string>();
                for (const auto& [id, n] : f.at("nodes").items()) fb.nodes.emplace(id, node_from(id, n));
                fb.edges = edges_from(f.value("edges", nlohmann::json()));
                plan.fallbacks.push_back(std::move(fb));
            }
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, std::string("malformed plan JSON: ") + e.what());
    }
}

nlohmann::json PlanReport::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : violations) {
        nlohmann::json j = {{"kind", v.kind}, {"detail", v.detail}};
        if (!v.node.empty()) j["node"] = v.node;
        if (v.port) j["port"] = *v.port;
        out.push_back(j);
    }
    return out;
}

namespace {

// One cycle through the graph, as a node list, or empty.
std::vector<std::string> find_cycle(const DataPlan& plan) {
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& e : plan.edges) {
        if (plan.nodes.count(e.from) && plan.nodes.count(e.to)) succ[e.from].push_back(e.to);
    }
    for (auto& [_, v] : succ) std::sort(v.begin(), v.end());
    std::map<std::string, int> state;  // 0 new, 1 on stack, 2 done
    std::vector<std::string> stack;
    std::vector<std::string> cycle;
    std::function<bool(const std::string&)> dfs = [&](const std::string& n) {
        state[n] = 1;
        stack.push_back(n);
        for (const auto& s : succ[n]) {
            if (state[s] == 1) {
                auto it = std::find(stack.begin(), stack.end(), s);
                cycle.assign(it, stack.end());
                return true;
            }
            if (state[s] == 0 && dfs(s)) return true;
        }
        stack.pop_back();
        state[n] = 2;
        return false;
    };
    for (const auto& [id, _] : plan.nodes) {
        if (state[id] == 0 && dfs(id)) return cycle;
    }
    return {};
}

}  // namespace

PlanReport validate(const DataPlan& plan, const OperatorRegistry& operators) {
    PlanReport r;
    auto add = [&](std::string kind, std::string node, std::optional<int> port, std::string detail) {
        r.violations.push_back({std::move(kind), std::move(node), port, std::move(detail)});
    };
    if (plan.nodes.empty()) {
        add("root", "", std::nullopt, "plan has no nodes");
        return r;
    }
    if (!plan.nodes.count(plan.root)) add("root", plan.root, std::nullopt, "root \"" + plan.root + "\" is not a node");

    for (const auto& e : plan.edges) {
        if (!plan.nodes.count(e.from)) add("unknown_node", e.from, std::nullopt, "edge from unknown node " + e.from);
        if (!plan.nodes.count(e.to)) add("unknown_node", e.to, std::nullopt, "edge to unknown node " + e.to);
    }
    if (auto cycle = find_cycle(plan); !cycle.empty()) {
        std::string text;
        for (const auto& n : cycle) text += n + " -> ";
        add("cycle", cycle.front(), std::nullopt, "cycle: " + text + cycle.front());
    }

    std::set<std::string> members;
    for (const auto& [g, roots] : plan.alternatives) {
        auto it = plan.nodes.find(g);
        if (it == plan.nodes.end()) {
            add("alternatives", g, std::nullopt, "group names no node");
            continue;
        }
        if (roots.empty()) add("alternatives", g, std::nullopt, "group has no alternatives");
        std::set<std::string> seen;
        for (const auto& m : roots) {
            if (!plan.nodes.count(m)) add("alternatives", g, std::nullopt, "alternative " + m + " is not a node");
            if (!seen.insert(m).second) add("alternatives", g, std::nullopt, "alternative " + m + " listed twice");
            if (m == g) add("alternatives", g, std::nullopt, "group lists itself");
            members.insert(m);
        }
    }

    for (const auto& [id, n] : plan.nodes) {
        auto d = operators.find(n.operator_id);
        if (!d) {
            add("unknown_operator", id, std::nullopt, "unknown operator \"" + n.operator_id + "\"");
            continue;
        }
        const bool grouped = plan.alternatives.count(id) > 0;
        if (d->kind != OperatorKind::physical && !grouped) {
            add("abstract", id, std::nullopt, std::string(to_string(d->kind)) + " operator " + n.operator_id + " is not refined");
        }
        try {
            validate_attributes(*d, n.attributes);
            validate_properties(*d, n.properties);
        } catch (const Error& e) {
            add("attribute", id, std::nullopt, e.what());
        }
        std::map<int, int> per_port;
        for (const auto& e : plan.inputs_of(id)) per_port[e.port]++;
        for (const auto& [p, count] : per_port) {
            if (p < 0 || (d->max_ports >= 0 && p >= d->max_ports)) {
                add("port", id, p, "port " + std::to_string(p) + " is beyond the arity of " + n.operator_id);
            } else if (count > 1) {
                add("port", id, p, "port " + std::to_string(p) + " has " + std::to_string(count) + " incoming edges");
            }
        }
        int needed = d->min_ports;
        if (!per_port.empty()) needed = std::max(needed, per_port.rbegin()->first + 1);
        for (int p = 0; p < needed; ++p) {
            if (!per_port.count(p)) add("port", id, p, "port " + std::to_string(p) + " of " + id + " has no input");
        }
    }

    // Every node must reach the root through edges or group membership.
    std::map<std::string, std::vector<std::string>> up;
    for (const auto& e : plan.edges) up[e.from].push_back(e.to);
    for (const auto& [g, roots] : plan.alternatives) {
        for (const auto& m : roots) up[m].push_back(g);
    }
    std::set<std::string> reaches{plan.root};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& [id, _] : plan.nodes) {
            if (reaches.count(id)) continue;
            for (const auto& t : up[id]) {
                if (reaches.count(t)) {
                    reaches.insert(id);
                    grew = true;
                    break;
                }
            }
        }
    }
    for (const auto& [id, _] : plan.nodes) {
        if (!reaches.count(id)) add("unreachable", id, std::nullopt, "node " + id + " does not reach the root");
    }
    return r;
}

}  // namespace dil
