#include "dil/planner/planner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>

#include "dil/core/codec.hpp"
#include "dil/core/digest.hpp"
#include "dil/core/expression.hpp"
#include "dil/error.hpp"

namespace dil {

namespace {

const std::set<std::string> kLlmOperators = {"nl2sql", "nl2llm", "query_breakdown", "web_extract"};

const Value* attr(const PlanNode& n, const std::string& key) {
    auto it = n.attributes.find(key);
    return it == n.attributes.end() || it->second.is_null() ? nullptr : &it->second;
}

std::string str_attr(const PlanNode& n, const std::string& key) {
    const Value* v = attr(n, key);
    return v && v->is_string() ? v->as_string() : "";
}

double number(const Value& v) { return v.is_int() ? static_cast<double>(v.as_int()) : v.as_float(); }

std::optional<double> num_attr(const PlanNode& n, const std::string& key) {
    const Value* v = attr(n, key);
    if (!v || !v->is_number()) return std::nullopt;
    return number(*v);
}

std::vector<std::pair<const char*, double CostModel::*>> cost_fields() {
    return {{"default_rows", &CostModel::default_rows},
            {"scan_latency", &CostModel::scan_latency},
            {"scan_latency_per_row", &CostModel::scan_latency_per_row},
            {"filter_selectivity", &CostModel::filter_selectivity},
            {"join_selectivity", &CostModel::join_selectivity},
            {"in_selectivity", &CostModel::in_selectivity},
            {"llm_rows", &CostModel::llm_rows},
            {"llm_latency", &CostModel::llm_latency},
            {"llm_money", &CostModel::llm_money},
            {"llm_quality", &CostModel::llm_quality},
            {"user_rows", &CostModel::user_rows},
            {"user_latency", &CostModel::user_latency},
            {"user_fresh_latency", &CostModel::user_fresh_latency},
            {"user_quality", &CostModel::user_quality},
            {"vector_latency", &CostModel::vector_latency},
            {"vector_quality", &CostModel::vector_quality},
            {"web_rows", &CostModel::web_rows},
            {"web_latency", &CostModel::web_latency},
            {"web_quality", &CostModel::web_quality}};
}

}  // namespace

nlohmann::json to_json(const CostEstimate& c) {
    return {{"out_rows", c.out_rows}, {"latency", c.latency}, {"money", c.money}, {"quality", c.quality}};
}

CostModel CostModel::from_json(const nlohmann::json& j) {
    CostModel m;
    if (j.is_null()) return m;
    if (!j.is_object()) fail(ErrorCode::bad_request, "cost_model must be an object");
    auto fields = cost_fields();
    for (const auto& [k, v] : j.items()) {
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return k == f.first; });
        if (it == fields.end()) fail(ErrorCode::bad_request, "unknown cost model constant \"" + k + "\"");
        if (!v.is_number() || v.get<double>() < 0) {
            fail(ErrorCode::bad_request, "cost model constant \"" + k + "\" must be a non-negative number");
        }
        m.*(it->second) = v.get<double>();
    }
    return m;
}

nlohmann::json CostModel::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, f] : cost_fields()) j[k] = this->*f;
    return j;
}

Objective Objective::from_json(const nlohmann::json& j) {
    Objective o;
    if (j.is_null()) return o;
    if (!j.is_object()) fail(ErrorCode::bad_request, "objective must be an object");
    for (const auto& [k, v] : j.items()) {
        if (k == "quality_floor" && v.is_number()) {
            o.quality_floor = v.get<double>();
            if (o.quality_floor < 0 || o.quality_floor > 1) fail(ErrorCode::bad_request, "quality_floor must be in [0, 1]");
        } else if (k == "max_retries" && v.is_number_integer() && v.get<int>() >= 0) {
            o.max_retries = v.get<int>();
        } else if (k == "cache" && v.is_boolean()) {
            o.cache = v.get<bool>();
        } else {
            fail(ErrorCode::bad_request, "bad objective field \"" + k + "\"");
        }
    }
    return o;
}

nlohmann::json Objective::to_json() const {
    nlohmann::json j = {{"quality_floor", quality_floor}};
    if (max_retries) j["max_retries"] = *max_retries;
    if (cache) j["cache"] = *cache;
    return j;
}

std::optional<std::set<std::string>> infer_attributes(const DataPlan& plan, const std::string& id) {
    auto nit = plan.nodes.find(id);
    if (nit == plan.nodes.end() || plan.alternatives.count(id)) return std::nullopt;
    const PlanNode& n = nit->second;
    const auto& op = n.operator_id;
    auto ins = plan.inputs_of(id);
    auto input = [&](std::size_t i) -> std::optional<std::set<std::string>> {
        if (i >= ins.size()) return std::nullopt;
        return infer_attributes(plan, ins[i].from);
    };
    if (op == "project") {
        const Value* cols = attr(n, "columns");
        if (!cols || !cols->is_list()) return std::nullopt;
        const Value* ren = attr(n, "rename");
        std::set<std::string> out;
        for (const auto& c : cols->as_list()) {
            if (!c.is_string()) return std::nullopt;
            std::string name = c.as_string();
            if (ren && ren->is_map()) {
                if (const Value* to = ren->find(name); to && to->is_string()) name = to->as_string();
            }
            out.insert(name);
        }
        return out;
    }
    if (op == "nl2llm" || op == "nl2u" || op == "web_extract") {
        const Value* s = attr(n, "output_schema");
        if (!s) return std::nullopt;
        try {
            std::set<std::string> out;
            for (const auto& c : schema_from_value(*s)) out.insert(c.name);
            return out;
        } catch (const Error&) {
            return std::nullopt;
        }
    }
    if (op == "filter" || op == "sort_limit" || op == "in_filter") return input(0);
    if (op == "extract_regex" || op == "extract_dictionary") {
        auto in = input(0);
        if (!in) return std::nullopt;
        std::string as = str_attr(n, "as");
        in->insert(as.empty() ? "extracted" : as);
        return in;
    }
    if (op == "union") {
        std::optional<std::set<std::string>> out;
        for (std::size_t i = 0; i < ins.size(); ++i) {
            auto s = input(i);
            if (!s || (out && *out != *s)) return std::nullopt;
            out = s;
        }
        return out;
    }
    if (op == "group_agg") {
        std::set<std::string> out;
        if (const Value* keys = attr(n, "keys")) {
            for (const auto& k : keys->as_list()) {
                if (!k.is_string()) return std::nullopt;
                out.insert(k.as_string());
            }
        }
        const Value* aggs = attr(n, "aggs");
        if (!aggs || !aggs->is_list()) return std::nullopt;
        for (const auto& a : aggs->as_list()) {
            if (!a.is_map()) return std::nullopt;
            const Value* as = a.find("as");
            const Value* fn = a.find("fn");
            const Value* on = a.find("on");
            if (as && as->is_string()) {
                out.insert(as->as_string());
            } else if (fn && fn->is_string()) {
                out.insert(on && on->is_string() ? fn->as_string() + "_" + on->as_string() : fn->as_string());
            } else {
                return std::nullopt;
            }
        }
        return out;
    }
    if (op == "join") {
        auto l = input(0), r = input(1);
        if (!l || !r) return std::nullopt;
        std::set<std::string> out = *l;
        for (const auto& name : *r) {
            if (!l->count(name)) {
                out.insert(name);
                continue;
            }
            std::string m = "r_" + name;
            if (l->count(m) || r->count(m)) return std::nullopt;
            out.insert(m);
        }
        return out;
    }
    return std::nullopt;
}

namespace {

// Cost estimation over a plan that may still hold alternatives groups.
class Estimator {
public:
    Estimator(const DataPlan& plan, const Objective& objective, const CostModel& model, const ops::ExecContext& ctx)
        : p_(plan), obj_(objective), m_(model), ctx_(ctx) {}

    bool is_group(const std::string& id) const { return p_.alternatives.count(id) > 0; }

    // Feasible members, best first.
    const std::vector<std::string>& ranked(const std::string& g) {
        if (auto it = ranked_.find(g); it != ranked_.end()) return it->second;
        std::vector<std::pair<std::string, CostEstimate>> ok;
        for (const auto& m : p_.alternatives.at(g)) {
            auto e = estimate(m);
            if (!e || e->quality < obj_.quality_floor) continue;
            std::pair<std::string, CostEstimate> item{m, *e};
            auto pos = ok.begin();
            while (pos != ok.end() && !better(item, *pos)) ++pos;
            ok.insert(pos, item);
        }
        std::vector<std::string> out;
        for (const auto& [m, e] : ok) out.push_back(m);
        return ranked_[g] = out;
    }

    std::optional<std::string> resolve(const std::string& id) {
        if (!is_group(id)) return id;
        const auto& r = ranked(id);
        if (r.empty()) return std::nullopt;
        return resolve(r.front());
    }

    std::optional<CostEstimate> estimate(const std::string& id) {
        auto n = resolve(id);
        if (!n) return std::nullopt;
        std::set<std::string> seen;
        if (!collect(*n, seen)) return std::nullopt;
        CostEstimate c;
        c.out_rows = rows(*n);
        c.latency = latency(*n);
        c.quality = 1.0;
        for (const auto& s : seen) {
            c.money += own(s).money;
            c.quality = std::min(c.quality, own(s).quality);
        }
        return c;
    }

private:
    struct Own {
        double latency = 0, money = 0, quality = 1;
    };

    const DataPlan& p_;
    const Objective& obj_;
    const CostModel& m_;
    const ops::ExecContext& ctx_;
    std::map<std::string, std::vector<std::string>> ranked_;
    std::map<std::string, double> rows_, latency_;

    bool better(const std::pair<std::string, CostEstimate>& a, const std::pair<std::string, CostEstimate>& b) const {
        if (std::abs(a.second.latency - b.second.latency) > 1e-9) return a.second.latency < b.second.latency;
        const auto& oa = p_.nodes.at(a.first).operator_id;
        const auto& ob = p_.nodes.at(b.first).operator_id;
        if (oa != ob) return oa < ob;
        return a.first < b.first;
    }

    std::optional<std::vector<std::string>> inputs(const std::string& id) {
        std::vector<std::string> out;
        for (const auto& e : p_.inputs_of(id)) {
            auto r = resolve(e.from);
            if (!r) return std::nullopt;
            out.push_back(*r);
        }
        return out;
    }

    bool collect(const std::string& id, std::set<std::string>& seen) {
        if (!seen.insert(id).second) return true;
        auto ins = inputs(id);
        if (!ins) return false;
        for (const auto& i : *ins) {
            if (!collect(i, seen)) return false;
        }
        return true;
    }

    double scan_rows(const PlanNode& n) const {
        if (!ctx_.registry) return m_.default_rows;
        std::string source = str_attr(n, "source_id");
        std::string hint = str_attr(n, "collection_hint");
        std::vector<const MetadataEntry*> found;
        auto entries = ctx_.registry->subtree({source});
        for (const auto& e : entries) {
            if (e.level != MetadataLevel::collection) continue;
            if (!hint.empty() && e.path.back() != hint) continue;
            found.push_back(&e);
        }
        if (found.size() != 1 || !found[0]->statistics.row_count) return m_.default_rows;
        return static_cast<double>(*found[0]->statistics.row_count);
    }

    double rows(const std::string& id) {
        if (auto it = rows_.find(id); it != rows_.end()) return it->second;
        const PlanNode& n = p_.nodes.at(id);
        const auto& op = n.operator_id;
        auto ins = inputs(id).value_or(std::vector<std::string>{});
        auto in = [&](std::size_t i) { return i < ins.size() ? rows(ins[i]) : m_.default_rows; };
        double r;
        if (op == "nl2sql") {
            r = scan_rows(n);
        } else if (op == "nl2llm" || op == "query_breakdown") {
            r = m_.llm_rows;
        } else if (op == "nl2u") {
            r = m_.user_rows;
        } else if (op == "nl2vec") {
            r = num_attr(n, "k").value_or(5);
        } else if (op == "web_extract") {
            r = m_.web_rows;
        } else if (op == "filter") {
            r = in(0) * m_.filter_selectivity;
        } else if (op == "join") {
            r = in(0) * in(1) * m_.join_selectivity;
        } else if (op == "in_filter") {
            r = in(0) * m_.in_selectivity;
        } else if (op == "union") {
            r = 0;
            for (std::size_t i = 0; i < ins.size(); ++i) r += in(i);
        } else if (op == "sort_limit") {
            r = std::max(0.0, in(0) - num_attr(n, "offset").value_or(0));
            if (auto lim = num_attr(n, "limit")) r = std::min(r, *lim);
        } else if (op == "group_agg") {
            const Value* keys = attr(n, "keys");
            r = keys && keys->is_list() && !keys->as_list().empty() ? in(0) : 1;
        } else {
            r = ins.empty() ? m_.default_rows : in(0);
        }
        return rows_[id] = r;
    }

    Own own(const std::string& id) {
        const PlanNode& n = p_.nodes.at(id);
        const auto& op = n.operator_id;
        Own o;
        if (op == "nl2sql") {
            o.latency = m_.scan_latency + m_.scan_latency_per_row * rows(id);
        } else if (op == "nl2llm" || op == "query_breakdown") {
            o = {m_.llm_latency, m_.llm_money, m_.llm_quality};
        } else if (op == "nl2u") {
            bool fresh = false;
            if (ctx_.sources) fresh = ctx_.sources->profiles().lookup_fresh(ctx_.profile_ns, str_attr(n, "question")).has_value();
            o = {fresh ? m_.user_fresh_latency : m_.user_latency, 0, m_.user_quality};
        } else if (op == "nl2vec") {
            o = {m_.vector_latency, 0, m_.vector_quality};
        } else if (op == "web_extract") {
            o = {m_.web_latency, 0, m_.web_quality};
        }
        if (auto it = n.properties.find("coverage"); it != n.properties.end() && it->second.is_number()) {
            o.quality *= number(it->second);
        }
        return o;
    }

    double latency(const std::string& id) {
        if (auto it = latency_.find(id); it != latency_.end()) return it->second;
        double m = 0;
        for (const auto& i : inputs(id).value_or(std::vector<std::string>{})) m = std::max(m, latency(i));
        return latency_[id] = m + own(id).latency;
    }
};

bool subset(const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

void replace_edges(DataPlan& p, const std::function<bool(const PlanEdge&)>& drop) {
    p.edges.erase(std::remove_if(p.edges.begin(), p.edges.end(), drop), p.edges.end());
}

std::string fresh_id(const DataPlan& p, const DataPlan& original, std::string base) {
    std::string id = base;
    for (int i = 2; p.nodes.count(id) || original.nodes.count(id); ++i) id = base + "." + std::to_string(i);
    return id;
}

// One filter moved below a join or union; false when none can move.
bool push_once(DataPlan& p, const DataPlan& original, const std::set<std::string>& pinned,
               std::map<std::string, std::string>& alias) {
    for (const auto& [fid, f] : p.nodes) {
        if (f.operator_id != "filter") continue;
        auto ins = p.inputs_of(fid);
        if (ins.size() != 1) continue;
        const std::string cid = ins[0].from;
        const PlanNode& c = p.nodes.at(cid);
        if (c.operator_id != "join" && c.operator_id != "union") continue;
        if (p.consumers_of(cid).size() != 1 || pinned.count(cid)) continue;
        std::set<std::string> refs;
        try {
            Expr e = parse_expression(str_attr(f, "predicate"));
            auto ports = referenced_ports(e);
            if (ports.size() > 1 || (ports.size() == 1 && *ports.begin() != 0)) continue;
            refs = referenced_attributes(e, 0);
        } catch (const Error&) {
            continue;
        }
        auto cins = p.inputs_of(cid);

        auto reroute_consumers = [&] {
            for (auto& e : p.edges) {
                if (e.from == fid) e.from = cid;
            }
            if (p.root == fid) p.root = cid;
            alias.emplace(fid, cid);
        };

        if (c.operator_id == "join") {
            if (cins.size() != 2) continue;
            auto l = infer_attributes(p, cins[0].from);
            auto r = infer_attributes(p, cins[1].from);
            int side = -1;
            if (l && subset(refs, *l)) {
                side = 0;
            } else if (l && r && str_attr(c, "kind") != "left" && subset(refs, *r)) {
                bool clash = false;
                for (const auto& a : refs) clash = clash || l->count(a);
                if (!clash) side = 1;
            }
            if (side < 0) continue;
            const std::string below = cins[side].from;
            replace_edges(p, [&](const PlanEdge& e) { return (e.from == cid && e.to == fid) || (e.to == cid && e.port == side); });
            reroute_consumers();
            p.edges.push_back({below, fid, 0});
            p.edges.push_back({fid, cid, side});
            std::sort(p.edges.begin(), p.edges.end());
            return true;
        }

        PlanNode filter = f;
        replace_edges(p, [&](const PlanEdge& e) { return e.to == cid || (e.from == cid && e.to == fid); });
        reroute_consumers();
        for (const auto& e : cins) {
            PlanNode copy = filter;
            copy.node_id = fresh_id(p, original, fid + "/" + std::to_string(e.port));
            p.edges.push_back({e.from, copy.node_id, 0});
            p.edges.push_back({copy.node_id, cid, e.port});
            p.nodes.emplace(copy.node_id, std::move(copy));
        }
        p.nodes.erase(fid);
        std::sort(p.edges.begin(), p.edges.end());
        return true;
    }
    return false;
}

void dedup(DataPlan& p, std::map<std::string, std::string>& alias) {
    std::map<std::string, std::string> key;       // node -> digest of its computation
    std::map<std::string, std::string> keeper;    // digest -> smallest node id
    for (const auto& id : p.topological_order()) {
        const PlanNode& n = p.nodes.at(id);
        List ins;
        for (const auto& e : p.inputs_of(id)) ins.push_back(List{Value(std::int64_t{e.port}), Value(key.at(e.from))});
        std::sort(ins.begin(), ins.end(), [](const Value& a, const Value& b) { return serialize_value(a) < serialize_value(b); });
        key[id] = digest(Value(Map{{"operator_id", n.operator_id}, {"attributes", n.attributes}, {"inputs", ins}}));
        auto [it, added] = keeper.emplace(key[id], id);
        if (!added && id < it->second) it->second = id;
    }
    for (const auto& [id, k] : key) {
        const std::string& keep = keeper.at(k);
        if (keep == id) continue;
        replace_edges(p, [&](const PlanEdge& e) { return e.to == id; });
        for (auto& e : p.edges) {
            if (e.from == id) e.from = keep;
        }
        if (p.root == id) p.root = keep;
        p.nodes.erase(id);
        alias.emplace(id, keep);
    }
    std::sort(p.edges.begin(), p.edges.end());
    p.edges.erase(std::unique(p.edges.begin(), p.edges.end()), p.edges.end());
}

void parallel_groups(DataPlan& p) {
    std::map<std::string, std::int64_t> group;
    std::int64_t next = 0;
    for (const auto& id : p.topological_order()) {
        auto ins = p.inputs_of(id);
        if (ins.size() == 1 && p.consumers_of(ins[0].from).size() == 1) {
            group[id] = group.at(ins[0].from);
        } else {
            group[id] = next++;
        }
    }
    if (next < 2) return;
    for (auto& [id, n] : p.nodes) n.properties["parallel_group"] = Value(group.at(id));
}

std::set<std::string> closure(const DataPlan& p, const std::string& from) {
    std::set<std::string> seen;
    std::vector<std::string> stack{from};
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        for (const auto& e : p.edges) {
            if (e.to == n) stack.push_back(e.from);
        }
    }
    return seen;
}

std::string follow(const std::map<std::string, std::string>& alias, std::string id) {
    for (int guard = 0; guard < 1000; ++guard) {
        auto it = alias.find(id);
        if (it == alias.end() || it->second == id) break;
        id = it->second;
    }
    return id;
}

}  // namespace

Planner::Planner(const OperatorRegistry& operators, ops::ExecContext& ctx, CostModel model)
    : operators_(operators), ctx_(ctx), model_(model) {}

DataPlan Planner::instantiate(const std::string& operator_id, const Map& attributes) const {
    auto d = operators_.get(operator_id);
    validate_attributes(*d, attributes);
    DataPlan p;
    p.root = "n0";
    p.nodes["n0"] = PlanNode{"n0", operator_id, attributes, {},
                             d->kind == OperatorKind::physical ? NodeStatus::ready : NodeStatus::planned};
    return p;
}

namespace {

struct Origin {
    std::string group;        // refined node whose alternative created this node
    std::string member_root;  // root of that alternative
    int depth = 0;
};

class Refiner {
public:
    Refiner(const OperatorRegistry& ops, ops::ExecContext& ctx, DataPlan& plan) : ops_(ops), ctx_(ctx), p_(plan) {}

    void run(int max_depth) {
        for (const auto& [g, members] : p_.alternatives) {
            for (const auto& m : members) origin_[m] = {g, m, 0};
        }
        for (auto& [id, n] : p_.nodes) {
            auto d = ops_.get(n.operator_id);
            if (d->kind == OperatorKind::physical) {
                if (n.status == NodeStatus::planned) n.status = NodeStatus::ready;
            } else if (n.status != NodeStatus::refined) {
                work_.push_back(id);
            }
        }
        if (work_.empty()) return;
        while (!work_.empty()) {
            auto id = work_.front();
            work_.pop_front();
            if (!p_.nodes.count(id) || !alive(id)) continue;
            int depth = origin_.count(id) ? origin_[id].depth : 0;
            if (depth >= max_depth) {
                fail(ErrorCode::infeasible,
                     "refinement depth " + std::to_string(max_depth) + " exceeded at node " + id + " (" +
                         p_.nodes.at(id).operator_id + ")",
                     {{"node", id}, {"max_depth", max_depth}});
            }
            auto roots = expand(id, depth + 1);
            p_.nodes.at(id).status = NodeStatus::refined;
            if (roots.empty()) {
                drop(id);
            } else {
                p_.alternatives[id] = roots;
            }
        }
        collect_garbage();
    }

private:
    const OperatorRegistry& ops_;
    ops::ExecContext& ctx_;
    DataPlan& p_;
    std::map<std::string, Origin> origin_;
    std::deque<std::string> work_;

    bool alive(const std::string& id) const {
        std::set<std::string> seen;
        std::vector<std::string> stack{id};
        while (!stack.empty()) {
            auto n = stack.back();
            stack.pop_back();
            if (n == p_.root) return true;
            if (!seen.insert(n).second) continue;
            for (const auto& e : p_.edges) {
                if (e.from == n) stack.push_back(e.to);
            }
            for (const auto& [g, ms] : p_.alternatives) {
                if (std::find(ms.begin(), ms.end(), n) != ms.end()) stack.push_back(g);
            }
        }
        return false;
    }

    void drop(const std::string& id) {
        auto it = origin_.find(id);
        if (id == p_.root || it == origin_.end()) {
            fail(ErrorCode::infeasible, "no refinement of " + p_.nodes.at(id).operator_id + " applies at node " + id,
                 {{"node", id}});
        }
        const std::string g = it->second.group;
        const std::string member = it->second.member_root;
        auto& ms = p_.alternatives[g];
        ms.erase(std::remove(ms.begin(), ms.end(), member), ms.end());
        if (ms.empty()) {
            p_.alternatives.erase(g);
            drop(g);
        }
    }

    void collect_garbage() {
        std::set<std::string> keep;
        for (const auto& [id, _] : p_.nodes) {
            if (alive(id)) keep.insert(id);
        }
        for (auto it = p_.nodes.begin(); it != p_.nodes.end();) {
            it = keep.count(it->first) ? std::next(it) : p_.nodes.erase(it);
        }
        replace_edges(p_, [&](const PlanEdge& e) { return !keep.count(e.from) || !keep.count(e.to); });
        for (auto it = p_.alternatives.begin(); it != p_.alternatives.end();) {
            it = keep.count(it->first) ? std::next(it) : p_.alternatives.erase(it);
        }
        std::sort(p_.edges.begin(), p_.edges.end());
    }

    std::vector<std::string> eligible(const PlanNode& n) const {
        std::vector<std::string> out;
        if (const Value* ids = attr(n, "source_ids"); ids && ids->is_list()) {
            for (const auto& v : ids->as_list()) {
                if (v.is_string()) out.push_back(v.as_string());
            }
            return out;
        }
        if (ctx_.registry) {
            for (const auto& s : ctx_.registry->list_sources()) out.push_back(s.source_id);
        }
        return out;
    }

    std::optional<Protocol> protocol_of(const std::string& source) const {
        if (!ctx_.registry) return std::nullopt;
        auto d = ctx_.registry->source(source);
        if (!d) return std::nullopt;
        return d->protocol;
    }

    std::optional<Value> bind(const std::string& ref, const PlanNode& parent, const std::vector<std::string>& sources) const {
        std::string name = ref.substr(1);
        if (name == "source_ids") {
            List l;
            for (const auto& s : sources) l.push_back(Value(s));
            return Value(l);
        }
        if (name.rfind("source.", 0) == 0) {
            auto want = parse_protocol(name.substr(7));
            for (const auto& s : sources) {
                if (protocol_of(s) == want) return Value(s);
            }
            return std::nullopt;
        }
        if (const Value* v = attr(parent, name)) return *v;
        return std::nullopt;
    }

    void add_node(PlanNode n, const OperatorDescriptor& d, const Origin& o) {
        n.status = d.kind == OperatorKind::physical ? NodeStatus::ready : NodeStatus::planned;
        if (d.kind != OperatorKind::physical) work_.push_back(n.node_id);
        origin_[n.node_id] = o;
        p_.nodes[n.node_id] = std::move(n);
    }

    std::vector<std::string> expand(const std::string& id, int depth) {
        const PlanNode parent = p_.nodes.at(id);
        const auto inputs = p_.inputs_of(id);
        auto desc = ops_.get(parent.operator_id);
        std::vector<std::string> roots;
        for (const auto& rule : desc->refinements) {
            if (rule.dynamic == "breakdown") {
                if (auto r = breakdown(parent, depth)) roots.push_back(*r);
                continue;
            }
            if (!rule.dynamic.empty()) fail(ErrorCode::bad_request, "unknown dynamic refinement \"" + rule.dynamic + "\"");
            auto sources = eligible(parent);
            if (static_cast<int>(sources.size()) < rule.min_sources) continue;
            bool skip = false;
            for (const auto& need : rule.needs) skip = skip || !bind(need, parent, sources);
            if (skip) continue;

            std::vector<std::pair<PlanNode, std::shared_ptr<const OperatorDescriptor>>> made;
            for (const auto& t : rule.nodes) {
                auto td = ops_.find(t.operator_id);
                if (!td) {
                    fail(ErrorCode::not_found,
                         "refinement " + parent.operator_id + "/" + rule.rule_id + " uses unknown operator \"" +
                             t.operator_id + "\"",
                         {{"operator_id", t.operator_id}});
                }
                PlanNode n;
                n.node_id = id + "/" + rule.rule_id + "/" + t.id;
                n.operator_id = t.operator_id;
                for (const auto& [k, v] : t.attributes) {
                    if (v.is_string() && !v.as_string().empty() && v.as_string()[0] == '$') {
                        if (auto b = bind(v.as_string(), parent, sources)) n.attributes[k] = *b;
                    } else {
                        n.attributes[k] = v;
                    }
                }
                n.properties = parent.properties;
                for (const auto& [k, v] : t.properties) n.properties[k] = v;
                validate_attributes(*td, n.attributes);
                made.emplace_back(std::move(n), std::make_shared<const OperatorDescriptor>(*td));
            }
            const std::string out = id + "/" + rule.rule_id + "/" + rule.output;
            for (auto& [n, d] : made) add_node(n, *d, {id, out, depth});
            for (const auto& e : rule.edges) {
                p_.edges.push_back({id + "/" + rule.rule_id + "/" + e.from, id + "/" + rule.rule_id + "/" + e.to, e.port});
            }
            for (const auto& [n, d] : made) {
                bool entry = std::none_of(rule.edges.begin(), rule.edges.end(),
                                          [&](const TemplateEdge& e) { return id + "/" + rule.rule_id + "/" + e.to == n.node_id; });
                if (!entry) continue;
                for (const auto& in : inputs) {
                    if (d->max_ports < 0 || in.port < d->max_ports) p_.edges.push_back({in.from, n.node_id, in.port});
                }
            }
            roots.push_back(out);
        }
        std::sort(p_.edges.begin(), p_.edges.end());
        return roots;
    }

    // Runs query_breakdown now and turns its rows into one subplan; nullopt
    // when there is nothing usable.
    std::optional<std::string> breakdown(const PlanNode& b, int depth) {
        std::vector<ops::SubQuestion> subs;
        try {
            ops::ExecContext c = ctx_;
            auto r = ops::invoke(ops_, b.operator_id, DataBatch{}, b.attributes, b.properties, c);
            subs = ops::parse_breakdown(r.output.tables.at(0));
        } catch (const Error&) {
            return std::nullopt;
        }
        if (subs.empty()) return std::nullopt;

        std::vector<PlanNode> made;
        std::vector<PlanEdge> edges;
        const std::string base = b.node_id + "/breakdown/";
        std::string acc;
        for (std::size_t i = 0; i < subs.size(); ++i) {
            const auto& s = subs[i];
            auto proto = protocol_of(s.target);
            if (!proto) return std::nullopt;
            PlanNode n;
            n.node_id = base + "s" + std::to_string(i);
            n.properties = b.properties;
            n.attributes["question"] = Value(s.sub_question);
            n.attributes["source_id"] = Value(s.target);
            switch (*proto) {
                case Protocol::relational: n.operator_id = "nl2sql"; break;
                case Protocol::llm: n.operator_id = "nl2llm"; break;
                case Protocol::user: n.operator_id = "nl2u"; break;
                case Protocol::vector: {
                    n.operator_id = "nl2vec";
                    std::string coll;
                    for (const auto& e : ctx_.registry->subtree({s.target})) {
                        if (e.level == MetadataLevel::collection) {
                            coll = e.path.back();
                            break;
                        }
                    }
                    if (coll.empty()) return std::nullopt;
                    n.attributes["collection"] = Value(coll);
                    break;
                }
                case Protocol::web: return std::nullopt;
            }
            if (s.output_schema && (*proto == Protocol::llm || *proto == Protocol::user)) {
                n.attributes["output_schema"] = schema_to_value(*s.output_schema);
            }
            made.push_back(n);
            if (i == 0) {
                acc = n.node_id;
                continue;
            }
            PlanNode m;
            m.node_id = base + s.integrate + std::to_string(i);
            m.properties = b.properties;
            if (s.integrate == "in") {
                m.operator_id = "in_filter";
                m.attributes = Map{{"key", s.key}, {"member_key", s.key}};
            } else if (s.integrate == "join") {
                m.operator_id = "join";
                if (!s.key.empty()) {
                    m.attributes["left_key"] = Value(s.key);
                    m.attributes["right_key"] = Value(s.key);
                }
                if (!s.condition.empty()) m.attributes["condition"] = Value(s.condition);
            } else {
                m.operator_id = "union";
            }
            edges.push_back({acc, m.node_id, 0});
            edges.push_back({n.node_id, m.node_id, 1});
            acc = m.node_id;
            made.push_back(m);
        }
        std::vector<std::shared_ptr<const OperatorDescriptor>> descs;
        try {
            for (auto& n : made) {
                descs.push_back(ops_.get(n.operator_id));
                validate_attributes(*descs.back(), n.attributes);
                validate_properties(*descs.back(), n.properties);
            }
        } catch (const Error&) {
            return std::nullopt;
        }
        for (std::size_t i = 0; i < made.size(); ++i) add_node(made[i], *descs[i], {b.node_id, acc, depth});
        p_.edges.insert(p_.edges.end(), edges.begin(), edges.end());
        std::sort(p_.edges.begin(), p_.edges.end());
        set_coverage(b.node_id, subs);
        return acc;
    }

    // Single-source siblings of a breakdown answer only part of the question.
    void set_coverage(const std::string& b, const std::vector<ops::SubQuestion>& subs) {
        std::set<std::string> targets;
        for (const auto& s : subs) targets.insert(s.target);
        if (subs.size() < 2 || targets.size() < 2) return;
        auto it = origin_.find(b);
        if (it == origin_.end() || it->second.member_root != b || !p_.alternatives.count(it->second.group)) return;
        for (const auto& m : p_.alternatives.at(it->second.group)) {
            if (m == b) continue;
            auto& n = p_.nodes.at(m);
            if (n.operator_id != "nl2sql" && n.operator_id != "nl2llm") continue;
            const std::string sid = str_attr(n, "source_id");
            auto hits = std::count_if(subs.begin(), subs.end(), [&](const auto& s) { return s.target == sid; });
            n.properties["coverage"] = Value(static_cast<double>(hits) / static_cast<double>(subs.size()));
        }
    }
};

}  // namespace

DataPlan Planner::refine(DataPlan plan, int max_depth) const {
    Refiner(operators_, ctx_, plan).run(max_depth);
    return plan;
}

CostEstimate Planner::estimate_cost(const DataPlan& plan, const Objective& objective, const std::string& node) const {
    if (plan.nodes.empty()) return {};
    const std::string id = node.empty() ? plan.root : node;
    if (!plan.nodes.count(id)) fail(ErrorCode::not_found, "no node " + id + " in plan");
    Estimator est(plan, objective, model_, ctx_);
    auto e = est.estimate(id);
    if (!e) {
        fail(ErrorCode::infeasible, "no alternative below " + id + " meets the quality floor",
             {{"node", id}, {"quality_floor", objective.quality_floor}});
    }
    return *e;
}

DataPlan Planner::optimize(const DataPlan& in, const Objective& objective, const OptimizeOptions& options) const {
    if (in.nodes.empty()) return in;
    Estimator est(in, objective, model_, ctx_);

    std::set<std::string> traversed;
    std::function<std::string(const std::string&)> pick = [&](const std::string& id) -> std::string {
        if (!est.is_group(id)) return id;
        const auto& ranked = est.ranked(id);
        if (ranked.empty()) {
            fail(ErrorCode::infeasible,
                 "no alternative of group " + id + " meets quality floor " + std::to_string(objective.quality_floor),
                 {{"group", id}, {"quality_floor", objective.quality_floor}});
        }
        traversed.insert(id);
        return pick(ranked.front());
    };

    // Selection: keep the chosen member of every group, rewired to the
    // consumers of its group.
    auto resolved_inputs = [&](const std::string& id) {
        std::vector<PlanEdge> out;
        for (const auto& e : in.inputs_of(id)) out.push_back({pick(e.from), id, e.port});
        return out;
    };
    DataPlan out;
    out.root = pick(in.root);
    std::vector<std::string> stack{out.root};
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        if (out.nodes.count(n)) continue;
        out.nodes[n] = in.nodes.at(n);
        for (const auto& e : resolved_inputs(n)) {
            out.edges.push_back(e);
            stack.push_back(e.from);
        }
    }
    std::sort(out.edges.begin(), out.edges.end());

    std::vector<Fallback> fallbacks;
    if (options.fallbacks) {
        for (const auto& g : traversed) {
            const auto ranked = est.ranked(g);
            if (ranked.size() < 2) continue;
            Fallback f;
            f.group = g;
            f.chosen = pick(ranked[0]);
            f.next = pick(ranked[1]);
            if (out.nodes.count(f.next)) continue;
            std::vector<std::string> todo{f.next};
            while (!todo.empty()) {
                auto n = todo.back();
                todo.pop_back();
                if (out.nodes.count(n) || f.nodes.count(n)) continue;
                f.nodes[n] = in.nodes.at(n);
                for (const auto& e : resolved_inputs(n)) {
                    f.edges.push_back(e);
                    todo.push_back(e.from);
                }
            }
            std::sort(f.edges.begin(), f.edges.end());
            fallbacks.push_back(std::move(f));
        }
    }
    std::set<std::string> pinned;
    for (const auto& f : fallbacks) {
        for (const auto& e : f.edges) {
            if (out.nodes.count(e.from)) pinned.insert(e.from);
        }
    }

    std::map<std::string, std::string> alias;
    if (options.pushdown) {
        for (int guard = 0; guard < 10000 && push_once(out, in, pinned, alias); ++guard) {
        }
    }
    if (options.dedup) dedup(out, alias);
    if (options.parallel_groups) parallel_groups(out);
    if (options.operator_properties) {
        for (auto& [id, n] : out.nodes) {
            if (!kLlmOperators.count(n.operator_id)) continue;
            if (!n.properties.count("max_retries")) n.properties["max_retries"] = Value(std::int64_t{objective.max_retries.value_or(2)});
            if (!n.properties.count("cache")) n.properties["cache"] = Value(objective.cache.value_or(true));
        }
    }

    for (auto& f : fallbacks) {
        f.chosen = follow(alias, f.chosen);
        if (!out.nodes.count(f.chosen)) continue;
        bool ok = true;
        for (auto& e : f.edges) {
            if (!f.nodes.count(e.from)) e.from = follow(alias, e.from);
            ok = ok && (out.nodes.count(e.from) || f.nodes.count(e.from));
        }
        if (!ok) continue;
        // nodes that only feed the root through `chosen`
        std::set<std::string> other;
        std::vector<std::string> todo{out.root};
        while (!todo.empty()) {
            auto n = todo.back();
            todo.pop_back();
            if (n == f.chosen || !other.insert(n).second) continue;
            for (const auto& e : out.edges) {
                if (e.to == n) todo.push_back(e.from);
            }
        }
        std::set<std::string> reserve_inputs;
        for (const auto& e : f.edges) reserve_inputs.insert(e.from);
        for (const auto& n : closure(out, f.chosen)) {
            if (n == f.chosen || (!other.count(n) && !reserve_inputs.count(n))) f.members.push_back(n);
        }
        out.fallbacks.push_back(std::move(f));
    }
    return out;
}

Table Planner::explain(const DataPlan& plan, const Objective& objective) const {
    Table t;
    t.schema = Schema{{"node_id", DeclaredType::string, "", true},
                      {"operator_id", DeclaredType::string, "", true},
                      {"out_rows", DeclaredType::floating, "", false},
                      {"latency", DeclaredType::floating, "", false},
                      {"money", DeclaredType::floating, "", false},
                      {"quality", DeclaredType::floating, "", false}};
    Estimator est(plan, objective, model_, ctx_);
    for (const auto& id : plan.topological_order()) {
        Row r{{"node_id", Value(id)}, {"operator_id", Value(plan.nodes.at(id).operator_id)}};
        auto e = est.estimate(id);
        r["out_rows"] = e ? Value(e->out_rows) : Value();
        r["latency"] = e ? Value(e->latency) : Value();
        r["money"] = e ? Value(e->money) : Value();
        r["quality"] = e ? Value(e->quality) : Value();
        t.rows.push_back(std::move(r));
    }
    return t;
}

}  // namespace dil
