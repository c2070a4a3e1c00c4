#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dil/operators/catalog.hpp"
#include "dil/planner/plan.hpp"

namespace dil {

struct CostEstimate {
    double out_rows = 0;
    double latency = 0;
    double money = 0;
    double quality = 0;

    bool operator==(const CostEstimate&) const = default;
};

nlohmann::json to_json(const CostEstimate& c);

// Every constant of the cost model. The defaults are the documented rule
// table; a "cost_model" object in the engine config overrides any of them.
struct CostModel {
    double default_rows = 100;
    double scan_latency = 10;
    double scan_latency_per_row = 0.01;
    double filter_selectivity = 0.33;
    double join_selectivity = 0.1;
    double in_selectivity = 0.5;
    double llm_rows = 10;
    double llm_latency = 100;
    double llm_money = 1;
    double llm_quality = 0.7;
    double user_rows = 1;
    double user_latency = 10000;
    double user_fresh_latency = 1;
    double user_quality = 0.9;
    double vector_latency = 20;
    double vector_quality = 0.8;
    double web_rows = 10;
    double web_latency = 1000;
    double web_quality = 0.6;

    static CostModel from_json(const nlohmann::json& j);  // missing keys keep defaults
    nlohmann::json to_json() const;
};

struct Objective {
    double quality_floor = 0.0;
    std::optional<int> max_retries;  // for LLM-backed nodes; 2 when unset
    std::optional<bool> cache;       // for LLM-backed nodes; true when unset

    static Objective from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct OptimizeOptions {
    bool pushdown = true;
    bool dedup = true;
    bool parallel_groups = true;
    bool operator_properties = true;
    bool fallbacks = true;
};

class Planner {
public:
    // ctx supplies the registry (row counts), the sources (profiles, and the
    // LLM for plan-time query_breakdown) and the profile namespace.
    Planner(const OperatorRegistry& operators, ops::ExecContext& ctx, CostModel model = {});

    DataPlan instantiate(const std::string& operator_id, const Map& attributes) const;

    // Expands every abstract/compound node into an alternatives group, one
    // subplan per applicable rule, until only physical leaves remain.
    DataPlan refine(DataPlan plan, int max_depth = 8) const;

    // Estimate of the subplan rooted at `node` (plan.root when empty). Groups
    // count as their best member under the objective.
    CostEstimate estimate_cost(const DataPlan& plan, const Objective& objective = {},
                               const std::string& node = "") const;

    // Picks one member per group, then applies the rewrites enabled in
    // `options`. The result has no alternatives.
    DataPlan optimize(const DataPlan& plan, const Objective& objective = {}, const OptimizeOptions& options = {}) const;

    // One row per node in topological order: node_id, operator_id, out_rows,
    // latency, money, quality (cumulative for the node's subplan).
    Table explain(const DataPlan& plan, const Objective& objective = {}) const;

    const CostModel& cost_model() const { return model_; }

private:
    const OperatorRegistry& operators_;
    ops::ExecContext& ctx_;
    CostModel model_;
};

// Attribute names a node's output is guaranteed to carry when non-empty, or
// nullopt when that cannot be known before execution.
std::optional<std::set<std::string>> infer_attributes(const DataPlan& plan, const std::string& node_id);

}  // namespace dil
