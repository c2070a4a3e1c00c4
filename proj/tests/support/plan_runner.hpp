#pragma once

// Plain serial plan interpreter for tests: repeatedly runs any node whose
// inputs are all available, in node-id order. No caching, no concurrency.
// nl2u prompts are answered from a question -> answer map.

#include <map>
#include <stdexcept>
#include <string>

#include "dil/operators/catalog.hpp"
#include "dil/planner/plan.hpp"

namespace dil::testing {

struct RunOutcome {
    Table root;
    std::map<std::string, Table> outputs;
    int prompts = 0;
};

inline RunOutcome run_plan(const DataPlan& plan, const OperatorRegistry& operators, ops::ExecContext ctx,
                           const std::map<std::string, Value>& answers = {}) {
    if (!plan.alternatives.empty()) throw std::logic_error("run_plan needs a plan without alternatives");
    RunOutcome out;
    bool progress = true;
    while (out.outputs.size() < plan.nodes.size() && progress) {
        progress = false;
        for (const auto& [id, node] : plan.nodes) {
            if (out.outputs.count(id)) continue;
            std::map<int, std::string> from;
            for (const auto& e : plan.edges) {
                if (e.to == id) from[e.port] = e.from;
            }
            bool ready = true;
            for (const auto& [p, f] : from) ready = ready && out.outputs.count(f) > 0;
            if (!ready) continue;
            DataBatch in;
            for (const auto& [p, f] : from) in.tables.push_back(out.outputs.at(f));
            ops::ExecContext c = ctx;
            auto r = ops::invoke(operators, node.operator_id, in, node.attributes, node.properties, c);
            while (r.prompt) {
                ++out.prompts;
                auto it = answers.find(r.prompt->question);
                if (it == answers.end()) throw std::runtime_error("no scripted answer for: " + r.prompt->question);
                c.answer = it->second;
                c.answers_seen++;
                r = ops::invoke(operators, node.operator_id, in, node.attributes, node.properties, c);
            }
            out.outputs[id] = r.output.tables.at(0);
            progress = true;
        }
    }
    if (!out.outputs.count(plan.root)) throw std::runtime_error("plan did not reach its root");
    out.root = out.outputs.at(plan.root);
    return out;
}

}  // namespace dil::testing
