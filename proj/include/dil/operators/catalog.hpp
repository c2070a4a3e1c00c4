#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dil/core/table.hpp"
#include "dil/kernels/kernels.hpp"
#include "dil/registry/data_registry.hpp"
#include "dil/registry/operator_registry.hpp"
#include "dil/sources/catalog.hpp"

namespace dil::ops {

// What an operator may touch besides its input batch. nl2u also reads the
// pending answer (if any) for the node being resumed.
struct ExecContext {
    SourceCatalog* sources = nullptr;
    const DataRegistry* registry = nullptr;
    std::string profile_ns = "default";
    kernels::Policy policy = kernels::Policy::parallel;

    std::optional<Value> answer;  // set when resuming an nl2u node
    int answers_seen = 0;         // answers received for this node, including `answer`
};

inline constexpr int kMaxUserAnswers = 3;

// An nl2u node that needs the user: the executor turns this into a prompt
// message and suspends the node.
struct PendingPrompt {
    std::string question;
    Schema schema;
    std::vector<std::string> feedback;  // why the previous answer was rejected
};

struct OperatorResult {
    DataBatch output;
    std::optional<PendingPrompt> prompt;
    bool cache_hit = false;  // LLM cache or fresh user profile
};

// Built-in catalog, ordered by operator id.
std::vector<OperatorDescriptor> builtin_descriptors();
bool has_implementation(const std::string& operator_id);
// A registry holding the built-in catalog, with implementations bound.
std::unique_ptr<OperatorRegistry> bootstrap_registry();

// Validates attributes, properties and port arity, then runs the bound
// implementation. Abstract operators throw bad_request.
OperatorResult invoke(const OperatorDescriptor& descriptor, const DataBatch& input, const Map& attributes,
                      const Map& properties, ExecContext& ctx);
OperatorResult invoke(const OperatorRegistry& registry, const std::string& operator_id, const DataBatch& input,
                      const Map& attributes, const Map& properties, ExecContext& ctx);

// Metadata text placed in nl2sql prompts and the tables/columns the generated
// SQL may read. Falls back to the source's own snapshot when the registry
// holds nothing for it.
struct SqlContext {
    std::string description;
    SqlCatalog catalog;
};
SqlContext sql_context(const ExecContext& ctx, const std::string& source_id,
                       const std::optional<std::string>& collection_hint);

// Rows returned by query_breakdown.
struct SubQuestion {
    std::string sub_question;
    std::string target;
    std::string integrate;  // "", join, in, union
    std::string key;
    std::string condition;
    std::optional<Schema> output_schema;
};

Schema breakdown_schema();
std::vector<SubQuestion> parse_breakdown(const Table& t);
// One line per problem: unknown target, bad integrate, join without key or
// condition, unparseable condition or schema.
std::vector<std::string> verify_breakdown(const Table& t, const std::vector<std::string>& source_ids);

}  // namespace dil::ops
