#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dil/core/table.hpp"

namespace dil {

struct AttributeSpec {
    std::string name;
    DeclaredType type = DeclaredType::any;
    std::string description;
    bool required = false;
    std::optional<List> allowed;  // enum constraint
    std::optional<double> min;    // numeric range constraint (inclusive)
    std::optional<double> max;
    std::optional<Value> default_value;

    bool operator==(const AttributeSpec&) const = default;
};

// Empty string when the value satisfies the spec's type and constraints,
// otherwise a one-line reason.
std::string check_attribute(const AttributeSpec& spec, const Value& v);

nlohmann::json to_json(const AttributeSpec& s);
AttributeSpec attribute_spec_from_json(const std::string& name, const nlohmann::json& j);

struct TemplateNode {
    std::string id;
    std::string operator_id;
    Map attributes;  // strings starting with '$' are bindings against the parent
    Map properties;

    bool operator==(const TemplateNode&) const = default;
};

struct TemplateEdge {
    std::string from;
    std::string to;
    int port = 0;

    bool operator==(const TemplateEdge&) const = default;
};

// One alternative subplan for an abstract or compound operator. A dynamic
// rule has no fixed template: the planner builds it at plan time (the
// "breakdown" rule runs the query_breakdown operator).
struct RefinementRule {
    std::string rule_id;
    std::vector<TemplateNode> nodes;
    std::vector<TemplateEdge> edges;
    std::string output;                 // template node whose output is the subplan's
    std::vector<std::string> needs;     // bindings that must resolve for the rule to apply
    int min_sources = 0;                // parent must name at least this many sources
    std::string dynamic;

    bool operator==(const RefinementRule&) const = default;
};

nlohmann::json to_json(const RefinementRule& r);
RefinementRule rule_from_json(const nlohmann::json& j);

enum class OperatorKind { abstract, compound, physical };

std::string_view to_string(OperatorKind k);
OperatorKind parse_operator_kind(std::string_view name);

struct OperatorDescriptor {
    std::string operator_id;
    OperatorKind kind = OperatorKind::physical;
    std::string description;
    std::map<std::string, AttributeSpec> attribute_schema;
    std::map<std::string, AttributeSpec> property_schema;
    int min_ports = 0;
    int max_ports = 0;  // -1: unbounded
    std::vector<RefinementRule> refinements;

    bool accepts_ports(std::size_t n) const;
    bool operator==(const OperatorDescriptor&) const = default;
};

nlohmann::json to_json(const OperatorDescriptor& d);
OperatorDescriptor operator_from_json(const nlohmann::json& j);

// Checks attributes against the descriptor's schema and fills defaults.
// Throws bad_request naming the offending AttributeSpec.
Map validate_attributes(const OperatorDescriptor& d, const Map& attributes);
Map validate_properties(const OperatorDescriptor& d, const Map& properties);

// Structural checks that do not need other operators: kind/refinement
// agreement, port range, defaults, template acyclicity. Throws bad_request.
void check_descriptor(const OperatorDescriptor& d);

class OperatorRegistry {
public:
    using BindingCheck = std::function<bool(const std::string& operator_id)>;

    // is_bound tells whether a physical operator has an implementation.
    explicit OperatorRegistry(BindingCheck is_bound);

    std::string register_operator(OperatorDescriptor descriptor);
    std::optional<OperatorDescriptor> find(const std::string& operator_id) const;
    std::shared_ptr<const OperatorDescriptor> get(const std::string& operator_id) const;  // throws not_found
    std::vector<OperatorDescriptor> list() const;                          // ordered by id
    std::vector<RefinementRule> list_refinements(const std::string& operator_id) const;
    std::size_t size() const;

    nlohmann::json to_json() const;
    // Loads descriptors on top of the current contents; ids already present
    // are replaced.
    void merge_json(const nlohmann::json& j);
    void save(const std::filesystem::path& file) const;

private:
    BindingCheck is_bound_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const OperatorDescriptor>> ops_;
};

}  // namespace dil
