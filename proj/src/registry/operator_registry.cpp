#include "dil/registry/operator_registry.hpp"

#include <fstream>
#include <set>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"
#include "dil/registry/data_registry.hpp"

namespace dil {

std::string check_attribute(const AttributeSpec& spec, const Value& v) {
    if (v.is_null()) return spec.required ? "is required" : "";
    if (!conforms(v, spec.type)) {
        return "expected " + std::string(to_string(spec.type)) + ", got " + std::string(to_string(v.type()));
    }
    if (spec.allowed) {
        bool found = false;
        for (const auto& a : *spec.allowed) found = found || numeric_equal(a, v);
        if (!found) return "value " + serialize_value(v) + " is not one of " + serialize_value(Value(*spec.allowed));
    }
    if (auto n = v.number()) {
        if (spec.min && *n < *spec.min) return "value " + serialize_value(v) + " is below " + serialize_value(*spec.min);
        if (spec.max && *n > *spec.max) return "value " + serialize_value(v) + " is above " + serialize_value(*spec.max);
    }
    return "";
}

nlohmann::json to_json(const AttributeSpec& s) {
    nlohmann::json j = {{"type", std::string(to_string(s.type))}, {"required", s.required}};
    if (!s.description.empty()) j["description"] = s.description;
    if (s.allowed) j["enum"] = to_json(Value(*s.allowed));
    if (s.min) j["min"] = *s.min;
    if (s.max) j["max"] = *s.max;
    if (s.default_value) j["default"] = to_json(*s.default_value);
    return j;
}

AttributeSpec attribute_spec_from_json(const std::string& name, const nlohmann::json& j) {
    AttributeSpec s;
    s.name = name;
    if (j.is_string()) {
        s.type = parse_declared_type(j.get<std::string>());
        return s;
    }
    s.type = parse_declared_type(j.value("type", "any"));
    s.description = j.value("description", "");
    s.required = j.value("required", false);
    if (j.contains("enum")) s.allowed = from_json(j["enum"]).as_list();
    if (j.contains("min")) s.min = j["min"].get<double>();
    if (j.contains("max")) s.max = j["max"].get<double>();
    if (j.contains("default")) s.default_value = from_json(j["default"]);
    return s;
}

nlohmann::json to_json(const RefinementRule& r) {
    nlohmann::json j = {{"rule_id", r.rule_id}};
    if (!r.dynamic.empty()) j["dynamic"] = r.dynamic;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : r.nodes) {
        nlohmann::json node = {{"id", n.id}, {"operator_id", n.operator_id}, {"attributes", to_json(Value(n.attributes))}};
        if (!n.properties.empty()) node["properties"] = to_json(Value(n.properties));
        j["nodes"].push_back(node);
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& e : r.edges) j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"port", e.port}});
    if (!r.output.empty()) j["output"] = r.output;
    if (!r.needs.empty()) j["requires"] = r.needs;
    if (r.min_sources) j["min_sources"] = r.min_sources;
    return j;
}

RefinementRule rule_from_json(const nlohmann::json& j) {
    RefinementRule r;
    r.rule_id = j.at("rule_id").get<std::string>();
    r.dynamic = j.value("dynamic", "");
    if (j.contains("nodes")) {
        for (const auto& n : j["nodes"]) {
            TemplateNode t;
            t.id = n.at("id").get<std::string>();
            t.operator_id = n.at("operator_id").get<std::string>();
            if (n.contains("attributes")) t.attributes = from_json(n["attributes"]).as_map();
            if (n.contains("properties")) t.properties = from_json(n["properties"]).as_map();
            r.nodes.push_back(std::move(t));
        }
    }
    if (j.contains("edges")) {
        for (const auto& e : j["edges"]) {
            r.edges.push_back({e.at("from").get<std::string>(), e.at("to").get<std::string>(), e.value("port", 0)});
        }
    }
    r.output = j.value("output", r.nodes.size() == 1 ? r.nodes[0].id : "");
    if (j.contains("requires")) r.needs = j["requires"].get<std::vector<std::string>>();
    r.min_sources = j.value("min_sources", 0);
    return r;
}

std::string_view to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::abstract: return "abstract";
        case OperatorKind::compound: return "compound";
        case OperatorKind::physical: return "physical";
    }
    return "physical";
}

OperatorKind parse_operator_kind(std::string_view name) {
    for (auto k : {OperatorKind::abstract, OperatorKind::compound, OperatorKind::physical}) {
        if (to_string(k) == name) return k;
    }
    fail(ErrorCode::bad_request, "unknown operator kind \"" + std::string(name) + "\"");
}

bool OperatorDescriptor::accepts_ports(std::size_t n) const {
    if (n < static_cast<std::size_t>(min_ports)) return false;
    return max_ports < 0 || n <= static_cast<std::size_t>(max_ports);
}

nlohmann::json to_json(const OperatorDescriptor& d) {
    nlohmann::json attrs = nlohmann::json::object(), props = nlohmann::json::object();
    for (const auto& [n, s] : d.attribute_schema) attrs[n] = to_json(s);
    for (const auto& [n, s] : d.property_schema) props[n] = to_json(s);
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : d.refinements) rules.push_back(to_json(r));
    return {{"operator_id", d.operator_id},
            {"kind", std::string(to_string(d.kind))},
            {"description", d.description},
            {"attribute_schema", attrs},
            {"property_schema", props},
            {"input_ports", {{"min", d.min_ports}, {"max", d.max_ports < 0 ? nlohmann::json(nullptr) : nlohmann::json(d.max_ports)}}},
            {"refinements", rules}};
}

OperatorDescriptor operator_from_json(const nlohmann::json& j) {
    try {
        OperatorDescriptor d;
        d.operator_id = j.at("operator_id").get<std::string>();
        d.kind = parse_operator_kind(j.at("kind").get<std::string>());
        d.description = j.value("description", "");
        if (j.contains("attribute_schema")) {
            for (auto it = j["attribute_schema"].begin(); it != j["attribute_schema"].end(); ++it) {
                d.attribute_schema.emplace(it.key(), attribute_spec_from_json(it.key(), it.value()));
            }
        }
        if (j.contains("property_schema")) {
            for (auto it = j["property_schema"].begin(); it != j["property_schema"].end(); ++it) {
                d.property_schema.emplace(it.key(), attribute_spec_from_json(it.key(), it.value()));
            }
        }
        if (j.contains("input_ports")) {
            const auto& p = j["input_ports"];
            d.min_ports = p.value("min", 0);
            d.max_ports = p.contains("max") && !p["max"].is_null() ? p["max"].get<int>() : -1;
        }
        if (j.contains("refinements")) {
            for (const auto& r : j["refinements"]) d.refinements.push_back(rule_from_json(r));
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, std::string("malformed operator descriptor: ") + e.what());
    }
}

namespace {

Map validate_against(const std::string& what, const std::string& op, const std::map<std::string, AttributeSpec>& schema,
                     const Map& given) {
    for (const auto& [name, _] : given) {
        if (!schema.count(name)) {
            fail(ErrorCode::bad_request, "operator " + op + ": unknown " + what + " \"" + name + "\"",
                 {{"operator_id", op}, {what, name}});
        }
    }
    Map out;
    for (const auto& [name, spec] : schema) {
        auto it = given.find(name);
        Value v = it != given.end() ? it->second : spec.default_value.value_or(Value());
        if (auto why = check_attribute(spec, v); !why.empty()) {
            fail(ErrorCode::bad_request, "operator " + op + ": " + what + " \"" + name + "\" " + why,
                 {{"operator_id", op}, {what, name}, {"spec", to_json(spec)}});
        }
        if (!v.is_null()) out.emplace(name, std::move(v));
    }
    return out;
}

}  // namespace

Map validate_attributes(const OperatorDescriptor& d, const Map& attributes) {
    return validate_against("attribute", d.operator_id, d.attribute_schema, attributes);
}

Map validate_properties(const OperatorDescriptor& d, const Map& properties) {
    return validate_against("property", d.operator_id, d.property_schema, properties);
}

void check_descriptor(const OperatorDescriptor& d) {
    const std::string& id = d.operator_id;
    if (id.empty()) fail(ErrorCode::bad_request, "operator_id must be non-empty");
    if (d.kind == OperatorKind::physical && !d.refinements.empty()) {
        fail(ErrorCode::bad_request, "physical operator " + id + " must not declare refinements");
    }
    if (d.kind != OperatorKind::physical && d.refinements.empty()) {
        fail(ErrorCode::bad_request, std::string(to_string(d.kind)) + " operator " + id + " needs at least one refinement");
    }
    if (d.min_ports < 0 || (d.max_ports >= 0 && d.max_ports < d.min_ports)) {
        fail(ErrorCode::bad_request, "operator " + id + ": invalid input port range");
    }
    for (const auto* schema : {&d.attribute_schema, &d.property_schema}) {
        for (const auto& [name, spec] : *schema) {
            if (spec.name != name) fail(ErrorCode::bad_request, "operator " + id + ": spec name mismatch for " + name);
            if (spec.default_value) {
                if (auto why = check_attribute(spec, *spec.default_value); !why.empty()) {
                    fail(ErrorCode::bad_request, "operator " + id + ": default of \"" + name + "\" " + why);
                }
            }
        }
    }
    std::set<std::string> rule_ids;
    for (const auto& r : d.refinements) {
        if (!rule_ids.insert(r.rule_id).second) {
            fail(ErrorCode::bad_request, "operator " + id + ": duplicate rule " + r.rule_id);
        }
        if (!r.dynamic.empty()) continue;
        if (r.nodes.empty()) fail(ErrorCode::bad_request, "rule " + r.rule_id + " has an empty template");
        std::map<std::string, std::vector<std::string>> succ;
        std::map<std::string, int> indeg;
        for (const auto& n : r.nodes) {
            if (!indeg.emplace(n.id, 0).second) {
                fail(ErrorCode::bad_request, "rule " + r.rule_id + ": duplicate template node " + n.id);
            }
        }
        for (const auto& e : r.edges) {
            if (!indeg.count(e.from) || !indeg.count(e.to)) {
                fail(ErrorCode::bad_request, "rule " + r.rule_id + ": edge names an unknown template node");
            }
            succ[e.from].push_back(e.to);
            indeg[e.to]++;
        }
        if (!indeg.count(r.output)) fail(ErrorCode::bad_request, "rule " + r.rule_id + ": unknown output node");
        std::vector<std::string> ready;
        for (const auto& [n, k] : indeg) {
            if (k == 0) ready.push_back(n);
        }
        std::size_t seen = 0;
        while (!ready.empty()) {
            auto n = ready.back();
            ready.pop_back();
            ++seen;
            for (const auto& s : succ[n]) {
                if (--indeg[s] == 0) ready.push_back(s);
            }
        }
        if (seen != r.nodes.size()) fail(ErrorCode::bad_request, "rule " + r.rule_id + ": template is not a DAG");
    }
}

OperatorRegistry::OperatorRegistry(BindingCheck is_bound) : is_bound_(std::move(is_bound)) {}

std::string OperatorRegistry::register_operator(OperatorDescriptor descriptor) {
    check_descriptor(descriptor);
    if (descriptor.kind == OperatorKind::physical && !(is_bound_ && is_bound_(descriptor.operator_id))) {
        fail(ErrorCode::bad_request, "physical operator " + descriptor.operator_id + " has no bound implementation");
    }
    std::lock_guard lock(mu_);
    if (ops_.count(descriptor.operator_id)) {
        fail(ErrorCode::conflict, "operator \"" + descriptor.operator_id + "\" is already registered");
    }
    std::string id = descriptor.operator_id;
    ops_.emplace(id, std::make_shared<const OperatorDescriptor>(std::move(descriptor)));
    return id;
}

std::optional<OperatorDescriptor> OperatorRegistry::find(const std::string& operator_id) const {
    std::lock_guard lock(mu_);
    auto it = ops_.find(operator_id);
    if (it == ops_.end()) return std::nullopt;
    return *it->second;
}

std::shared_ptr<const OperatorDescriptor> OperatorRegistry::get(const std::string& operator_id) const {
    std::lock_guard lock(mu_);
    auto it = ops_.find(operator_id);
    if (it == ops_.end()) fail(ErrorCode::not_found, "unknown operator \"" + operator_id + "\"");
    return it->second;
}

std::vector<OperatorDescriptor> OperatorRegistry::list() const {
    std::lock_guard lock(mu_);
    std::vector<OperatorDescriptor> out;
    for (const auto& [_, d] : ops_) out.push_back(*d);
    return out;
}

std::vector<RefinementRule> OperatorRegistry::list_refinements(const std::string& operator_id) const {
    return get(operator_id)->refinements;
}

std::size_t OperatorRegistry::size() const {
    std::lock_guard lock(mu_);
    return ops_.size();
}

nlohmann::json OperatorRegistry::to_json() const {
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& d : list()) ops.push_back(dil::to_json(d));
    return {{"version", 1}, {"operators", ops}};
}

void OperatorRegistry::merge_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("operators") || !j["operators"].is_array()) {
        fail(ErrorCode::bad_request, "operator registry document needs an \"operators\" array");
    }
    std::vector<OperatorDescriptor> loaded;
    for (const auto& o : j["operators"]) {
        auto d = operator_from_json(o);
        check_descriptor(d);
        if (d.kind == OperatorKind::physical && !(is_bound_ && is_bound_(d.operator_id))) {
            fail(ErrorCode::bad_request, "physical operator " + d.operator_id + " has no bound implementation");
        }
        loaded.push_back(std::move(d));
    }
    std::lock_guard lock(mu_);
    for (auto& d : loaded) {
        std::string id = d.operator_id;
        ops_[id] = std::make_shared<const OperatorDescriptor>(std::move(d));
    }
}

void OperatorRegistry::save(const std::filesystem::path& file) const { atomic_write(file, to_json().dump(2) + "\n"); }

}  // namespace dil
