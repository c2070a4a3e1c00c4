#include "dil/operators/catalog.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <unordered_set>

#include "dil/core/codec.hpp"
#include "dil/core/expression.hpp"
#include "dil/core/schema.hpp"
#include "dil/error.hpp"
#include "dil/operators/relational.hpp"
#include "dil/registry/embedding.hpp"

namespace dil::ops {

namespace {

AttributeSpec spec(std::string name, DeclaredType type, std::string description, bool required = false) {
    AttributeSpec s;
    s.name = std::move(name);
    s.type = type;
    s.description = std::move(description);
    s.required = required;
    return s;
}

AttributeSpec with_default(AttributeSpec s, Value v) {
    s.default_value = std::move(v);
    return s;
}

AttributeSpec ranged(AttributeSpec s, std::optional<double> lo, std::optional<double> hi) {
    s.min = lo;
    s.max = hi;
    return s;
}

std::map<std::string, AttributeSpec> specs(std::initializer_list<AttributeSpec> list) {
    std::map<std::string, AttributeSpec> m;
    for (const auto& s : list) m.emplace(s.name, s);
    return m;
}

std::map<std::string, AttributeSpec> shared_properties() {
    using T = DeclaredType;
    return specs({
        spec("cache", T::boolean, "use the LLM and node caches"),
        ranged(spec("max_retries", T::integer, "LLM re-asks after a verification failure"), 0, std::nullopt),
        spec("model", T::string, "backend model name"),
        ranged(spec("temperature", T::floating, "sampling temperature"), 0, 2),
        ranged(spec("ttl_seconds", T::integer, "freshness of stored user answers"), 0, std::nullopt),
        ranged(spec("coverage", T::floating, "share of the question this subplan answers"), 0, 1),
        ranged(spec("parallel_group", T::integer, "independent branch this node belongs to"), 0, std::nullopt),
    });
}

OperatorDescriptor physical(std::string id, std::string description, std::map<std::string, AttributeSpec> attrs,
                            int min_ports, int max_ports) {
    OperatorDescriptor d;
    d.operator_id = std::move(id);
    d.kind = OperatorKind::physical;
    d.description = std::move(description);
    d.attribute_schema = std::move(attrs);
    d.property_schema = shared_properties();
    d.min_ports = min_ports;
    d.max_ports = max_ports;
    return d;
}

TemplateNode tnode(std::string id, std::string op, Map attrs) {
    return TemplateNode{std::move(id), std::move(op), std::move(attrs), {}};
}

// ---- attribute helpers ----

const Value* attr(const Map& m, std::string_view name) {
    auto it = m.find(name);
    return it == m.end() || it->second.is_null() ? nullptr : &it->second;
}

std::string str(const Map& m, std::string_view name, std::string fallback = "") {
    const Value* v = attr(m, name);
    return v ? v->as_string() : fallback;
}

std::optional<std::string> opt_str(const Map& m, std::string_view name) {
    const Value* v = attr(m, name);
    if (!v) return std::nullopt;
    return v->as_string();
}

std::vector<std::string> str_list(const Map& m, std::string_view name) {
    std::vector<std::string> out;
    if (const Value* v = attr(m, name)) {
        for (const auto& e : v->as_list()) out.push_back(e.as_string());
    }
    return out;
}

std::optional<Schema> opt_schema(const Map& m, std::string_view name) {
    const Value* v = attr(m, name);
    if (!v) return std::nullopt;
    auto s = schema_from_value(*v);
    if (s.empty()) return std::nullopt;
    return s;
}

SourceCatalog& need_sources(const ExecContext& ctx, const std::string& op) {
    if (!ctx.sources) fail(ErrorCode::internal, op + " needs a source catalog");
    return *ctx.sources;
}

const Table& port(const DataBatch& in, std::size_t i) { return in.tables.at(i); }

OperatorResult single(Table t) { return OperatorResult{DataBatch::single(std::move(t)), std::nullopt, false}; }

// ---- implementations ----

using Impl = std::function<OperatorResult(const DataBatch&, const Map&, const Map&, ExecContext&)>;

OperatorResult run_project(const DataBatch& in, const Map& a, const Map&, ExecContext&) {
    std::map<std::string, std::string> rename;
    if (const Value* r = attr(a, "rename")) {
        for (const auto& [k, v] : r->as_map()) rename.emplace(k, v.as_string());
    }
    return single(project(port(in, 0), str_list(a, "columns"), rename));
}

OperatorResult run_filter(const DataBatch& in, const Map& a, const Map&, ExecContext& ctx) {
    return single(filter(port(in, 0), parse_expression(str(a, "predicate")), ctx.policy));
}

OperatorResult run_join(const DataBatch& in, const Map& a, const Map&, ExecContext& ctx) {
    JoinOptions o;
    o.left_key = opt_str(a, "left_key");
    o.right_key = opt_str(a, "right_key");
    if (auto c = opt_str(a, "condition")) o.condition = parse_expression(*c);
    o.kind = str(a, "kind", "inner") == "left" ? JoinKind::left : JoinKind::inner;
    return single(join(port(in, 0), port(in, 1), o, ctx.policy));
}

OperatorResult run_in_filter(const DataBatch& in, const Map& a, const Map&, ExecContext& ctx) {
    auto key = str(a, "key");
    return single(in_filter(port(in, 0), port(in, 1), key, str(a, "member_key", key), ctx.policy));
}

OperatorResult run_union(const DataBatch& in, const Map& a, const Map&, ExecContext& ctx) {
    const Value* d = attr(a, "distinct");
    return single(union_all(in.tables, d && d->as_bool(), ctx.policy));
}

OperatorResult run_sort_limit(const DataBatch& in, const Map& a, const Map&, ExecContext&) {
    std::vector<SortKey> by;
    for (const auto& e : attr(a, "by")->as_list()) {
        if (e.is_string()) {
            by.push_back({e.as_string(), false});
            continue;
        }
        const Value* k = e.find("key");
        if (!k) fail(ErrorCode::bad_request, "sort_limit: each \"by\" entry needs a key");
        const Value* desc = e.find("desc");
        by.push_back({k->as_string(), desc && desc->as_bool()});
    }
    std::optional<std::int64_t> limit;
    if (const Value* l = attr(a, "limit")) limit = l->as_int();
    const Value* off = attr(a, "offset");
    return single(sort_limit(port(in, 0), by, limit, off ? off->as_int() : 0));
}

OperatorResult run_group_agg(const DataBatch& in, const Map& a, const Map&, ExecContext&) {
    std::vector<Aggregate> aggs;
    for (const auto& e : attr(a, "aggs")->as_list()) {
        const Value* fn = e.find("fn");
        if (!fn) fail(ErrorCode::bad_request, "group_agg: each aggregate needs \"fn\"");
        Aggregate g;
        g.fn = parse_agg_fn(fn->as_string());
        if (const Value* on = e.find("on"); on && !on->is_null()) g.on = on->as_string();
        if (g.on.empty() && g.fn != AggFn::count) fail(ErrorCode::bad_request, "group_agg: " + fn->as_string() + " needs \"on\"");
        if (const Value* as = e.find("as"); as && !as->is_null()) {
            g.as = as->as_string();
        } else {
            g.as = g.on.empty() ? fn->as_string() : fn->as_string() + "_" + g.on;
        }
        aggs.push_back(std::move(g));
    }
    return single(group_agg(port(in, 0), str_list(a, "keys"), aggs));
}

OperatorResult run_extract_regex(const DataBatch& in, const Map& a, const Map&, ExecContext&) {
    return single(extract_regex(port(in, 0), str(a, "column"), str(a, "pattern"), str(a, "as", "extracted")));
}

OperatorResult run_extract_dictionary(const DataBatch& in, const Map& a, const Map&, ExecContext&) {
    return single(extract_dictionary(port(in, 0), str(a, "column"), str_list(a, "dictionary"), str(a, "as", "extracted")));
}

OperatorResult run_nl2sql(const DataBatch&, const Map& a, const Map& p, ExecContext& ctx) {
    auto& sources = need_sources(ctx, "nl2sql");
    const std::string sid = str(a, "source_id");
    auto db = sources.relational(sid);
    auto llm = sources.llm_for(sid);
    auto sc = sql_context(ctx, sid, opt_str(a, "collection_hint"));

    PromptRequest req;
    req.task = "nl2sql";
    req.question = str(a, "question");
    req.schema = {ColumnSpec{"sql", DeclaredType::string, "one read-only SQL SELECT statement", true}};
    req.sections.push_back({"Source " + sid, sc.description});
    auto verifier = [&](const Table& t) {
        std::vector<std::string> problems;
        if (t.rows.size() != 1) {
            problems.push_back("expected exactly one row with the SQL statement, got " + std::to_string(t.rows.size()));
            return problems;
        }
        const Value* sql = t.rows[0].find("sql") == t.rows[0].end() ? nullptr : &t.rows[0].at("sql");
        if (!sql || !sql->is_string()) {
            problems.push_back("missing sql");
            return problems;
        }
        for (const auto& v : db->verify(sql->as_string(), sc.catalog)) problems.push_back(v.kind + ": " + v.detail);
        return problems;
    };
    auto r = run_llm(llm->backend(), sources.cache_ptr().get(), std::move(req), p, verifier);
    OperatorResult out;
    out.output = db->query(r.table.rows.at(0).at("sql").as_string());
    out.cache_hit = r.cache_hit;
    return out;
}

OperatorResult run_nl2llm(const DataBatch&, const Map& a, const Map& p, ExecContext& ctx) {
    auto& sources = need_sources(ctx, "nl2llm");
    auto llm = attr(a, "source_id") ? sources.llm(str(a, "source_id")) : sources.default_llm();
    OperatorResult out;
    out.output = llm->query(str(a, "question"), opt_schema(a, "output_schema"), p, &out.cache_hit);
    return out;
}

OperatorResult run_nl2u(const DataBatch&, const Map& a, const Map& p, ExecContext& ctx) {
    auto& sources = need_sources(ctx, "nl2u");
    const std::string question = str(a, "question");
    Schema schema = opt_schema(a, "output_schema").value_or(auto_schema(normalize_whitespace(question)));
    OperatorResult out;
    if (!ctx.answer) {
        if (auto e = sources.profiles().lookup_fresh(ctx.profile_ns, question)) {
            out.output = DataBatch::single(e->value);
            out.cache_hit = true;
            return out;
        }
        out.prompt = PendingPrompt{question, schema, {}};
        return out;
    }
    auto parsed = parse_user_answer(*ctx.answer, schema);
    if (!parsed.report.ok()) {
        if (ctx.answers_seen >= kMaxUserAnswers) {
            fail(ErrorCode::verification_failed,
                 "user answer rejected " + std::to_string(ctx.answers_seen) + " times: " + parsed.report.render(),
                 {{"report", parsed.report.to_json()}, {"attempts", ctx.answers_seen}});
        }
        PendingPrompt again{question, schema, {}};
        for (const auto& v : parsed.report.violations) {
            again.feedback.push_back("row " + std::to_string(v.row) + ": " + v.attribute + ": " + v.detail);
        }
        out.prompt = std::move(again);
        return out;
    }
    std::int64_t ttl = kDefaultProfileTtl;
    if (const Value* s = attr(a, "source_id")) ttl = sources.user_ttl(s->as_string());
    if (const Value* t = attr(p, "ttl_seconds")) ttl = t->as_int();
    sources.profiles().store(ctx.profile_ns, question, parsed.table, ttl);
    out.output = DataBatch::single(std::move(parsed.table));
    return out;
}

OperatorResult run_nl2vec(const DataBatch& in, const Map& a, const Map&, ExecContext& ctx) {
    auto& sources = need_sources(ctx, "nl2vec");
    auto store = sources.vector(str(a, "source_id"));
    const std::string collection = str(a, "collection");
    const std::int64_t k = attr(a, "k")->as_int();
    auto question = opt_str(a, "question");
    auto column = opt_str(a, "column");
    if (question.has_value() == column.has_value()) {
        fail(ErrorCode::bad_request, "nl2vec needs exactly one of \"question\" and \"column\"");
    }
    if (question) {
        if (!in.tables.empty()) fail(ErrorCode::bad_request, "nl2vec in question mode takes no input");
        return single(store->query(collection, embed(*question), k, ctx.policy).tables.at(0));
    }
    if (in.tables.size() != 1) fail(ErrorCode::bad_request, "nl2vec in column mode takes one input table");
    Table out;
    std::unordered_set<std::string> seen;
    for (const auto& row : port(in, 0).rows) {
        auto it = row.find(*column);
        if (it == row.end() || !it->second.is_string()) continue;
        auto hits = store->query(collection, embed(it->second.as_string()), k, ctx.policy);
        for (auto& hit : hits.tables.at(0).rows) {
            Row payload = hit;
            payload.erase("_score");
            if (seen.insert(serialize_value(Value(payload))).second) out.rows.push_back(std::move(hit));
        }
    }
    return single(std::move(out));
}

OperatorResult run_web_extract(const DataBatch&, const Map& a, const Map& p, ExecContext& ctx) {
    auto& sources = need_sources(ctx, "web_extract");
    auto web = sources.web(str(a, "source_id"));
    auto schema = opt_schema(a, "output_schema");
    if (!schema) fail(ErrorCode::bad_request, "web_extract needs a non-empty output_schema");
    return OperatorResult{web->extract(str(a, "key"), *schema, p), std::nullopt, false};
}

std::vector<std::string> breakdown_sources(const Map& a, const ExecContext& ctx) {
    auto ids = str_list(a, "source_ids");
    if (!ids.empty() || !ctx.registry) return ids;
    for (const auto& s : ctx.registry->list_sources()) ids.push_back(s.source_id);
    return ids;
}

OperatorResult run_query_breakdown(const DataBatch&, const Map& a, const Map& p, ExecContext& ctx) {
    auto& sources = need_sources(ctx, "query_breakdown");
    auto ids = breakdown_sources(a, ctx);
    std::string listing;
    for (const auto& id : ids) {
        std::string line = "- " + id;
        if (sources.has(id)) line += " (" + std::string(to_string(sources.descriptor(id).protocol)) + ")";
        if (ctx.registry) {
            if (auto e = ctx.registry->entry({id})) line += ": " + e->description;
        }
        listing += line + "\n";
    }
    PromptRequest req;
    req.task = "query_breakdown";
    req.question = str(a, "question");
    req.schema = breakdown_schema();
    req.sections.push_back({"Sources", listing});
    auto r = run_llm(sources.default_llm()->backend(), sources.cache_ptr().get(), std::move(req), p,
                     [&](const Table& t) { return verify_breakdown(t, ids); });
    OperatorResult out;
    out.output = DataBatch::single(std::move(r.table));
    out.cache_hit = r.cache_hit;
    return out;
}

const std::map<std::string, Impl>& implementations() {
    static const std::map<std::string, Impl> impls = {
        {"project", run_project},
        {"filter", run_filter},
        {"join", run_join},
        {"in_filter", run_in_filter},
        {"union", run_union},
        {"sort_limit", run_sort_limit},
        {"group_agg", run_group_agg},
        {"extract_regex", run_extract_regex},
        {"extract_dictionary", run_extract_dictionary},
        {"nl2sql", run_nl2sql},
        {"nl2llm", run_nl2llm},
        {"nl2u", run_nl2u},
        {"nl2vec", run_nl2vec},
        {"web_extract", run_web_extract},
        {"query_breakdown", run_query_breakdown},
    };
    return impls;
}

}  // namespace

Schema breakdown_schema() {
    return {
        ColumnSpec{"sub_question", DeclaredType::string, "a question one source can answer", true},
        ColumnSpec{"target", DeclaredType::string, "source_id that answers it", true},
        ColumnSpec{"integrate", DeclaredType::string, "join, in or union with the rows so far", false},
        ColumnSpec{"key", DeclaredType::string, "attribute used to integrate", false},
        ColumnSpec{"condition", DeclaredType::string, "join condition; t1 names this sub-question's rows", false},
        ColumnSpec{"output_schema", DeclaredType::map, "attributes the answer should have", false},
    };
}

std::vector<SubQuestion> parse_breakdown(const Table& t) {
    std::vector<SubQuestion> out;
    for (const auto& r : t.rows) {
        SubQuestion q;
        q.sub_question = str(r, "sub_question");
        q.target = str(r, "target");
        q.integrate = str(r, "integrate");
        q.key = str(r, "key");
        q.condition = str(r, "condition");
        q.output_schema = opt_schema(r, "output_schema");
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<std::string> verify_breakdown(const Table& t, const std::vector<std::string>& source_ids) {
    std::vector<std::string> problems;
    const std::set<std::string> known(source_ids.begin(), source_ids.end());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const Row& r = t.rows[i];
        const std::string at = "row " + std::to_string(i) + ": ";
        const Value* target = attr(r, "target");
        if (target && target->is_string() && !known.count(target->as_string())) {
            problems.push_back(at + "target \"" + target->as_string() + "\" is not a registered source");
        }
        const Value* integrate = attr(r, "integrate");
        std::string how = integrate && integrate->is_string() ? integrate->as_string() : "";
        if (i > 0 && how != "join" && how != "in" && how != "union") {
            problems.push_back(at + "integrate must be one of join, in, union");
        }
        const Value* key = attr(r, "key");
        const Value* cond = attr(r, "condition");
        if (i > 0 && how == "in" && !key) problems.push_back(at + "integrate \"in\" needs a key");
        if (i > 0 && how == "join" && !key && !cond) problems.push_back(at + "integrate \"join\" needs a key or a condition");
        if (cond && cond->is_string()) {
            try {
                parse_expression(cond->as_string());
            } catch (const Error& e) {
                problems.push_back(at + "condition: " + e.what());
            }
        }
        if (const Value* s = attr(r, "output_schema")) {
            try {
                schema_from_value(*s);
            } catch (const Error& e) {
                problems.push_back(at + "output_schema: " + e.what());
            }
        }
    }
    return problems;
}

SqlContext sql_context(const ExecContext& ctx, const std::string& source_id,
                       const std::optional<std::string>& collection_hint) {
    SqlContext out;
    std::vector<MetadataEntry> entries;
    if (ctx.registry) entries = ctx.registry->subtree({source_id});
    bool any_collection = false;
    for (const auto& e : entries) any_collection = any_collection || e.level == MetadataLevel::collection;
    if (!any_collection && ctx.sources) {
        auto desc = ctx.sources->descriptor(source_id);
        entries = build_metadata(desc, ctx.sources->snapshot(desc));
    }
    for (const auto& e : entries) {
        if (e.level == MetadataLevel::collection) {
            const auto& table = e.path.back();
            if (collection_hint && table != *collection_hint) continue;
            out.catalog[table];
            out.description += "table " + table;
            if (e.statistics.row_count) out.description += " (" + std::to_string(*e.statistics.row_count) + " rows)";
            if (!e.description.empty()) out.description += ": " + e.description;
            out.description += "\n";
        } else if (e.level == MetadataLevel::attribute && e.path.size() == 4) {
            const auto& table = e.path[2];
            if (collection_hint && table != *collection_hint) continue;
            out.catalog[table].insert(e.path[3]);
            out.description += "  - " + e.path[3];
            if (!e.samples.empty()) {
                out.description += " e.g. ";
                for (std::size_t i = 0; i < e.samples.size(); ++i) {
                    out.description += (i ? ", " : "") + serialize_value(e.samples[i]);
                }
            }
            out.description += "\n";
        }
    }
    return out;
}

std::vector<OperatorDescriptor> builtin_descriptors() {
    using T = DeclaredType;
    std::vector<OperatorDescriptor> out;

    out.push_back(physical("project", "keep and rename columns of one table",
                           specs({spec("columns", T::list, "output columns in order", true),
                                  spec("rename", T::map, "old name -> new name")}),
                           1, 1));
    out.push_back(physical("filter", "rows where a predicate holds",
                           specs({spec("predicate", T::string, "predicate expression", true)}), 1, 1));
    {
        auto kind = with_default(spec("kind", T::string, "inner or left"), Value("inner"));
        kind.allowed = List{Value("inner"), Value("left")};
        out.push_back(physical("join", "equality or condition join of two tables",
                               specs({spec("left_key", T::string, "key attribute of the left table"),
                                      spec("right_key", T::string, "key attribute of the right table"),
                                      spec("condition", T::string, "predicate over t0 (left) and t1 (right)"), kind}),
                               2, 2));
    }
    out.push_back(physical("in_filter", "semi-join: rows whose key appears in the second table",
                           specs({spec("key", T::string, "key attribute of the first table", true),
                                  spec("member_key", T::string, "attribute of the second table (default: key)")}),
                           2, 2));
    out.push_back(physical("union", "concatenate tables in port order",
                           specs({with_default(spec("distinct", T::boolean, "drop repeated rows"), Value(false))}), 1,
                           -1));
    out.push_back(physical("sort_limit", "stable multi-key sort, then offset and limit",
                           specs({spec("by", T::list, "sort keys: names or {key, desc}", true),
                                  ranged(spec("limit", T::integer, "rows to keep"), 0, std::nullopt),
                                  ranged(with_default(spec("offset", T::integer, "rows to skip"), Value(0)), 0,
                                         std::nullopt)}),
                           1, 1));
    out.push_back(physical("group_agg", "group by keys and aggregate",
                           specs({with_default(spec("keys", T::list, "grouping attributes"), Value(List{})),
                                  spec("aggs", T::list, "aggregates {fn, on, as}", true)}),
                           1, 1));
    auto extract_attrs = [&](AttributeSpec variant) {
        return specs({spec("column", T::string, "text attribute to read", true), std::move(variant),
                      with_default(spec("as", T::string, "output attribute"), Value("extracted"))});
    };
    out.push_back(physical("extract_regex", "regex capture from a text column",
                           extract_attrs(spec("pattern", T::string, "ECMAScript regex", true)), 1, 1));
    out.push_back(physical("extract_dictionary", "first dictionary term found in a text column",
                           extract_attrs(spec("dictionary", T::list, "terms to look for", true)), 1, 1));
    {
        OperatorDescriptor d;
        d.operator_id = "extraction";
        d.kind = OperatorKind::abstract;
        d.description = "extract a value from a text column";
        d.attribute_schema = specs({spec("column", T::string, "text attribute to read", true),
                                    spec("pattern", T::string, "ECMAScript regex"),
                                    spec("dictionary", T::list, "terms to look for"),
                                    with_default(spec("as", T::string, "output attribute"), Value("extracted"))});
        d.property_schema = shared_properties();
        d.min_ports = d.max_ports = 1;
        RefinementRule regex{"regex",
                             {tnode("x", "extract_regex", Map{{"column", "$column"}, {"pattern", "$pattern"}, {"as", "$as"}})},
                             {}, "x", {"$pattern"}, 0, ""};
        RefinementRule dict{"dictionary",
                            {tnode("x", "extract_dictionary",
                                   Map{{"column", "$column"}, {"dictionary", "$dictionary"}, {"as", "$as"}})},
                            {}, "x", {"$dictionary"}, 0, ""};
        d.refinements = {regex, dict};
        out.push_back(d);
    }
    out.push_back(physical("nl2sql", "natural language to verified SQL over a relational source",
                           specs({spec("question", T::string, "question", true),
                                  spec("source_id", T::string, "relational source", true),
                                  spec("collection_hint", T::string, "restrict the prompt to one table")}),
                           0, 0));
    out.push_back(physical("nl2llm", "ask an LLM source for structured rows",
                           specs({spec("question", T::string, "question", true),
                                  spec("source_id", T::string, "llm source (default: first registered)"),
                                  spec("output_schema", T::map, "attributes of the answer")}),
                           0, 0));
    out.push_back(physical("nl2u", "ask the user, or reuse a fresh stored answer",
                           specs({spec("question", T::string, "question", true),
                                  spec("source_id", T::string, "user source"),
                                  spec("output_schema", T::map, "attributes of the answer")}),
                           0, 0));
    out.push_back(physical("nl2vec", "top-k vector search by question or per row of a text column",
                           specs({spec("question", T::string, "query text"),
                                  spec("column", T::string, "input attribute holding query text"),
                                  spec("source_id", T::string, "vector source", true),
                                  spec("collection", T::string, "collection name", true),
                                  ranged(with_default(spec("k", T::integer, "results per query"), Value(5)), 1,
                                         std::nullopt)}),
                           0, 1));
    out.push_back(physical("web_extract", "structured extraction from a fetched web page",
                           specs({spec("source_id", T::string, "web source", true),
                                  spec("key", T::string, "url or corpus key", true),
                                  spec("output_schema", T::map, "attributes to extract", true)}),
                           0, 0));
    {
        OperatorDescriptor d;
        d.operator_id = "query_breakdown";
        d.kind = OperatorKind::compound;
        d.description = "split a question into per-source sub-questions and integrate their answers";
        d.attribute_schema = specs({spec("question", T::string, "question", true),
                                    spec("source_ids", T::list, "candidate sources (default: all)")});
        d.property_schema = shared_properties();
        d.refinements = {RefinementRule{"breakdown", {}, {}, "", {}, 0, "breakdown"}};
        out.push_back(d);
    }
    {
        OperatorDescriptor d;
        d.operator_id = "question_answer";
        d.kind = OperatorKind::abstract;
        d.description = "answer a natural-language question from the registered sources";
        d.attribute_schema = specs({spec("question", T::string, "question", true),
                                    spec("source_ids", T::list, "candidate sources (default: all)"),
                                    spec("output_schema", T::map, "attributes of the answer")});
        d.property_schema = shared_properties();
        d.refinements = {
            RefinementRule{"nl2sql",
                           {tnode("q", "nl2sql", Map{{"question", "$question"}, {"source_id", "$source.relational"}})},
                           {}, "q", {"$source.relational"}, 0, ""},
            RefinementRule{"nl2llm",
                           {tnode("q", "nl2llm",
                                  Map{{"question", "$question"}, {"source_id", "$source.llm"},
                                      {"output_schema", "$output_schema"}})},
                           {}, "q", {"$source.llm"}, 0, ""},
            RefinementRule{"query_breakdown",
                           {tnode("q", "query_breakdown", Map{{"question", "$question"}, {"source_ids", "$source_ids"}})},
                           {}, "q", {"$source.llm"}, 2, ""},
        };
        out.push_back(d);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.operator_id < b.operator_id; });
    return out;
}

bool has_implementation(const std::string& operator_id) { return implementations().count(operator_id) > 0; }

std::unique_ptr<OperatorRegistry> bootstrap_registry() {
    auto reg = std::make_unique<OperatorRegistry>(has_implementation);
    for (auto& d : builtin_descriptors()) reg->register_operator(std::move(d));
    return reg;
}

OperatorResult invoke(const OperatorDescriptor& d, const DataBatch& input, const Map& attributes, const Map& properties,
                      ExecContext& ctx) {
    if (d.kind == OperatorKind::abstract) {
        fail(ErrorCode::bad_request, "operator " + d.operator_id + " is abstract and must be refined before execution",
             {{"operator_id", d.operator_id}});
    }
    auto impl = implementations().find(d.operator_id);
    if (impl == implementations().end()) {
        fail(ErrorCode::bad_request, "operator " + d.operator_id + " has no implementation");
    }
    if (!d.accepts_ports(input.tables.size())) {
        fail(ErrorCode::bad_request,
             "operator " + d.operator_id + " takes " + std::to_string(d.min_ports) + ".." +
                 (d.max_ports < 0 ? std::string("n") : std::to_string(d.max_ports)) + " input tables, got " +
                 std::to_string(input.tables.size()),
             {{"operator_id", d.operator_id}, {"inputs", input.tables.size()}});
    }
    check_invariants(input);
    Map a = validate_attributes(d, attributes);
    Map p = validate_properties(d, properties);
    auto result = impl->second(input, a, p, ctx);
    check_invariants(result.output);
    return result;
}

OperatorResult invoke(const OperatorRegistry& registry, const std::string& operator_id, const DataBatch& input,
                      const Map& attributes, const Map& properties, ExecContext& ctx) {
    return invoke(*registry.get(operator_id), input, attributes, properties, ctx);
}

}  // namespace dil::ops
