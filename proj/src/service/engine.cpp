#include "dil/service/engine.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"

namespace dil {

namespace {

const std::set<std::string> kConfigKeys = {"base_dir", "state_dir", "sources", "cost_model", "objective",
                                           "sync_on_start"};
const char* const kPathKeys[] = {"fixture", "mapping", "corpus"};

std::filesystem::path under(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

// Connection paths made absolute, so descriptors from different config
// directories compare meaningfully.
SourceDescriptor anchored(SourceDescriptor d, const std::filesystem::path& base) {
    for (const char* k : kPathKeys) {
        auto it = d.connection.find(k);
        if (it != d.connection.end() && it->second.is_string()) {
            it->second = Value(under(base, it->second.as_string()).string());
        }
    }
    return d;
}

nlohmann::json read_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCode::not_found, "cannot read " + file.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, file.string() + ": " + e.what());
    }
}

}  // namespace

EngineConfig EngineConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) fail(ErrorCode::bad_request, "config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!kConfigKeys.count(k)) fail(ErrorCode::bad_request, "unknown config key \"" + k + "\"");
    }
    EngineConfig c;
    try {
        c.base_dir = j.contains("base_dir") ? under(base_dir, j["base_dir"].get<std::string>()) : base_dir;
        if (j.contains("state_dir") && !j["state_dir"].is_null()) {
            c.state_dir = under(base_dir, j["state_dir"].get<std::string>());
        }
        for (const auto& s : j.value("sources", nlohmann::json::array())) c.sources.push_back(source_from_json(s));
        if (j.contains("cost_model")) c.cost_model = CostModel::from_json(j["cost_model"]);
        if (j.contains("objective")) c.objective = Objective::from_json(j["objective"]);
        c.sync_on_start = j.value("sync_on_start", true);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, std::string("malformed config: ") + e.what());
    }
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& file) {
    auto abs = std::filesystem::absolute(file);
    return from_json(read_file(abs), abs.parent_path());
}

std::filesystem::path config_path(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("DIL_CONFIG"); env && *env) return env;
    fail(ErrorCode::bad_request, "no config: pass --config FILE or set DIL_CONFIG");
}

Engine::Engine(EngineConfig config, std::shared_ptr<const Clock> clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      llm_cache_(std::make_shared<LlmCache>()),
      profiles_(std::make_shared<ProfileStore>(clock_)),
      node_cache_(std::make_shared<NodeCache>()),
      sessions_(clock_) {
    const auto& state = config_.state_dir;
    if (state && std::filesystem::exists(*state / "registry.json")) {
        registry_ = DataRegistry::load(*state / "registry.json");
    } else {
        registry_ = std::make_unique<DataRegistry>();
    }
    if (state) {
        if (std::filesystem::exists(*state / "profiles.json")) profiles_->load_json(read_file(*state / "profiles.json"));
        if (std::filesystem::exists(*state / "llm_cache.json")) llm_cache_->load_json(read_file(*state / "llm_cache.json"));
        node_cache_->load(*state / "node_cache.json");
    }
    sources_ = std::make_unique<SourceCatalog>(config_.base_dir, llm_cache_, profiles_);
    for (const auto& d : config_.sources) {
        auto known = registry_->source(d.source_id);
        if (!known) {
            registry_->register_source(d);
        } else if (anchored(*known, config_.base_dir) != anchored(d, config_.base_dir)) {
            fail(ErrorCode::conflict, "source \"" + d.source_id + "\" in the config differs from the saved registry");
        }
    }
    for (const auto& d : registry_->list_sources()) sources_->add(d);

    operators_ = ops::bootstrap_registry();
    ctx_.sources = sources_.get();
    ctx_.registry = registry_.get();
    planner_ = std::make_unique<Planner>(*operators_, ctx_, config_.cost_model);
    executor_ = std::make_unique<Executor>(*operators_, ctx_, node_cache_, clock_);

    if (config_.sync_on_start) {
        bool changed = false;
        for (const auto& d : registry_->list_sources()) {
            if (registry_->sync_log(d.source_id)) continue;
            try {
                registry_->sync_source(d.source_id, *sources_, clock_->now());
                changed = true;
            } catch (const Error& e) {
                std::cerr << "warning: cannot sync " << d.source_id << ": " << e.what() << "\n";
            }
        }
        if (changed) save_state();
    }
}

std::shared_ptr<Session> Engine::create_session(const std::string& profile_ns) { return sessions_.create(profile_ns); }

std::shared_ptr<Session> Engine::session(const std::string& session_id) const { return sessions_.get(session_id); }

QueryResult Engine::query(Session& session, const QueryRequest& request) {
    if (request.question.find_first_not_of(" \t\r\n") == std::string::npos) {
        fail(ErrorCode::bad_request, "question is empty");
    }
    QueryResult out;
    {
        std::lock_guard lock(plan_mu_);
        ctx_.profile_ns = session.profile_ns;
        auto plan = planner_->instantiate("question_answer", Map{{"question", request.question}});
        plan = planner_->refine(std::move(plan));
        out.plan = planner_->optimize(plan, request.objective.value_or(config_.objective));
    }
    ExecuteOptions options;
    options.fallback = request.fallback;
    out.record = executor_->execute(out.plan, session, options);
    out.plan_id = out.record.plan_id;
    save_state();
    return out;
}

ExecutionRecord Engine::answer(const std::string& session_id, const std::string& prompt_id, const Value& answer) {
    session(session_id);
    auto plan_id = executor_->plan_for_prompt(prompt_id);
    if (!plan_id || executor_->record(*plan_id)->session_id != session_id) {
        fail(ErrorCode::not_found, "no open prompt " + prompt_id + " in session " + session_id);
    }
    auto rec = executor_->resume_with_answer(prompt_id, answer);
    save_state();
    return rec;
}

ExecutionRecord Engine::execute(const DataPlan& plan, Session& session, const ExecuteOptions& options) {
    auto rec = executor_->execute(plan, session, options);
    save_state();
    return rec;
}

nlohmann::json Engine::plan_view(const std::string& plan_id) const {
    auto plan = executor_->plan(plan_id);
    auto rec = executor_->record(plan_id);
    if (!plan || !rec) fail(ErrorCode::not_found, "unknown plan: " + plan_id);
    return {{"plan", to_json(*plan)}, {"record", to_json(*rec)}};
}

PlanReport Engine::validate(const DataPlan& plan) const { return dil::validate(plan, *operators_); }

DataPlan Engine::refine(const DataPlan& plan) const {
    std::lock_guard lock(plan_mu_);
    return planner_->refine(plan);
}

DataPlan Engine::optimize(const DataPlan& plan, const std::optional<Objective>& objective) const {
    std::lock_guard lock(plan_mu_);
    return planner_->optimize(plan, objective.value_or(config_.objective));
}

Table Engine::explain(const DataPlan& plan, const std::optional<Objective>& objective) const {
    std::lock_guard lock(plan_mu_);
    return planner_->explain(plan, objective.value_or(config_.objective));
}

std::vector<SearchHit> Engine::search(const std::string& query, std::optional<MetadataLevel> level,
                                      std::size_t k) const {
    if (query.empty()) {
        std::vector<SearchHit> all;
        for (auto& e : registry_->entries()) {
            if (all.size() >= k) break;
            if (!level || e.level == *level) all.push_back(SearchHit{std::move(e), 0.0, false});
        }
        return all;
    }
    return registry_->search(query, level, k);
}

SourceDescriptor Engine::add_source(const SourceDescriptor& descriptor) {
    {
        std::lock_guard lock(source_mu_);
        registry_->register_source(descriptor);
        sources_->add(descriptor);
    }
    save_state();
    return descriptor;
}

std::vector<MetadataEntry> Engine::sync(const std::string& source_id) {
    if (!registry_->source(source_id)) fail(ErrorCode::not_found, "unknown source \"" + source_id + "\"");
    auto tree = registry_->sync_source(source_id, *sources_, clock_->now());
    save_state();
    return tree;
}

std::vector<OperatorDescriptor> Engine::operators() const { return operators_->list(); }

std::vector<SourceDescriptor> Engine::load_fixtures(const std::filesystem::path& dir) {
    auto cfg = EngineConfig::load(dir / "config.json");
    std::vector<SourceDescriptor> loaded;
    for (const auto& raw : cfg.sources) {
        auto d = anchored(raw, cfg.base_dir);
        {
            std::lock_guard lock(source_mu_);
            auto known = registry_->source(d.source_id);
            if (!known) {
                registry_->register_source(d);
                sources_->add(d);
            } else if (anchored(*known, config_.base_dir) != d) {
                fail(ErrorCode::conflict, "source \"" + d.source_id + "\" is already registered differently");
            }
        }
        registry_->sync_source(d.source_id, *sources_, clock_->now());
        loaded.push_back(d);
    }
    save_state();
    return loaded;
}

void Engine::save_state() const {
    if (!config_.state_dir) return;
    std::lock_guard lock(state_mu_);
    const auto& dir = *config_.state_dir;
    std::filesystem::create_directories(dir);
    registry_->save(dir / "registry.json");
    atomic_write(dir / "profiles.json", profiles_->to_json().dump() + "\n");
    atomic_write(dir / "llm_cache.json", llm_cache_->to_json().dump() + "\n");
    node_cache_->save(dir / "node_cache.json");
}

nlohmann::json to_json(const SearchHit& hit) {
    return {{"entry", to_json(hit.entry)}, {"score", hit.score}, {"exact", hit.exact}};
}

nlohmann::json to_json(const QueryResult& r) {
    return {{"plan_id", r.plan_id}, {"status", r.record.status}, {"plan", to_json(r.plan)}, {"record", to_json(r.record)}};
}

nlohmann::json report_json(const PlanReport& r) { return {{"ok", r.ok()}, {"violations", r.to_json()}}; }

std::string render_table(const Table& t) {
    auto names = t.attribute_names();
    if (t.rows.empty() && names.empty()) return "(no rows)\n";
    std::vector<std::vector<std::string>> cells;
    cells.push_back(names);
    for (const auto& row : t.rows) {
        std::vector<std::string> line;
        for (const auto& n : names) {
            auto it = row.find(n);
            if (it == row.end() || it->second.is_null()) {
                line.push_back("null");
            } else if (it->second.is_string()) {
                line.push_back(it->second.as_string());
            } else {
                line.push_back(serialize_value(it->second));
            }
        }
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(names.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::string out;
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            out += line[i];
            if (i + 1 < line.size()) out += std::string(width[i] - line[i].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

}  // namespace dil
