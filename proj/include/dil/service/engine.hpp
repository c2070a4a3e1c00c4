#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dil/executor/executor.hpp"
#include "dil/planner/planner.hpp"

namespace dil {

struct EngineConfig {
    std::filesystem::path base_dir;  // relative fixture paths resolve here
    std::vector<SourceDescriptor> sources;
    std::optional<std::filesystem::path> state_dir;  // none: nothing persisted
    CostModel cost_model;
    Objective objective;
    bool sync_on_start = true;  // sync registered sources that were never synced

    // Paths inside the file resolve against the file's directory.
    static EngineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static EngineConfig load(const std::filesystem::path& file);
};

// --config value, else $DIL_CONFIG; throws bad_request when neither is set.
std::filesystem::path config_path(const std::string& flag);

struct QueryRequest {
    std::string question;
    std::optional<Objective> objective;
    bool fallback = false;
};

struct QueryResult {
    std::string plan_id;
    DataPlan plan;
    ExecutionRecord record;
};

// Everything the HTTP handlers and the CLI do goes through here.
class Engine {
public:
    explicit Engine(EngineConfig config, std::shared_ptr<const Clock> clock = system_clock());

    std::shared_ptr<Session> create_session(const std::string& profile_ns = "default");
    std::shared_ptr<Session> session(const std::string& session_id) const;

    QueryResult query(Session& session, const QueryRequest& request);
    // The session must own the prompt.
    ExecutionRecord answer(const std::string& session_id, const std::string& prompt_id, const Value& answer);
    ExecutionRecord execute(const DataPlan& plan, Session& session, const ExecuteOptions& options = {});
    // {plan, record}; throws not_found.
    nlohmann::json plan_view(const std::string& plan_id) const;

    PlanReport validate(const DataPlan& plan) const;
    DataPlan refine(const DataPlan& plan) const;
    DataPlan optimize(const DataPlan& plan, const std::optional<Objective>& objective = std::nullopt) const;
    Table explain(const DataPlan& plan, const std::optional<Objective>& objective = std::nullopt) const;

    std::vector<SearchHit> search(const std::string& query, std::optional<MetadataLevel> level, std::size_t k) const;
    SourceDescriptor add_source(const SourceDescriptor& descriptor);
    std::vector<MetadataEntry> sync(const std::string& source_id);
    std::vector<OperatorDescriptor> operators() const;
    // Registers (or keeps, when identical) and syncs the sources of DIR/config.json.
    std::vector<SourceDescriptor> load_fixtures(const std::filesystem::path& dir);

    void save_state() const;

    const EngineConfig& config() const { return config_; }
    SourceCatalog& sources() { return *sources_; }
    const DataRegistry& registry() const { return *registry_; }
    Executor& executor() { return *executor_; }
    NodeCache& node_cache() { return *node_cache_; }

private:
    EngineConfig config_;
    std::shared_ptr<const Clock> clock_;
    std::shared_ptr<LlmCache> llm_cache_;
    std::shared_ptr<ProfileStore> profiles_;
    std::unique_ptr<SourceCatalog> sources_;
    std::unique_ptr<DataRegistry> registry_;
    std::unique_ptr<OperatorRegistry> operators_;
    std::shared_ptr<NodeCache> node_cache_;
    ops::ExecContext ctx_;
    std::unique_ptr<Planner> planner_;
    std::unique_ptr<Executor> executor_;
    SessionStore sessions_;
    mutable std::mutex plan_mu_;   // planning touches the shared context
    mutable std::mutex state_mu_;  // serializes state writes
    mutable std::mutex source_mu_;
};

// JSON views shared by the HTTP responses and the CLI's --json output.
nlohmann::json to_json(const SearchHit& hit);
nlohmann::json to_json(const QueryResult& r);
nlohmann::json report_json(const PlanReport& r);
// Plain text table: header line, then one line per row, columns padded.
std::string render_table(const Table& t);

}  // namespace dil
