#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dil/core/clock.hpp"
#include "dil/operators/catalog.hpp"
#include "dil/planner/plan.hpp"

namespace dil {

enum class MessageKind { data, control, status, prompt, answer, error };

std::string_view to_string(MessageKind k);
MessageKind parse_message_kind(std::string_view name);

struct StreamMessage {
    std::int64_t seq = 0;
    MessageKind kind = MessageKind::status;
    std::optional<std::string> node_id;
    Value payload;

    bool operator==(const StreamMessage&) const = default;
};

nlohmann::json to_json(const StreamMessage& m);
StreamMessage message_from_json(const nlohmann::json& j);

// Append-only, seq starts at 1 and has no gaps. Appends are serialized;
// any number of readers.
class Stream {
public:
    std::int64_t append(MessageKind kind, std::optional<std::string> node_id, Value payload);
    std::vector<StreamMessage> read(std::int64_t after) const;
    // Blocks until a message past `after` exists, the stream closes or the
    // timeout passes; returns what is there.
    std::vector<StreamMessage> wait(std::int64_t after, std::chrono::milliseconds timeout) const;
    std::int64_t last_seq() const;
    void close();
    bool closed() const;

private:
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::vector<StreamMessage> messages_;
    bool closed_ = false;
};

struct Session {
    std::string session_id;
    std::string profile_ns = "default";
    std::int64_t created_at = 0;

    std::shared_ptr<Stream> stream(const std::string& stream_id = "main");
    std::vector<std::string> stream_ids() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Stream>> streams_;
};

class SessionStore {
public:
    explicit SessionStore(std::shared_ptr<const Clock> clock = system_clock());
    std::shared_ptr<Session> create(const std::string& profile_ns = "default");
    std::shared_ptr<Session> get(const std::string& session_id) const;  // throws not_found

private:
    std::shared_ptr<const Clock> clock_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::int64_t next_ = 1;
};

struct NodeRecord {
    NodeStatus status = NodeStatus::planned;
    std::optional<std::int64_t> started_at;
    std::optional<std::int64_t> finished_at;
    std::optional<std::string> output_digest;
    std::optional<std::int64_t> rows;
    bool cache_hit = false;
    std::optional<std::string> error;
};

struct ExecutionRecord {
    std::string plan_id;
    std::string session_id;
    std::string status = "running";  // running, suspended, done, failed
    std::map<std::string, NodeRecord> nodes;
    std::optional<DataBatch> final;
    std::optional<std::string> final_digest;
    std::vector<std::string> open_prompts;
};

nlohmann::json to_json(const ExecutionRecord& r);

// Outputs of pure nodes keyed by digest(operator, attributes, cache-relevant
// properties, input digests).
class NodeCache {
public:
    std::optional<DataBatch> get(const std::string& key) const;
    void put(const std::string& key, const DataBatch& batch);
    std::size_t size() const;
    void clear();
    nlohmann::json to_json() const;
    void load_json(const nlohmann::json& j);
    void save(const std::filesystem::path& file) const;
    void load(const std::filesystem::path& file);  // missing file: no-op

private:
    mutable std::mutex mu_;
    std::map<std::string, std::string> entries_;  // key -> canonical batch
};

struct ExecuteOptions {
    bool node_cache = true;
    bool fallback = false;    // use the plan's recorded fallbacks on node failure
    bool concurrent = true;   // run independent ready nodes together
};

class Executor {
public:
    Executor(const OperatorRegistry& operators, ops::ExecContext base, std::shared_ptr<NodeCache> cache,
             std::shared_ptr<const Clock> clock = system_clock());

    // Runs until done, failed, or every runnable branch waits on a prompt.
    // Throws bad_request (detail: validate() report) for a plan that is not
    // executable.
    ExecutionRecord execute(const DataPlan& plan, Session& session, const ExecuteOptions& options = {},
                            std::string plan_id = "");

    // Throws not_found for a prompt that is not open.
    ExecutionRecord resume_with_answer(const std::string& prompt_id, const Value& answer);

    std::optional<ExecutionRecord> record(const std::string& plan_id) const;
    std::optional<DataPlan> plan(const std::string& plan_id) const;
    // Plan waiting on this prompt, if any.
    std::optional<std::string> plan_for_prompt(const std::string& prompt_id) const;

    NodeCache& cache() { return *cache_; }

private:
    struct Run;

    const OperatorRegistry& operators_;
    ops::ExecContext base_;
    std::shared_ptr<NodeCache> cache_;
    std::shared_ptr<const Clock> clock_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Run>> runs_;
    std::map<std::string, std::string> prompts_;  // prompt_id -> plan_id
    std::int64_t next_plan_ = 1;
    std::int64_t next_prompt_ = 1;

    std::string new_prompt_id();
    void advance(Run& run);
    ExecutionRecord snapshot(const Run& run) const;
};

}  // namespace dil
