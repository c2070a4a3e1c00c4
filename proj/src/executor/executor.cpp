#include "dil/executor/executor.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "dil/core/codec.hpp"
#include "dil/core/digest.hpp"
#include "dil/error.hpp"

namespace dil {

namespace {

constexpr std::string_view kKindNames[] = {"data", "control", "status", "prompt", "answer", "error"};

Value error_payload(const Error& e) {
    Map m{{"code", std::string(to_string(e.code()))}, {"message", std::string(e.what())}};
    if (!e.detail().is_null()) m.emplace("detail", from_json(e.detail()));
    return Value(std::move(m));
}

bool cacheable(const PlanNode& n) {
    if (n.operator_id == "nl2u") return false;
    if (auto it = n.properties.find("cache"); it != n.properties.end() && it->second.is_bool()) {
        return it->second.as_bool();
    }
    return true;
}

}  // namespace

std::string_view to_string(MessageKind k) { return kKindNames[static_cast<int>(k)]; }

MessageKind parse_message_kind(std::string_view name) {
    for (std::size_t i = 0; i < std::size(kKindNames); ++i) {
        if (kKindNames[i] == name) return static_cast<MessageKind>(i);
    }
    fail(ErrorCode::bad_request, "unknown message kind: " + std::string(name));
}

nlohmann::json to_json(const StreamMessage& m) {
    nlohmann::json j{{"seq", m.seq}, {"kind", to_string(m.kind)}, {"payload", to_json(m.payload)}};
    if (m.node_id) j["node_id"] = *m.node_id;
    return j;
}

StreamMessage message_from_json(const nlohmann::json& j) {
    try {
        StreamMessage m;
        m.seq = j.at("seq").get<std::int64_t>();
        m.kind = parse_message_kind(j.at("kind").get<std::string>());
        if (j.contains("node_id") && !j["node_id"].is_null()) m.node_id = j["node_id"].get<std::string>();
        m.payload = from_json(j.value("payload", nlohmann::json()));
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, std::string("malformed stream message: ") + e.what());
    }
}

// ---- stream, sessions

std::int64_t Stream::append(MessageKind kind, std::optional<std::string> node_id, Value payload) {
    std::int64_t seq;
    {
        std::lock_guard lock(mu_);
        seq = static_cast<std::int64_t>(messages_.size()) + 1;
        messages_.push_back(StreamMessage{seq, kind, std::move(node_id), std::move(payload)});
    }
    cv_.notify_all();
    return seq;
}

std::vector<StreamMessage> Stream::read(std::int64_t after) const {
    std::lock_guard lock(mu_);
    auto from = static_cast<std::size_t>(std::clamp<std::int64_t>(after, 0, messages_.size()));
    return {messages_.begin() + static_cast<std::ptrdiff_t>(from), messages_.end()};
}

std::vector<StreamMessage> Stream::wait(std::int64_t after, std::chrono::milliseconds timeout) const {
    {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout,
                     [&] { return closed_ || static_cast<std::int64_t>(messages_.size()) > after; });
    }
    return read(after);
}

std::int64_t Stream::last_seq() const {
    std::lock_guard lock(mu_);
    return static_cast<std::int64_t>(messages_.size());
}

void Stream::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Stream::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

std::shared_ptr<Stream> Session::stream(const std::string& stream_id) {
    std::lock_guard lock(mu_);
    auto& s = streams_[stream_id];
    if (!s) s = std::make_shared<Stream>();
    return s;
}

std::vector<std::string> Session::stream_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : streams_) out.push_back(id);
    return out;
}

SessionStore::SessionStore(std::shared_ptr<const Clock> clock) : clock_(std::move(clock)) {}

std::shared_ptr<Session> SessionStore::create(const std::string& profile_ns) {
    auto s = std::make_shared<Session>();
    s->profile_ns = profile_ns.empty() ? "default" : profile_ns;
    s->created_at = clock_->now();
    std::lock_guard lock(mu_);
    auto n = next_++;
    s->session_id = "s" + std::to_string(n) + "-" +
                    sha256_hex(std::to_string(s->created_at) + "/" + std::to_string(n)).substr(0, 8);
    sessions_[s->session_id] = s;
    return s;
}

std::shared_ptr<Session> SessionStore::get(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) fail(ErrorCode::not_found, "unknown session: " + session_id);
    return it->second;
}

// ---- records, cache

nlohmann::json to_json(const ExecutionRecord& r) {
    nlohmann::json nodes = nlohmann::json::object();
    for (const auto& [id, n] : r.nodes) {
        nlohmann::json j{{"status", to_string(n.status)}, {"cache_hit", n.cache_hit}};
        if (n.started_at) j["started_at"] = *n.started_at;
        if (n.finished_at) j["finished_at"] = *n.finished_at;
        if (n.output_digest) j["output_digest"] = *n.output_digest;
        if (n.rows) j["rows"] = *n.rows;
        if (n.error) j["error"] = *n.error;
        nodes[id] = std::move(j);
    }
    nlohmann::json j{{"plan_id", r.plan_id},
                     {"session_id", r.session_id},
                     {"status", r.status},
                     {"nodes", std::move(nodes)},
                     {"open_prompts", r.open_prompts}};
    if (r.final) j["final"] = to_json(*r.final);
    if (r.final_digest) j["final_digest"] = *r.final_digest;
    return j;
}

std::optional<DataBatch> NodeCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return deserialize_batch(it->second);
}

void NodeCache::put(const std::string& key, const DataBatch& batch) {
    auto text = canonical_serialize(batch);
    std::lock_guard lock(mu_);
    entries_[key] = std::move(text);
}

std::size_t NodeCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

void NodeCache::clear() {
    std::lock_guard lock(mu_);
    entries_.clear();
}

nlohmann::json NodeCache::to_json() const {
    std::lock_guard lock(mu_);
    return entries_;
}

void NodeCache::load_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorCode::bad_request, "node cache must be a JSON object");
    std::map<std::string, std::string> entries;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) fail(ErrorCode::bad_request, "node cache entry is not a string: " + k);
        entries[k] = v.get<std::string>();
    }
    std::lock_guard lock(mu_);
    entries_ = std::move(entries);
}

void NodeCache::save(const std::filesystem::path& file) const {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        out << to_json().dump();
    }
    std::filesystem::rename(tmp, file);
}

void NodeCache::load(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) return;
    std::ifstream in(file);
    try {
        load_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_request, "unreadable node cache " + file.string() + ": " + e.what());
    }
}

// ---- executor

struct Executor::Run {
    std::mutex mu;
    std::string plan_id;
    DataPlan plan;
    std::string session_id;
    std::string profile_ns;
    std::shared_ptr<Stream> stream;
    ExecuteOptions options;
    std::string status = "running";
    std::map<std::string, NodeRecord> nodes;
    std::map<std::string, DataBatch> outputs;

    struct Waiting {
        std::string prompt_id;
        int answers = 0;
    };
    std::map<std::string, Waiting> waiting;  // node -> open prompt
    std::set<std::size_t> used_fallbacks;
};

namespace {

struct Attempt {
    std::optional<ops::OperatorResult> result;
    std::optional<Error> error;
    bool from_node_cache = false;
    std::string key;
};

}  // namespace

Executor::Executor(const OperatorRegistry& operators, ops::ExecContext base, std::shared_ptr<NodeCache> cache,
                   std::shared_ptr<const Clock> clock)
    : operators_(operators), base_(std::move(base)), cache_(std::move(cache)), clock_(std::move(clock)) {
    if (!cache_) cache_ = std::make_shared<NodeCache>();
}

std::string Executor::new_prompt_id() {
    std::lock_guard lock(mu_);
    return "q" + std::to_string(next_prompt_++);
}

ExecutionRecord Executor::execute(const DataPlan& plan, Session& session, const ExecuteOptions& options,
                                  std::string plan_id) {
    if (!plan.alternatives.empty()) {
        fail(ErrorCode::bad_request, "plan still has alternatives; optimize it first",
             {{"alternatives", plan.alternatives}});
    }
    auto report = validate(plan, operators_);
    if (!report.ok()) fail(ErrorCode::bad_request, "plan is not executable", {{"violations", report.to_json()}});

    auto run = std::make_shared<Run>();
    {
        std::lock_guard lock(mu_);
        if (plan_id.empty()) {
            do plan_id = "p" + std::to_string(next_plan_++);
            while (runs_.count(plan_id));
        } else if (runs_.count(plan_id)) {
            fail(ErrorCode::conflict, "plan id in use: " + plan_id);
        }
        run->plan_id = plan_id;
        runs_[plan_id] = run;
    }
    std::lock_guard lock(run->mu);
    run->plan = plan;
    run->session_id = session.session_id;
    run->profile_ns = session.profile_ns;
    run->stream = session.stream();
    run->options = options;
    for (auto& [id, n] : run->plan.nodes) {
        n.status = NodeStatus::planned;
        run->nodes[id] = NodeRecord{};
    }
    run->stream->append(MessageKind::status, std::nullopt, Map{{"plan_id", plan_id}, {"status", "running"}});
    advance(*run);
    return snapshot(*run);
}

ExecutionRecord Executor::resume_with_answer(const std::string& prompt_id, const Value& answer) {
    std::shared_ptr<Run> run;
    {
        std::lock_guard lock(mu_);
        auto it = prompts_.find(prompt_id);
        if (it == prompts_.end()) fail(ErrorCode::not_found, "no open prompt: " + prompt_id);
        run = runs_.at(it->second);
    }
    std::lock_guard lock(run->mu);
    auto w = std::find_if(run->waiting.begin(), run->waiting.end(),
                          [&](const auto& kv) { return kv.second.prompt_id == prompt_id; });
    if (w == run->waiting.end()) fail(ErrorCode::not_found, "no open prompt: " + prompt_id);
    std::string node_id = w->first;
    int answers = w->second.answers + 1;
    run->waiting.erase(w);
    {
        std::lock_guard g(mu_);
        prompts_.erase(prompt_id);
    }
    run->stream->append(MessageKind::answer, node_id, Map{{"prompt_id", prompt_id}, {"answer", answer}});

    const auto& node = run->plan.nodes.at(node_id);
    DataBatch in;
    for (const auto& e : run->plan.inputs_of(node_id)) in.tables.push_back(run->outputs.at(e.from).tables.at(0));
    ops::ExecContext ctx = base_;
    ctx.profile_ns = run->profile_ns;
    ctx.answer = answer;
    ctx.answers_seen = answers;
    auto& rec = run->nodes.at(node_id);
    rec.status = NodeStatus::running;
    run->plan.nodes.at(node_id).status = NodeStatus::running;
    try {
        auto r = ops::invoke(operators_, node.operator_id, in, node.attributes, node.properties, ctx);
        if (r.prompt) {
            auto id = new_prompt_id();
            run->waiting[node_id] = Run::Waiting{id, answers};
            {
                std::lock_guard g(mu_);
                prompts_[id] = run->plan_id;
            }
            rec.status = NodeStatus::suspended;
            run->plan.nodes.at(node_id).status = NodeStatus::suspended;
            List feedback;
            for (const auto& f : r.prompt->feedback) feedback.emplace_back(f);
            run->stream->append(MessageKind::prompt, node_id,
                                Map{{"prompt_id", id},
                                    {"plan_id", run->plan_id},
                                    {"question", r.prompt->question},
                                    {"output_schema", schema_to_value(r.prompt->schema)},
                                    {"feedback", Value(std::move(feedback))}});
        } else {
            rec.status = NodeStatus::done;
            run->plan.nodes.at(node_id).status = NodeStatus::done;
            rec.finished_at = clock_->now();
            rec.output_digest = digest(r.output);
            rec.rows = static_cast<std::int64_t>(r.output.tables.at(0).rows.size());
            rec.cache_hit = r.cache_hit;
            run->stream->append(MessageKind::data, node_id,
                                Map{{"digest", *rec.output_digest}, {"rows", *rec.rows}, {"cache_hit", r.cache_hit}});
            run->outputs[node_id] = std::move(r.output);
        }
    } catch (const Error& e) {
        rec.status = NodeStatus::failed;
        run->plan.nodes.at(node_id).status = NodeStatus::failed;
        rec.finished_at = clock_->now();
        rec.error = e.what();
        run->stream->append(MessageKind::error, node_id, error_payload(e));
        run->status = "failed";
    }
    if (run->status == "failed") {
        for (const auto& [n, wt] : run->waiting) {
            std::lock_guard g(mu_);
            prompts_.erase(wt.prompt_id);
        }
        run->waiting.clear();
        run->stream->append(MessageKind::status, std::nullopt, Map{{"plan_id", run->plan_id}, {"status", "failed"}});
    } else {
        run->status = "running";
        advance(*run);
    }
    return snapshot(*run);
}

void Executor::advance(Run& run) {
    auto& plan = run.plan;
    auto fail_run = [&](const std::string& node_id, const Error& e) {
        auto& rec = run.nodes[node_id];
        rec.status = NodeStatus::failed;
        rec.finished_at = clock_->now();
        rec.error = e.what();
        if (plan.nodes.count(node_id)) plan.nodes.at(node_id).status = NodeStatus::failed;
        run.stream->append(MessageKind::error, node_id, error_payload(e));

        if (run.options.fallback) {
            for (std::size_t i = 0; i < plan.fallbacks.size(); ++i) {
                const auto& fb = plan.fallbacks[i];
                if (run.used_fallbacks.count(i)) continue;
                std::set<std::string> owned(fb.members.begin(), fb.members.end());
                owned.insert(fb.chosen);
                if (!owned.count(node_id)) continue;
                run.used_fallbacks.insert(i);
                run.stream->append(MessageKind::control, node_id,
                                   Map{{"action", "fallback"},
                                       {"group", fb.group},
                                       {"failed", node_id},
                                       {"from", fb.chosen},
                                       {"to", fb.next}});
                std::vector<PlanEdge> edges;
                for (auto e : plan.edges) {
                    if (e.from == fb.chosen && !owned.count(e.to)) {
                        e.from = fb.next;
                        edges.push_back(e);
                    } else if (!owned.count(e.from) && !owned.count(e.to)) {
                        edges.push_back(e);
                    }
                }
                for (const auto& e : fb.edges) {
                    if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(e);
                }
                std::sort(edges.begin(), edges.end());
                plan.edges = std::move(edges);
                if (owned.count(plan.root)) plan.root = fb.next;
                for (const auto& m : owned) {
                    plan.nodes.erase(m);
                    run.outputs.erase(m);
                    if (auto w = run.waiting.find(m); w != run.waiting.end()) {
                        std::lock_guard g(mu_);
                        prompts_.erase(w->second.prompt_id);
                        run.waiting.erase(w);
                    }
                    auto r = run.nodes.find(m);
                    if (r != run.nodes.end() && r->second.status != NodeStatus::failed &&
                        r->second.status != NodeStatus::done) {
                        run.nodes.erase(r);
                    }
                }
                for (const auto& [id, n] : fb.nodes) {
                    if (plan.nodes.count(id)) continue;
                    plan.nodes[id] = n;
                    plan.nodes[id].status = NodeStatus::planned;
                    run.nodes[id] = NodeRecord{};
                }
                return;
            }
        }
        run.status = "failed";
    };

    while (run.status == "running") {
        std::vector<std::string> ready;
        for (const auto& [id, n] : plan.nodes) {
            if (n.status != NodeStatus::planned) continue;
            bool ok = true;
            for (const auto& e : plan.inputs_of(id)) ok = ok && run.outputs.count(e.from);
            if (ok) ready.push_back(id);
        }
        if (ready.empty()) break;

        for (const auto& id : ready) {
            plan.nodes.at(id).status = NodeStatus::running;
            auto& rec = run.nodes[id];
            rec.status = NodeStatus::running;
            rec.started_at = clock_->now();
            run.stream->append(MessageKind::status, id, Map{{"status", "running"}});
        }

        std::vector<Attempt> attempts(ready.size());
        std::vector<DataBatch> inputs(ready.size());
        for (std::size_t i = 0; i < ready.size(); ++i) {
            const auto& node = plan.nodes.at(ready[i]);
            List in_digests;
            for (const auto& e : plan.inputs_of(ready[i])) {
                inputs[i].tables.push_back(run.outputs.at(e.from).tables.at(0));
                in_digests.emplace_back(run.nodes.at(e.from).output_digest.value_or(""));
            }
            if (run.options.node_cache && cacheable(node)) {
                Map props;
                for (const char* k : {"model", "temperature"}) {
                    if (auto it = node.properties.find(k); it != node.properties.end()) props.emplace(k, it->second);
                }
                attempts[i].key = digest(Value(Map{{"operator_id", node.operator_id},
                                                   {"attributes", node.attributes},
                                                   {"properties", std::move(props)},
                                                   {"inputs", Value(std::move(in_digests))}}));
            }
        }

        const bool parallel = run.options.concurrent && ready.size() > 1;
        const int n = static_cast<int>(ready.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
        for (int i = 0; i < n; ++i) {
            auto& a = attempts[i];
            const auto& node = plan.nodes.at(ready[i]);
            try {
                if (!a.key.empty()) {
                    if (auto hit = cache_->get(a.key)) {
                        a.result = ops::OperatorResult{std::move(*hit), std::nullopt, true};
                        a.from_node_cache = true;
                        continue;
                    }
                }
                ops::ExecContext ctx = base_;
                ctx.profile_ns = run.profile_ns;
                a.result = ops::invoke(operators_, node.operator_id, inputs[i], node.attributes, node.properties, ctx);
            } catch (const Error& e) {
                a.error = e;
            } catch (const std::exception& e) {
                a.error = Error(ErrorCode::internal, e.what());
            }
        }

        for (std::size_t i = 0; i < ready.size(); ++i) {
            const auto& id = ready[i];
            if (!plan.nodes.count(id)) continue;  // dropped by a fallback
            auto& a = attempts[i];
            auto& rec = run.nodes[id];
            if (a.error) {
                if (run.status == "running") {
                    fail_run(id, *a.error);
                } else {
                    rec.status = NodeStatus::failed;
                    rec.error = a.error->what();
                }
                continue;
            }
            auto& r = *a.result;
            if (r.prompt) {
                if (run.status != "running") {
                    rec.status = NodeStatus::planned;
                    plan.nodes.at(id).status = NodeStatus::planned;
                    continue;
                }
                auto pid = new_prompt_id();
                run.waiting[id] = Run::Waiting{pid, 0};
                {
                    std::lock_guard g(mu_);
                    prompts_[pid] = run.plan_id;
                }
                rec.status = NodeStatus::suspended;
                plan.nodes.at(id).status = NodeStatus::suspended;
                List feedback;
                for (const auto& f : r.prompt->feedback) feedback.emplace_back(f);
                run.stream->append(MessageKind::prompt, id,
                                   Map{{"prompt_id", pid},
                                       {"plan_id", run.plan_id},
                                       {"question", r.prompt->question},
                                       {"output_schema", schema_to_value(r.prompt->schema)},
                                       {"feedback", Value(std::move(feedback))}});
                continue;
            }
            if (!a.from_node_cache && !a.key.empty()) cache_->put(a.key, r.output);
            rec.status = NodeStatus::done;
            plan.nodes.at(id).status = NodeStatus::done;
            rec.finished_at = clock_->now();
            rec.output_digest = digest(r.output);
            rec.rows = static_cast<std::int64_t>(r.output.tables.at(0).rows.size());
            rec.cache_hit = r.cache_hit;
            run.stream->append(MessageKind::data, id,
                               Map{{"digest", *rec.output_digest}, {"rows", *rec.rows}, {"cache_hit", r.cache_hit}});
            run.outputs[id] = std::move(r.output);
        }
    }

    if (run.status == "failed") {
        for (const auto& [id, w] : run.waiting) {
            std::lock_guard g(mu_);
            prompts_.erase(w.prompt_id);
        }
        run.waiting.clear();
        run.stream->append(MessageKind::status, std::nullopt, Map{{"plan_id", run.plan_id}, {"status", "failed"}});
        return;
    }
    if (run.outputs.count(plan.root)) {
        bool all = std::all_of(plan.nodes.begin(), plan.nodes.end(),
                               [](const auto& kv) { return kv.second.status == NodeStatus::done; });
        if (all) {
            run.status = "done";
            const auto& out = run.outputs.at(plan.root);
            run.stream->append(MessageKind::status, std::nullopt,
                               Map{{"plan_id", run.plan_id},
                                   {"status", "done"},
                                   {"output_digest", digest(out)},
                                   {"rows", static_cast<std::int64_t>(out.tables.at(0).rows.size())}});
            return;
        }
    }
    if (!run.waiting.empty()) {
        run.status = "suspended";
        run.stream->append(MessageKind::status, std::nullopt, Map{{"plan_id", run.plan_id}, {"status", "suspended"}});
        return;
    }
    run.status = "failed";
    run.stream->append(MessageKind::error, std::nullopt,
                       error_payload(Error(ErrorCode::internal, "plan stalled with no runnable node")));
    run.stream->append(MessageKind::status, std::nullopt, Map{{"plan_id", run.plan_id}, {"status", "failed"}});
}

ExecutionRecord Executor::snapshot(const Run& run) const {
    ExecutionRecord r;
    r.plan_id = run.plan_id;
    r.session_id = run.session_id;
    r.status = run.status;
    r.nodes = run.nodes;
    if (run.status == "done") {
        r.final = run.outputs.at(run.plan.root);
        r.final_digest = digest(*r.final);
    }
    for (const auto& [id, w] : run.waiting) r.open_prompts.push_back(w.prompt_id);
    std::sort(r.open_prompts.begin(), r.open_prompts.end());
    return r;
}

std::optional<ExecutionRecord> Executor::record(const std::string& plan_id) const {
    std::shared_ptr<Run> run;
    {
        std::lock_guard lock(mu_);
        auto it = runs_.find(plan_id);
        if (it == runs_.end()) return std::nullopt;
        run = it->second;
    }
    std::lock_guard lock(run->mu);
    return snapshot(*run);
}

std::optional<DataPlan> Executor::plan(const std::string& plan_id) const {
    std::shared_ptr<Run> run;
    {
        std::lock_guard lock(mu_);
        auto it = runs_.find(plan_id);
        if (it == runs_.end()) return std::nullopt;
        run = it->second;
    }
    std::lock_guard lock(run->mu);
    return run->plan;
}

std::optional<std::string> Executor::plan_for_prompt(const std::string& prompt_id) const {
    std::lock_guard lock(mu_);
    auto it = prompts_.find(prompt_id);
    if (it == prompts_.end()) return std::nullopt;
    return it->second;
}

}  // namespace dil
