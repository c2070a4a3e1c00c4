#include "dil/service/http.hpp"

#include <httplib.h>

#include <atomic>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"

namespace dil {

namespace {

using httplib::Request;
using httplib::Response;
using json = nlohmann::json;

void send(Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const Request& req) {
    if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        fail(ErrorCode::bad_request, std::string("request body is not JSON: ") + e.what());
    }
}

// {plan: ..., ...} or the plan itself.
DataPlan plan_arg(const json& body) {
    if (body.is_object() && body.contains("plan")) return plan_from_json(body["plan"]);
    return plan_from_json(body);
}

std::optional<Objective> objective_arg(const json& body) {
    if (body.is_object() && body.contains("objective") && !body.contains("nodes")) {
        return Objective::from_json(body["objective"]);
    }
    return std::nullopt;
}

std::int64_t int_param(const Request& req, const std::string& name, std::int64_t fallback) {
    if (!req.has_param(name)) return fallback;
    auto text = req.get_param_value(name);
    try {
        std::size_t used = 0;
        auto v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        fail(ErrorCode::bad_request, "parameter " + name + " must be an integer");
    }
}

std::string ndjson(const std::vector<StreamMessage>& ms) {
    std::string out;
    for (const auto& m : ms) out += to_json(m).dump() + "\n";
    return out;
}

}  // namespace

struct HttpService::Impl {
    Engine& engine;
    httplib::Server server;
    std::atomic<bool> stopping{false};

    explicit Impl(Engine& e) : engine(e) { routes(); }

    template <typename F>
    auto guarded(F f) {
        return [f](const Request& req, Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send(res, e.to_json(), http_status(e.code()));
            } catch (const json::exception& e) {
                send(res, Error(ErrorCode::bad_request, e.what()).to_json(), 400);
            } catch (const std::exception& e) {
                send(res, Error(ErrorCode::internal, e.what()).to_json(), 500);
            }
        };
    }

    void stream(const Request& req, Response& res) {
        auto session = engine.session(req.matches[1]);
        auto stream_id = req.has_param("stream") ? req.get_param_value("stream") : "main";
        auto s = session->stream(stream_id);
        std::int64_t after = int_param(req, "after", 0);
        if (after < 0) fail(ErrorCode::bad_request, "after must be >= 0");
        if (req.has_param("wait_ms")) {
            auto wait = std::clamp<std::int64_t>(int_param(req, "wait_ms", 0), 0, 60000);
            auto ms = wait > 0 ? s->wait(after, std::chrono::milliseconds(wait)) : s->read(after);
            res.set_content(ndjson(ms), "application/x-ndjson");
            return;
        }
        res.set_chunked_content_provider("application/x-ndjson", [this, s, after](size_t, httplib::DataSink& sink) mutable {
            while (!stopping && sink.is_writable()) {
                auto ms = s->wait(after, std::chrono::milliseconds(200));
                if (ms.empty()) {
                    if (s->closed()) break;
                    continue;
                }
                auto text = ndjson(ms);
                if (!sink.write(text.data(), text.size())) return false;
                after = ms.back().seq;
                return true;
            }
            sink.done();
            return true;
        });
    }

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server.Options(R"(.*)", [](const Request&, Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });

        server.Get("/health", guarded([](const Request&, Response& res) { send(res, {{"ok", true}}); }));

        server.Post("/sessions", guarded([this](const Request& req, Response& res) {
            auto body = parse_body(req);
            auto s = engine.create_session(body.value("profile_ns", std::string("default")));
            send(res, {{"session_id", s->session_id}, {"profile_ns", s->profile_ns}, {"created_at", s->created_at}});
        }));
        server.Get(R"(/sessions/([^/]+))", guarded([this](const Request& req, Response& res) {
            auto s = engine.session(req.matches[1]);
            send(res, {{"session_id", s->session_id},
                       {"profile_ns", s->profile_ns},
                       {"created_at", s->created_at},
                       {"streams", s->stream_ids()}});
        }));
        server.Post(R"(/sessions/([^/]+)/query)", guarded([this](const Request& req, Response& res) {
            auto s = engine.session(req.matches[1]);
            auto body = parse_body(req);
            QueryRequest q;
            if (!body.contains("question") || !body["question"].is_string()) {
                fail(ErrorCode::bad_request, "question must be a string");
            }
            q.question = body["question"].get<std::string>();
            q.objective = objective_arg(body);
            q.fallback = body.value("fallback", false);
            send(res, to_json(engine.query(*s, q)));
        }));
        server.Get(R"(/sessions/([^/]+)/stream)",
                   guarded([this](const Request& req, Response& res) { stream(req, res); }));
        server.Post(R"(/sessions/([^/]+)/answers)", guarded([this](const Request& req, Response& res) {
            auto body = parse_body(req);
            if (!body.contains("prompt_id") || !body["prompt_id"].is_string() || !body.contains("answer")) {
                fail(ErrorCode::bad_request, "body needs prompt_id and answer");
            }
            send(res, to_json(engine.answer(req.matches[1], body["prompt_id"].get<std::string>(),
                                            from_json(body["answer"]))));
        }));

        server.Get(R"(/plans/([^/]+))", guarded([this](const Request& req, Response& res) {
            send(res, engine.plan_view(req.matches[1]));
        }));
        server.Post("/plans/validate", guarded([this](const Request& req, Response& res) {
            send(res, report_json(engine.validate(plan_arg(parse_body(req)))));
        }));
        server.Post("/plans/refine", guarded([this](const Request& req, Response& res) {
            send(res, to_json(engine.refine(plan_arg(parse_body(req)))));
        }));
        server.Post("/plans/optimize", guarded([this](const Request& req, Response& res) {
            auto body = parse_body(req);
            send(res, to_json(engine.optimize(plan_arg(body), objective_arg(body))));
        }));
        server.Post("/plans/explain", guarded([this](const Request& req, Response& res) {
            auto body = parse_body(req);
            send(res, to_json(engine.explain(plan_arg(body), objective_arg(body))));
        }));
        server.Post("/plans/execute", guarded([this](const Request& req, Response& res) {
            auto body = parse_body(req);
            auto plan = plan_arg(body);
            bool wrapped = body.contains("plan");
            auto session = wrapped && body.contains("session_id")
                               ? engine.session(body["session_id"].get<std::string>())
                               : engine.create_session();
            ExecuteOptions o;
            if (wrapped) {
                o.node_cache = body.value("node_cache", true);
                o.fallback = body.value("fallback", false);
                o.concurrent = body.value("concurrent", true);
            }
            send(res, to_json(engine.execute(plan, *session, o)));
        }));

        server.Get("/registry/data", guarded([this](const Request& req, Response& res) {
            std::optional<MetadataLevel> level;
            if (req.has_param("level") && !req.get_param_value("level").empty()) {
                level = parse_level(req.get_param_value("level"));
            }
            auto k = int_param(req, "k", 10);
            if (k <= 0) fail(ErrorCode::bad_request, "k must be positive");
            json out = json::array();
            for (const auto& h : engine.search(req.get_param_value("query"), level, static_cast<std::size_t>(k))) {
                out.push_back(to_json(h));
            }
            send(res, out);
        }));
        server.Post("/registry/data/sources", guarded([this](const Request& req, Response& res) {
            send(res, to_json(engine.add_source(source_from_json(parse_body(req)))), 201);
        }));
        server.Post(R"(/registry/data/sources/([^/]+)/sync)", guarded([this](const Request& req, Response& res) {
            json out = json::array();
            for (const auto& e : engine.sync(req.matches[1])) out.push_back(to_json(e));
            send(res, out);
        }));
        server.Get("/registry/operators", guarded([this](const Request&, Response& res) {
            json out = json::array();
            for (const auto& d : engine.operators()) out.push_back(to_json(d));
            send(res, out);
        }));
    }
};

HttpService::HttpService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
    if (port == 0) {
        int p = impl_->server.bind_to_any_port(host);
        if (p <= 0) fail(ErrorCode::internal, "cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        fail(ErrorCode::internal, "cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpService::listen() {
    impl_->server.listen_after_bind();
}

void HttpService::stop() {
    impl_->stopping = true;
    impl_->server.stop();
}

bool HttpService::running() const { return impl_->server.is_running(); }

}  // namespace dil
