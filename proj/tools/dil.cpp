#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"
#include "dil/service/engine.hpp"
#include "dil/service/http.hpp"
#include "dil/sources/user.hpp"

using namespace dil;
using json = nlohmann::json;

namespace {

HttpService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::not_found, "cannot read " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorCode::bad_request, path + ": " + e.what());
    }
}

std::optional<Objective> floor_objective(double floor) {
    if (floor < 0) return std::nullopt;
    Objective o;
    o.quality_floor = floor;
    return o;
}

Value parse_answer_line(const std::string& line) {
    try {
        return from_json(json::parse(line));
    } catch (const json::exception&) {
        return Value(line);
    }
}

// The prompt message behind an open prompt id.
std::optional<StreamMessage> prompt_message(Session& s, const std::string& prompt_id) {
    for (const auto& m : s.stream()->read(0)) {
        if (m.kind != MessageKind::prompt) continue;
        if (const Value* id = m.payload.find("prompt_id"); id && id->as_string() == prompt_id) return m;
    }
    return std::nullopt;
}

Value answer_for(const StreamMessage& prompt, const std::optional<json>& script) {
    auto question = prompt.payload.find("question")->as_string();
    if (script) {
        for (const auto& [q, a] : script->items()) {
            if (normalize_question(q) == normalize_question(question)) return from_json(a);
        }
        fail(ErrorCode::bad_request, "no scripted answer for: " + question);
    }
    std::cerr << "? " << question << "\n";
    if (const Value* schema = prompt.payload.find("output_schema")) std::cerr << "  expected: " << to_json(*schema).dump() << "\n";
    if (const Value* fb = prompt.payload.find("feedback"); fb && fb->is_list()) {
        for (const auto& f : fb->as_list()) std::cerr << "  rejected: " << f.as_string() << "\n";
    }
    std::cerr << "> " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) fail(ErrorCode::bad_request, "no answer on stdin for: " + question);
    return parse_answer_line(line);
}

int run_query(Engine& engine, const std::string& question, const std::string& profile, bool explain,
              const std::string& answers_file, bool as_json, double floor) {
    std::optional<json> script;
    if (!answers_file.empty()) script = read_json_file(answers_file);
    auto session = engine.create_session(profile.empty() ? "default" : profile);
    auto result = engine.query(*session, QueryRequest{question, floor_objective(floor), false});
    if (explain && !as_json) std::cout << render_table(engine.explain(result.plan, floor_objective(floor))) << "\n";

    auto record = result.record;
    while (record.status == "suspended") {
        auto pid = record.open_prompts.at(0);
        auto msg = prompt_message(*session, pid);
        if (!msg) fail(ErrorCode::internal, "prompt " + pid + " is not on the stream");
        record = engine.answer(session->session_id, pid, answer_for(*msg, script));
    }
    if (record.status != "done") {
        for (const auto& m : session->stream()->read(0)) {
            if (m.kind != MessageKind::error) continue;
            auto code = m.payload.find("code")->as_string();
            for (auto c : {ErrorCode::bad_request, ErrorCode::not_found, ErrorCode::conflict, ErrorCode::infeasible,
                           ErrorCode::backend_unreachable, ErrorCode::verification_failed}) {
                if (to_string(c) == code) fail(c, m.payload.find("message")->as_string());
            }
            fail(ErrorCode::internal, m.payload.find("message")->as_string());
        }
        fail(ErrorCode::internal, "query ended " + record.status);
    }
    if (as_json) {
        result.record = record;
        std::cout << to_json(result).dump(2) << "\n";
    } else {
        std::cout << render_table(record.final->tables.at(0));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data intelligence layer: federated question answering over registered sources"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config;
    app.add_option("--config", config, "config file (default: $DIL_CONFIG)");
    bool as_json = false;
    app.add_flag("--json", as_json, "machine-readable output");

    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--port", port, "port")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "address to bind");

    auto* registry = app.add_subcommand("registry", "data registry");
    registry->require_subcommand(1);
    auto* sync = registry->add_subcommand("sync", "re-read a source's metadata");
    std::string source;
    sync->add_option("SOURCE", source)->required();
    auto* search = registry->add_subcommand("search", "search metadata");
    std::string query_text;
    std::string level;
    int k = 10;
    search->add_option("QUERY", query_text)->required();
    search->add_option("--level", level, "source, schema, collection or attribute");
    search->add_option("--k", k)->check(CLI::PositiveNumber);

    auto* query = app.add_subcommand("query", "answer a question");
    std::string question, session, answers;
    bool explain = false;
    double floor = -1;
    query->add_option("QUESTION", question)->required();
    query->add_option("--session", session, "profile namespace for stored answers");
    query->add_flag("--explain", explain, "print the chosen plan's cost table first");
    query->add_option("--answers", answers, "JSON file of question -> answer for prompts")->check(CLI::ExistingFile);
    query->add_option("--floor", floor, "quality floor (default from config)")->check(CLI::Range(0.0, 1.0));

    auto* plan = app.add_subcommand("plan", "work on a plan file");
    plan->require_subcommand(1);
    std::string plan_file;
    std::string plan_action;
    for (const char* action : {"refine", "optimize", "explain"}) {
        auto* sub = plan->add_subcommand(action, std::string(action) + " PLAN.json");
        sub->add_option("PLAN", plan_file)->required();
        sub->add_option("--floor", floor, "quality floor")->check(CLI::Range(0.0, 1.0));
        sub->callback([&plan_action, action] { plan_action = action; });
    }

    auto* fixtures = app.add_subcommand("fixtures", "fixture data");
    fixtures->require_subcommand(1);
    auto* load = fixtures->add_subcommand("load", "register and sync the sources of DIR/config.json");
    std::string dir;
    load->add_option("DIR", dir)->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    std::filesystem::path config_file;
    try {
        config_file = config_path(config);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        Engine engine(EngineConfig::load(config_file));

        if (*serve) {
            HttpService service(engine);
            int bound = service.bind(host, port);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on http://" << host << ":" << bound << std::endl;
            service.listen();
            g_service = nullptr;
            return 0;
        }
        if (*sync) {
            auto tree = engine.sync(source);
            if (as_json) {
                json out = json::array();
                for (const auto& e : tree) out.push_back(to_json(e));
                std::cout << out.dump(2) << "\n";
            } else {
                for (const auto& e : tree) {
                    std::cout << to_string(e.level) << "  " << e.path_string();
                    if (e.statistics.row_count) std::cout << "  rows=" << *e.statistics.row_count;
                    std::cout << "\n";
                }
            }
            return 0;
        }
        if (*search) {
            std::optional<MetadataLevel> lv;
            if (!level.empty()) lv = parse_level(level);
            auto hits = engine.search(query_text, lv, static_cast<std::size_t>(k));
            if (as_json) {
                json out = json::array();
                for (const auto& h : hits) out.push_back(to_json(h));
                std::cout << out.dump(2) << "\n";
            } else {
                Table t;
                for (const auto& h : hits) {
                    t.rows.push_back(Row{{"path", h.entry.path_string()},
                                         {"level", std::string(to_string(h.entry.level))},
                                         {"score", h.score},
                                         {"description", h.entry.description}});
                }
                t.schema = Schema{{"path", DeclaredType::string, "", false},
                                  {"level", DeclaredType::string, "", false},
                                  {"score", DeclaredType::floating, "", false},
                                  {"description", DeclaredType::string, "", false}};
                std::cout << render_table(t);
            }
            return 0;
        }
        if (*query) return run_query(engine, question, session, explain, answers, as_json, floor);
        if (*plan) {
            auto p = plan_from_json(read_json_file(plan_file));
            auto objective = floor_objective(floor);
            if (plan_action == "refine") {
                std::cout << to_json(engine.refine(p)).dump(2) << "\n";
            } else if (plan_action == "optimize") {
                std::cout << to_json(engine.optimize(engine.refine(p), objective)).dump(2) << "\n";
            } else {
                auto t = engine.explain(p, objective);
                std::cout << (as_json ? to_json(t).dump(2) + "\n" : render_table(t));
            }
            return 0;
        }
        if (*load) {
            for (const auto& d : engine.load_fixtures(dir)) {
                std::cout << d.source_id << " (" << to_string(d.protocol) << ")\n";
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        if (!e.detail().is_null()) std::cerr << e.detail().dump(2) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
