#include <doctest.h>

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <thread>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"
#include "dil/registry/embedding.hpp"
#include "dil/sources/catalog.hpp"
#include "dil/sources/prompt_template.hpp"
#include "support/random_data.hpp"

using namespace dil;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(DIL_SOURCE_DIR) / "fixtures";

nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

RelationalSource jobs() { return RelationalSource("jobs_db", Map{{"fixture", "relational/jobs_db.json"}}, kFixtures); }

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::internal;
}

std::shared_ptr<StubBackend> stub(const std::string& json) { return StubBackend::from_json(nlohmann::json::parse(json)); }

}  // namespace

TEST_CASE("query_relational over the jobs fixture") {
    auto src = jobs();
    auto file = read_json(kFixtures / "relational/jobs_db.json");
    std::size_t manual = 0;
    for (const auto& r : file["tables"][0]["rows"]) {
        manual += r[1].get<std::string>().find("Data Scientist") != std::string::npos;
    }
    auto b = src.query("SELECT title FROM jobs WHERE title LIKE '%Data Scientist%'");
    REQUIRE(b.tables.size() == 1);
    CHECK(b.tables[0].rows.size() == manual);
    CHECK(manual == 8);
    for (const auto& r : b.tables[0].rows) CHECK(r.size() == 1);

    auto ordered = src.query("SELECT salary, title, id FROM jobs ORDER BY id");
    const auto& schema = *ordered.tables[0].schema;
    REQUIRE(schema.size() == 3);
    CHECK(schema[0].name == "salary");
    CHECK(schema[1].name == "title");
    CHECK(schema[2].name == "id");
    CHECK(schema[0].type == DeclaredType::integer);
    CHECK(ordered.tables[0].rows.size() == 12);

    auto none = src.query("SELECT * FROM jobs WHERE 1=0");
    CHECK(none.tables.size() == 1);
    CHECK(none.tables[0].rows.empty());
    CHECK(none.tables[0].schema->size() == 5);

    auto nulls = src.query("SELECT company FROM jobs WHERE id = 10");
    CHECK(nulls.tables[0].rows[0].at("company").is_null());

    CHECK(code_of([&] { src.query("DROP TABLE jobs"); }) == ErrorCode::bad_request);
    CHECK(code_of([&] { src.query("DELETE FROM jobs"); }) == ErrorCode::bad_request);
    CHECK(code_of([&] { src.query("SELECT 1; DROP TABLE jobs"); }) == ErrorCode::bad_request);
    CHECK(src.query("SELECT count(*) AS n FROM jobs").tables[0].rows[0].at("n") == Value(12));
    try {
        src.query("SELECT * FROM nowhere");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no such table: nowhere") != std::string::npos);
    }
}

TEST_CASE("SQL verification against a catalog") {
    auto src = jobs();
    SqlCatalog catalog{{"jobs", {"id", "title", "company", "location", "salary"}}};
    CHECK(src.verify("SELECT * FROM jobs WHERE title LIKE '%x%'", catalog).empty());
    CHECK(src.verify("SELECT count(*) FROM jobs", catalog).empty());
    auto unknown = src.verify("SELECT * FROM apartments", catalog);
    REQUIRE(unknown.size() == 1);
    CHECK(unknown[0].kind == "unknown_relation");
    CHECK(unknown[0].detail == "apartments");
    auto del = src.verify("DELETE FROM jobs", catalog);
    REQUIRE(!del.empty());
    CHECK(del[0].kind == "not_read_only");
    SqlCatalog narrow{{"jobs", {"id", "title"}}};
    auto cols = src.verify("SELECT salary FROM jobs", narrow);
    REQUIRE(cols.size() == 1);
    CHECK(cols[0].kind == "unknown_attribute");
    CHECK(src.verify("SELECT * FROM jobs", SqlCatalog{}).at(0).kind == "unknown_relation");
    CHECK(src.verify("SELEC nonsense", catalog).at(0).kind == "syntax");
    CHECK(src.query("SELECT count(*) AS n FROM jobs").tables[0].rows[0].at("n") == Value(12));
}

TEST_CASE("query_vector equals an exhaustive scan") {
    VectorStore store;
    store.create_collection("one", 3);
    store.add("one", {"x", {0.2, 0.5, -1.0}, Row{{"name", "x"}}});
    auto self = store.query("one", {0.2, 0.5, -1.0}, 1);
    REQUIRE(self.tables[0].rows.size() == 1);
    CHECK(std::abs(self.tables[0].rows[0].at("_score").as_float() - 1.0) <= 1e-9);
    CHECK(store.query("one", {1, 0, 0}, 10).tables[0].rows.size() == 1);
    CHECK(code_of([&] { store.query("one", {1, 0}, 1); }) == ErrorCode::bad_request);
    CHECK(code_of([&] { store.query("two", {1, 0, 0}, 1); }) == ErrorCode::not_found);
    CHECK(code_of([&] { store.query("one", {1, 0, 0}, 0); }) == ErrorCode::bad_request);

    testing::Gen g(11);
    for (int trial = 0; trial < 20; ++trial) {
        VectorStore s;
        const std::size_t dim = 8;
        s.create_collection("c", dim);
        std::vector<std::pair<std::string, std::vector<double>>> items;
        for (int i = 0; i < 20; ++i) {
            std::vector<double> v(dim);
            for (auto& x : v) x = g.coin(0.2) ? 0.0 : std::round(g.real(-2, 2) * 4) / 4;
            char id[8];
            std::snprintf(id, sizeof id, "i%02d", (i * 7) % 20);
            items.push_back({id, v});
            s.add("c", {id, v, Row{{"id", id}}});
        }
        std::vector<double> q(dim);
        for (auto& x : q) x = std::round(g.real(-2, 2) * 4) / 4;
        std::vector<std::pair<double, std::string>> scan;
        for (const auto& [id, v] : items) {
            double dot = 0, a = 0, b = 0;
            for (std::size_t k = 0; k < dim; ++k) {
                dot += v[k] * q[k];
                a += v[k] * v[k];
                b += q[k] * q[k];
            }
            scan.push_back({(a == 0 || b == 0) ? 0.0 : dot / std::sqrt(a * b), id});
        }
        std::sort(scan.begin(), scan.end(), [](const auto& x, const auto& y) {
            if (std::abs(x.first - y.first) > 1e-12) return x.first > y.first;
            return x.second < y.second;
        });
        for (auto policy : {kernels::Policy::serial, kernels::Policy::parallel}) {
            auto got = s.query("c", q, 5, policy).tables[0].rows;
            REQUIRE(got.size() == 5);
            for (int k = 0; k < 5; ++k) {
                CHECK(got[k].at("id") == Value(scan[k].second));
                CHECK(got[k].at("_score").as_float() == doctest::Approx(scan[k].first).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("recipe fixture embeds ingredient text") {
    VectorStore store(Map{{"fixture", "vector/recipes.json"}}, kFixtures);
    CHECK(store.collections() == std::vector<std::string>{"recipes"});
    auto all = store.query("recipes", embed("egg"), 10);
    CHECK(all.tables[0].rows.size() == 10);
    auto snap = store.snapshot();
    CHECK(snap.database == "default");
    CHECK(snap.collections.at(0).rows.size() == 10);
}

TEST_CASE("llm_query pipeline with the stub backend") {
    auto backend = StubBackend::from_file(kFixtures / "llm/stub_mapping.json");
    auto cache = std::make_shared<LlmCache>();
    LlmSource llm("llm", backend, cache);
    bool hit = true;
    auto b = llm.query("  which locations are   considered Bay Area? ", std::nullopt, {}, &hit);
    CHECK(!hit);
    const auto& rows = b.tables[0].rows;
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == Row{{"location", "San Francisco"}});
    CHECK(rows[1] == Row{{"location", "San Jose"}});
    CHECK(rows[2] == Row{{"location", "Oakland"}});
    CHECK(b.tables[0].schema->at(0).name == "location");
    CHECK(backend->calls() == 1);
    CHECK(backend->prompts()[0].rfind("[dil-prompt v1]\nTask: nl2llm\nQuestion: which locations are considered Bay Area?\n", 0) == 0);

    auto again = llm.query("which locations are considered Bay Area?", std::nullopt, {}, &hit);
    CHECK(hit);
    CHECK(backend->calls() == 1);
    CHECK(canonical_serialize(again) == canonical_serialize(b));

    auto nocache = llm.query("which locations are considered Bay Area?", std::nullopt, Map{{"cache", false}});
    CHECK(backend->calls() == 2);
    CHECK(nocache == b);

    auto none = llm.query("unmapped question about nothing", std::nullopt, {});
    CHECK(none.tables[0].rows.empty());
}

TEST_CASE("llm verification and retries") {
    auto bad = stub(R"([{"pattern": "bay area", "response": [{"location": 42}]}])");
    LlmSource llm("llm", bad, std::make_shared<LlmCache>());
    Schema schema{{"location", DeclaredType::string, "", false}};
    try {
        llm.query("which locations are considered Bay Area?", schema, Map{{"max_retries", 0}});
        FAIL("expected verification error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::verification_failed);
        CHECK(e.detail()["violations"].size() == 1);
        CHECK(e.detail()["attempts"] == 1);
    }
    CHECK(bad->calls() == 1);
    CHECK_THROWS_AS(llm.query("which locations are considered Bay Area?", schema, {}), Error);
    CHECK(bad->calls() == 4);
    CHECK(bad->prompts()[2].find("The previous answer was rejected:\n- row 0: location: expected string") != std::string::npos);
    CHECK(llm.cache()->size() == 0);

    auto down = stub(R"([{"pattern": ".", "unreachable": true}])");
    LlmSource offline("llm", down, nullptr);
    CHECK(code_of([&] { offline.query("anything", std::nullopt, {}); }) == ErrorCode::backend_unreachable);
}

TEST_CASE("automatic schema design") {
    CHECK(auto_schema("which locations are considered Bay Area?").at(0).name == "location");
    CHECK(auto_schema("what jobs are suitable for me?").at(0).name == "job");
    CHECK(auto_schema("what are data scientist jobs?").at(0).name == "job");
    CHECK(auto_schema("list the cities with ports").at(0).name == "port");
    CHECK(auto_schema("").at(0).name == "answer");
    CHECK(auto_schema("which cities?").at(0).type == DeclaredType::string);
    CHECK(auto_schema("which cities?").at(0).name == "city");
    CHECK(normalize_whitespace("  a \n\t b  ") == "a b");
}

TEST_CASE("http chat-completions backend") {
    httplib::Server server;
    std::string seen_auth, seen_model;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        seen_auth = req.get_header_value("Authorization");
        seen_model = body["model"];
        nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"},
                                                           {"content", "Sure: [{\"location\": \"Oakland\"}]"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("DIL_TEST_LLM_KEY", "k-123", 1);
    auto conn = resolve_env(Map{{"backend", "http"},
                                {"base_url", "http://127.0.0.1:" + std::to_string(port) + "/v1"},
                                {"model", "test-model"},
                                {"api_key", "${DIL_TEST_LLM_KEY}"}});
    auto backend = make_llm_backend(conn, kFixtures);
    LlmSource llm("llm", backend, std::make_shared<LlmCache>());
    auto b = llm.query("which locations are considered Bay Area?", std::nullopt, {});
    CHECK(b.tables[0].rows == std::vector<Row>{Row{{"location", "Oakland"}}});
    CHECK(seen_auth == "Bearer k-123");
    CHECK(seen_model == "test-model");
    server.stop();
    t.join();

    HttpBackend dead(Map{{"base_url", "http://127.0.0.1:1"}, {"model", "m"}, {"timeout_seconds", 1}});
    CHECK(code_of([&] { dead.complete("x", {}, {}); }) == ErrorCode::backend_unreachable);
    CHECK(parse_model_rows("no json here").rows[0].count("_raw") == 1);
}

TEST_CASE("user profile freshness and answer parsing") {
    CHECK(normalize_question("  What jobs are SUITABLE for me?! ") == "what jobs are suitable for me");
    auto clock = std::make_shared<ManualClock>();
    ProfileStore profiles(clock);
    CHECK(!profiles.lookup_fresh("default", "what jobs are suitable for me?"));
    profiles.store("default", "what jobs are suitable for me?", table_from_rows(nlohmann::json::parse(R"([{"min_salary":150000}])")), 100);
    CHECK(profiles.lookup_fresh("default", "What jobs are suitable for me"));
    CHECK(!profiles.lookup_fresh("other", "what jobs are suitable for me?"));
    clock->advance(99);
    CHECK(profiles.lookup_fresh("default", "what jobs are suitable for me?"));
    clock->advance(1);
    CHECK(!profiles.lookup_fresh("default", "what jobs are suitable for me?"));
    CHECK(profiles.lookup("default", "what jobs are suitable for me?"));

    ProfileStore copy(clock);
    copy.load_json(profiles.to_json());
    CHECK(copy.to_json() == profiles.to_json());

    Schema schema{{"min_salary", DeclaredType::integer, "", false}};
    auto obj = parse_user_answer(Value(Map{{"min_salary", 150000}}), schema);
    CHECK(obj.report.ok());
    CHECK(obj.table.rows == std::vector<Row>{Row{{"min_salary", 150000}}});
    auto text_json = parse_user_answer(Value("{\"min_salary\": 150000}"), schema);
    CHECK(text_json.table.rows == obj.table.rows);
    auto free = parse_user_answer(Value(" $150,000 "), schema);
    CHECK(free.report.ok());
    CHECK(free.table.rows == obj.table.rows);
    auto bad = parse_user_answer(Value("lots"), schema);
    CHECK(bad.report.size() == 1);
    auto list = parse_user_answer(Value(List{Value(Map{{"min_salary", 1}}), Value(Map{{"min_salary", 2}})}), schema);
    CHECK(list.table.rows.size() == 2);
    auto noschema = parse_user_answer(Value("anything at all"), {});
    CHECK(noschema.table.rows[0].at("answer") == Value("anything at all"));
}

TEST_CASE("web extraction from the fixture corpus") {
    auto golden = read_json(kFixtures / "web/golden/sf_apartments.json");
    auto schema = schema_from_value(from_json(golden["schema"]));
    WebSource web("web", std::make_shared<FixtureFetcher>(kFixtures / "web"), std::make_shared<HeuristicExtractor>(),
                  std::make_shared<LlmCache>());
    auto b = web.extract(golden["key"], schema, {});
    CHECK(b.tables[0].rows == table_from_rows(golden["rows"]).rows);

    auto empty = web.extract("https://listings.example/empty", schema, {});
    CHECK(empty.tables[0].rows.empty());

    auto wider = schema;
    wider.push_back({"parking_spots", DeclaredType::integer, "", false});
    auto w = web.extract(golden["key"], wider, {});
    REQUIRE(w.tables[0].rows.size() == 3);
    for (const auto& r : w.tables[0].rows) CHECK(r.at("parking_spots").is_null());

    CHECK(code_of([&] { web.extract("https://listings.example/missing", schema, {}); }) == ErrorCode::not_found);
    CHECK(code_of([&] { web.extract("../config.json", schema, {}); }) == ErrorCode::not_found);
}

TEST_CASE("catalog adapters feed registry sync") {
    auto cache = std::make_shared<LlmCache>();
    auto profiles = std::make_shared<ProfileStore>();
    SourceCatalog catalog(kFixtures, cache, profiles);
    DataRegistry reg;
    auto config = read_json(kFixtures / "config.json");
    for (const auto& s : config["sources"]) {
        auto d = source_from_json(s);
        reg.register_source(d);
        catalog.add(d);
    }
    for (const auto& d : reg.list_sources()) reg.sync_source(d.source_id, catalog);
    int collections = 0, attributes = 0;
    for (const auto& e : reg.subtree({"jobs_db"})) {
        collections += e.level == MetadataLevel::collection;
        attributes += e.level == MetadataLevel::attribute;
        if (e.level == MetadataLevel::collection) CHECK(e.statistics.row_count == 12);
    }
    CHECK(collections == 1);
    CHECK(attributes == 5);
    CHECK(reg.entry({"recipes", "default", "recipes"})->statistics.row_count == 10);
    CHECK(reg.entry({"llm", "capability"}));
    CHECK(reg.entry({"user", "capability"}));
    CHECK(reg.entry({"web", "capability"}));
    CHECK(code_of([&] { catalog.vector("jobs_db"); }) == ErrorCode::bad_request);
    CHECK(catalog.llm_for("jobs_db")->source_id() == "llm");

    SourceDescriptor broken{"broken", Protocol::relational, Map{{"path", "nowhere.sqlite"}}, false};
    reg.register_source(broken);
    catalog.add(broken);
    CHECK(code_of([&] { reg.sync_source("broken", catalog); }) == ErrorCode::backend_unreachable);
}
