#include <doctest.h>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "dil/core/codec.hpp"
#include "dil/core/digest.hpp"
#include "support/bay_area_oracle.hpp"
#include "support/service_env.hpp"

using namespace dil;
using dil::testing::kFixtures;
using dil::testing::read_json;
using json = nlohmann::json;

namespace {

const std::string kBayArea = "What are data scientist jobs suitable for me in the bay area?";

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

// A config over the fixtures with its own state directory.
struct CliEnv {
    std::filesystem::path dir = testing::scratch_dir("cli");
    std::filesystem::path config = dir / "config.json";

    CliEnv() {
        auto j = read_json(kFixtures / "config.json");
        j["base_dir"] = kFixtures.string();
        j["state_dir"] = (dir / "state").string();
        std::ofstream(config) << j.dump();
    }
    ~CliEnv() {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
    }

    CliResult run(const std::vector<std::string>& args, const std::string& input = "", bool with_config = true) const {
        std::string cmd = quote(DIL_CLI);
        if (with_config) cmd += " --config " + quote(config.string());
        for (const auto& a : args) cmd += " " + quote(a);
        auto in = dir / "stdin.txt", out = dir / "stdout.txt", err = dir / "stderr.txt";
        std::ofstream(in) << input;
        cmd += " < " + quote(in.string()) + " > " + quote(out.string()) + " 2> " + quote(err.string());
        int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }

    json run_json(const std::vector<std::string>& args) const {
        auto a = args;
        a.insert(a.begin(), "--json");
        auto r = run(a);
        REQUIRE_MESSAGE(r.code == 0, r.err);
        return json::parse(r.out);
    }
};

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::string oracle_digest() { return sorted_rows_digest(table_from_rows(testing::bay_area_oracle_rows())); }

}  // namespace

TEST_CASE("query with scripted answers prints the oracle rows") {
    CliEnv env;
    auto answers = (kFixtures / "answers/bay_area.json").string();
    auto r = env.run({"query", kBayArea, "--answers", answers});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(count_lines(r.out) == 1 + 4);
    for (const char* city : {"San Francisco", "San Jose", "Oakland"}) CHECK(r.out.find(city) != std::string::npos);

    auto j = env.run_json({"query", kBayArea, "--answers", answers, "--session", "other"});
    CHECK(j["status"] == "done");
    CHECK(sorted_rows_digest(batch_from_json(j["record"]["final"]).tables.at(0)) == oracle_digest());

    // the stored answer is reused within its lifetime, so no script is needed
    auto again = env.run({"query", kBayArea});
    CHECK(again.code == 0);
    CHECK(again.out == r.out);
}

TEST_CASE("query reads answers from stdin") {
    CliEnv env;
    auto r = env.run({"query", kBayArea}, "{\"min_salary\": 150000}\n");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(count_lines(r.out) == 5);
    CHECK(r.err.find("what jobs are suitable for me?") != std::string::npos);

    CliEnv fresh;
    auto retries = fresh.run({"query", kBayArea}, "lots\nplenty\nheaps\n");
    CHECK(retries.code == 1);
    CHECK(retries.err.find("verification_failed") != std::string::npos);

    CliEnv silent;
    CHECK(silent.run({"query", kBayArea}).code == 1);
}

TEST_CASE("query --explain prints the cost table first") {
    CliEnv env;
    auto r = env.run({"query", kBayArea, "--explain", "--answers", (kFixtures / "answers/bay_area.json").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("node_id", 0) == 0);
    CHECK(r.out.find("nl2u") != std::string::npos);
}

TEST_CASE("plan commands") {
    CliEnv env;
    auto single = env.dir / "single.json";
    std::ofstream(single) << R"({"nodes": {"q": {"operator_id": "nl2llm",
        "attributes": {"question": "which locations are considered bay area?"}}}, "edges": [], "root": "q"})";
    auto r = env.run({"plan", "explain", single.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(count_lines(r.out) == 2);

    auto refined = env.run_json({"plan", "refine", (kFixtures / "plans/extraction_roles.json").string()});
    CHECK_FALSE(refined["alternatives"].empty());
    auto optimized = env.run_json({"plan", "optimize", (kFixtures / "plans/extraction_roles.json").string()});
    CHECK(optimized["alternatives"].empty());

    CHECK(env.run({"plan", "explain", (env.dir / "missing.json").string()}).code == 1);
    std::ofstream(env.dir / "cyclic.json") << R"({"nodes": {"a": {"operator_id": "filter", "attributes": {"predicate": "x = 1"}}},
        "edges": [{"from": "a", "to": "a", "port": 0}], "root": "a"})";
    CHECK(env.run({"plan", "optimize", (env.dir / "cyclic.json").string()}).code == 1);
}

TEST_CASE("registry and fixtures commands") {
    CliEnv env;
    auto s = env.run({"registry", "sync", "jobs_db"});
    REQUIRE_MESSAGE(s.code == 0, s.err);
    CHECK(s.out.find("rows=12") != std::string::npos);
    CHECK(env.run({"registry", "sync", "nope"}).code == 1);

    auto hits = env.run_json({"registry", "search", "jobs", "--k", "3"});
    REQUIRE(hits.size() == 3);
    CHECK(hits[0]["entry"]["path"] == json::array({"jobs_db", "main", "jobs"}));
    auto attrs = env.run_json({"registry", "search", "salary", "--level", "attribute"});
    for (const auto& h : attrs) CHECK(h["entry"]["level"] == "attribute");
    CHECK(env.run({"registry", "search", "jobs", "--level", "galaxy"}).code == 1);

    auto load = env.run({"fixtures", "load", kFixtures.string()});
    REQUIRE_MESSAGE(load.code == 0, load.err);
    CHECK(count_lines(load.out) == 5);
    CHECK(env.run({"fixtures", "load", kFixtures.string()}).code == 0);
}

TEST_CASE("usage errors exit 2") {
    CliEnv env;
    CHECK(env.run({"--bogus"}).code == 2);
    CHECK(env.run({}).code == 2);
    CHECK(env.run({"query"}).code == 2);
    CHECK(env.run({"plan", "launch", "x.json"}).code == 2);
    CHECK(env.run({"registry", "search", "jobs", "--k", "0"}).code == 2);
    CHECK(env.run({"query", kBayArea}, "", false).code == 2);  // no config anywhere
    CHECK(env.run({"--help"}).code == 0);
}

TEST_CASE("CLI and HTTP give the same answers") {
    CliEnv cli;
    testing::ServiceEnv http;

    SUBCASE("registry search") {
        for (const std::string q : {"jobs", "salary", "recipes", "bay area location"}) {
            CAPTURE(q);
            CHECK(cli.run_json({"registry", "search", q, "--k", "5"}) == http.get("/registry/data?query=" + std::string(q == "bay area location" ? "bay%20area%20location" : q) + "&k=5"));
        }
    }
    SUBCASE("registry sync") {
        CHECK(cli.run_json({"registry", "sync", "jobs_db"}) == http.post("/registry/data/sources/jobs_db/sync", json::object()));
    }
    SUBCASE("plans") {
        for (const auto& f : std::filesystem::directory_iterator(kFixtures / "plans")) {
            CAPTURE(f.path().filename());
            auto plan = read_json(f.path());
            auto refined = http.post("/plans/refine", plan);
            CHECK(cli.run_json({"plan", "refine", f.path().string()}) == refined);
            CHECK(cli.run_json({"plan", "optimize", f.path().string()}) == http.post("/plans/optimize", {{"plan", refined}}));
            CHECK(cli.run_json({"plan", "explain", f.path().string()}) == http.post("/plans/explain", {{"plan", plan}}));
        }
    }
    SUBCASE("query") {
        auto j = cli.run_json({"query", kBayArea, "--answers", (kFixtures / "answers/bay_area.json").string()});
        auto session = http.post("/sessions", json::object())["session_id"].get<std::string>();
        auto q = http.post("/sessions/" + session + "/query", {{"question", kBayArea}});
        http.post("/sessions/" + session + "/answers",
                  {{"prompt_id", q["record"]["open_prompts"][0]}, {"answer", testing::bay_area_answer()}});
        auto view = http.get("/plans/" + q["plan_id"].get<std::string>());
        CHECK(j["plan"] == q["plan"]);
        CHECK(j["record"]["final_digest"] == view["record"]["final_digest"]);
    }
}
