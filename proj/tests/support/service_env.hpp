#pragma once

// An engine over the committed fixtures with a throwaway state directory,
// optionally served over HTTP on a free local port.

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <sstream>
#include <thread>

#include "dil/service/engine.hpp"
#include "dil/service/http.hpp"
#include "support/fixture_env.hpp"

namespace dil::testing {

inline std::filesystem::path scratch_dir(const std::string& tag) {
    static std::atomic<int> n{0};
    std::random_device rd;
    auto dir = std::filesystem::temp_directory_path() /
               ("dil-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(n++));
    std::filesystem::create_directories(dir);
    return dir;
}

inline EngineConfig fixture_config(const std::filesystem::path& state_dir) {
    auto c = EngineConfig::load(kFixtures / "config.json");
    c.state_dir = state_dir;
    return c;
}

struct ServiceEnv {
    std::filesystem::path state = scratch_dir("svc");
    std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>();
    Engine engine{fixture_config(state), clock};
    HttpService service{engine};
    int port = 0;
    std::thread thread;

    ServiceEnv() {
        port = service.bind("127.0.0.1", 0);
        thread = std::thread([this] { service.listen(); });
        while (!service.running()) std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    ~ServiceEnv() {
        service.stop();
        thread.join();
        std::error_code ec;
        std::filesystem::remove_all(state, ec);
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(30, 0);
        return c;
    }

    static nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

    nlohmann::json post(const std::string& path, const nlohmann::json& j, int expect = 200) const {
        auto r = client().Post(path, j.dump(), "application/json");
        if (!r) throw std::runtime_error("no response from " + path);
        if (r->status != expect) {
            throw std::runtime_error(path + " gave " + std::to_string(r->status) + ": " + r->body);
        }
        return body(r);
    }

    nlohmann::json get(const std::string& path, int expect = 200) const {
        auto r = client().Get(path);
        if (!r) throw std::runtime_error("no response from " + path);
        if (r->status != expect) {
            throw std::runtime_error(path + " gave " + std::to_string(r->status) + ": " + r->body);
        }
        return body(r);
    }

    // Long-poll read of a session stream.
    std::vector<nlohmann::json> poll(const std::string& session, std::int64_t after, int wait_ms = 0) const {
        auto r = client().Get("/sessions/" + session + "/stream?after=" + std::to_string(after) +
                              "&wait_ms=" + std::to_string(wait_ms));
        if (!r || r->status != 200) throw std::runtime_error("stream poll failed");
        std::vector<nlohmann::json> out;
        std::istringstream in(r->body);
        for (std::string line; std::getline(in, line);) {
            if (!line.empty()) out.push_back(nlohmann::json::parse(line));
        }
        return out;
    }
};

}  // namespace dil::testing
