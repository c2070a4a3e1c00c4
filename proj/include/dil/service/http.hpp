#pragma once

#include <memory>
#include <string>

#include "dil/service/engine.hpp"

namespace dil {

// The engine's HTTP surface. Streams are served as one JSON message per
// line: a long-lived chunked response by default, or with `wait_ms` a single
// long-poll reply holding whatever arrived after `after`.
class HttpService {
public:
    explicit HttpService(Engine& engine);
    ~HttpService();

    // Returns the bound port (0 picks a free one).
    int bind(const std::string& host, int port);
    void listen();  // blocks until stop()
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dil
