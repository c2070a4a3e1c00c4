#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>

namespace dil {

// Wall clock in Unix seconds; injectable so freshness rules can be tested.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now() const = 0;
};

class SystemClock final : public Clock {
public:
    std::int64_t now() const override {
        return std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    }
};

class ManualClock final : public Clock {
public:
    explicit ManualClock(std::int64_t start = 1'700'000'000) : t_(start) {}
    std::int64_t now() const override { return t_.load(); }
    void advance(std::int64_t seconds) { t_ += seconds; }
    void set(std::int64_t t) { t_ = t; }

private:
    std::atomic<std::int64_t> t_;
};

inline std::shared_ptr<const Clock> system_clock() {
    static auto clock = std::make_shared<const SystemClock>();
    return clock;
}

}  // namespace dil
