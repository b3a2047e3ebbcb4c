#pragma once

#include <chrono>
#include <cstdint>
#include <thread>

namespace sgh {

/// Millisecond timestamps. The engine never reads wall time directly; it
/// goes through this interface so simulated runs are deterministic.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() const = 0;
    /// Move time forward to `t`. Never moves backwards.
    virtual void advance_to(std::int64_t t) = 0;
};

/// Discrete-event clock: advance_to jumps instantly.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(std::int64_t start = 0) : now_(start) {}
    std::int64_t now_ms() const override { return now_; }
    void advance_to(std::int64_t t) override {
        if (t > now_) now_ = t;
    }

private:
    std::int64_t now_;
};

/// Live clock: advance_to sleeps until the target instant.
class WallClock final : public Clock {
public:
    WallClock() : epoch_(std::chrono::steady_clock::now()) {}
    std::int64_t now_ms() const override {
        auto d = std::chrono::steady_clock::now() - epoch_;
        return std::chrono::duration_cast<std::chrono::milliseconds>(d).count();
    }
    void advance_to(std::int64_t t) override {
        std::int64_t now = now_ms();
        if (t > now) std::this_thread::sleep_for(std::chrono::milliseconds(t - now));
    }

private:
    std::chrono::steady_clock::time_point epoch_;
};

}  // namespace sgh
