#pragma once

#include <atomic>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace gatehouse {

using Timestamp = std::chrono::system_clock::time_point;

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() override { return std::chrono::system_clock::now(); }
};

/// Deterministic clock for scripted runs: starts at `start` and advances one
/// second per reading.
class LogicalClock final : public Clock {
public:
    explicit LogicalClock(Timestamp start = default_epoch()) : start_(start) {}

    Timestamp now() override {
        return start_ + std::chrono::seconds(ticks_.fetch_add(1, std::memory_order_relaxed));
    }

    /// 2026-01-01T00:00:00Z.
    static Timestamp default_epoch();

private:
    Timestamp start_;
    std::atomic<long long> ticks_{0};
};

/// "2026-01-01T00:00:00Z" (UTC, second resolution).
std::string format_iso8601(Timestamp t);
std::optional<Timestamp> parse_iso8601(std::string_view text);
/// "2026-01-01".
std::string format_date(Timestamp t);

} // namespace gatehouse
