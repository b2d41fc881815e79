#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dbgd/core.hpp"

namespace dbgd {

/// Environment variable that overrides any configured worker count.
inline constexpr const char* kWorkersEnv = "DBGD_WORKERS";

/// Worker count: DBGD_WORKERS if set, else `configured`, else the hardware
/// thread count (at least 1).
inline unsigned resolve_workers(std::optional<int> configured = std::nullopt) {
    if (const char* env = std::getenv(kWorkersEnv); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1 || v > 4096)
            throw ConfigError(std::string(kWorkersEnv) + " must be a positive integer, got '" + env + "'");
        return static_cast<unsigned>(v);
    }
    if (configured) {
        if (*configured < 1) throw ConfigError("workers must be at least 1");
        return static_cast<unsigned>(*configured);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, count) on up to `workers` threads. Every index
/// runs even if some throw; afterwards the exception of the smallest failing
/// index is rethrown, so the reported error does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
    std::vector<std::exception_ptr> errors(count);
    auto body = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) body(i);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace dbgd
