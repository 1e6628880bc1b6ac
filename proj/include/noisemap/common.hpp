#pragma once

#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace noisemap {

/// Invalid run configuration (bad flag, malformed config file, ...).
/// CLI maps this to exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Missing or malformed data (absent array, manifest mismatch, ...).
/// CLI maps this to exit code 3.
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure (divergence, NaN loss, singular system at alpha = 0).
/// CLI maps this to exit code 4.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

/// Worker cap for sample-level parallelism: hardware concurrency, optionally
/// reduced by the NOISEMAP_THREADS environment variable.
inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("NOISEMAP_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
    }
    return n;
}

/// Run fn(i) for i in [0, count) on up to worker_count() threads (or an
/// explicit worker count when given). Each index must write only its own
/// outputs; results are then identical for any worker count.
inline void parallel_for(int count, const std::function<void(int)>& fn, unsigned workers_override = 0) {
    unsigned workers = workers_override > 0 ? workers_override : worker_count();
    workers = std::min<unsigned>(workers, count > 0 ? static_cast<unsigned>(count) : 1u);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr error;
    std::mutex error_lock;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = static_cast<int>(w); i < count; i += static_cast<int>(workers)) fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> guard(error_lock);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace noisemap
