#ifndef ERGO_RNG_HPP
#define ERGO_RNG_HPP

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ergo {

// All randomness flows through explicitly seeded streams. A stream is a value
// type: copying it and drawing from the copy replays the same sequence. An
// ensemble of N jobs uses streams split(root, 0..N-1); the split is a pure
// function of (root, index), so results never depend on thread scheduling or
// worker count.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) {
        // xoshiro256++ state filled from a splitmix64 chain; splitmix's full
        // 64-bit avalanche keeps nearby seeds uncorrelated.
        for (auto& w : s_) w = splitmix64(seed);
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Strictly inside (0,1) so log(u) and tan(pi*(u-1/2)) stay finite.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Heavy-tail overflow guard bookkeeping: samplers that reject and redraw
    // count the rejections here so callers can report them.
    std::uint64_t resamples = 0;

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

// Stream i of a family rooted at `root`.
inline RngStream stream_at(std::uint64_t root, std::uint64_t index) {
    std::uint64_t h = root ^ (0xA24BAED4963EE407ull * (index + 1));
    return RngStream(splitmix64(h));
}

// Independent family root for a named sub-purpose (tag is a small constant).
inline std::uint64_t derive_root(std::uint64_t root, std::uint64_t tag) {
    std::uint64_t h = root ^ (0x9E6C63D0876A9A47ull * (tag + 1));
    return splitmix64(h);
}

// Runs fn(i) for i in [0,n) on `workers` threads. Each index is handed out in
// a fixed block partition and fn must write only to slot i of its output, so
// the result is identical for any worker count.
inline void parallel_for(std::size_t n, unsigned workers,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    if (workers > n) workers = static_cast<unsigned>(n);
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(error_mu);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace ergo

#endif
