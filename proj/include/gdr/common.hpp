#ifndef GDR_COMMON_HPP
#define GDR_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gdr {

/**
 * Raised when a combination of options cannot be run, before any compute
 * happens. The CLI maps this to exit code 2.
 */
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/**
 * Raised by the input readers. Carries the 1-based row (and column when known)
 * of the offending entry.
 */
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t row, std::size_t column = 0)
        : std::runtime_error(msg), row_(row), column_(column) {}

    std::size_t row() const { return row_; }
    std::size_t column() const { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

/**
 * Raised when the optimizer produces a non-finite or runaway coordinate.
 * The CLI maps this to exit code 3.
 */
class NumericAbort : public std::runtime_error {
public:
    NumericAbort(const std::string& msg, std::size_t epoch, std::size_t point)
        : std::runtime_error(msg), epoch_(epoch), point_(point) {}

    std::size_t epoch() const { return epoch_; }
    std::size_t point() const { return point_; }

private:
    std::size_t epoch_;
    std::size_t point_;
};

/**
 * Small counter-friendly generator (splitmix64). Every point in every epoch
 * gets its own stream via `Rng::stream(seed, epoch, point)`, which makes
 * sampled quantities independent of the thread count.
 *
 * Satisfies UniformRandomBitGenerator so it can drive std distributions.
 */
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        Rng r(seed ^ 0x9E3779B97F4A7C15ULL);
        std::uint64_t s = r() ^ mix(a + 0xD1B54A32D192ED03ULL);
        s = mix(s ^ mix(b + 0x8CB92BA72F3D8DD7ULL));
        return Rng(s);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform integer in [0, bound), bound > 0 (Lemire's multiply-shift).
    std::uint64_t below(std::uint64_t bound) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * bound) >> 64);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

/**
 * Static contiguous partition of [0, n) over `threads` workers. The callback
 * receives (begin, end, worker). With threads <= 1 everything runs inline on
 * the calling thread.
 */
template<class Function>
void parallel_for(std::size_t n, int threads, Function fun) {
    if (threads <= 1 || n < 2) {
        fun(std::size_t(0), n, 0);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) {
            break;
        }
        pool.emplace_back([&fun, begin, end, w]() { fun(begin, end, static_cast<int>(w)); });
    }
    for (auto& t : pool) {
        t.join();
    }
}

/// Number of workers actually used by `parallel_for` for a request.
inline int resolve_threads(int requested) {
    if (requested > 0) {
        return requested;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

inline double squared_distance(const double* a, const double* b, std::size_t dim) {
    double out = 0;
    for (std::size_t c = 0; c < dim; ++c) {
        const double d = a[c] - b[c];
        out += d * d;
    }
    return out;
}

}

#endif
