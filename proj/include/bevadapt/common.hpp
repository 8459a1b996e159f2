#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <sstream>
#include <cmath>

namespace bevadapt {

// Error type for contract violations (bad arguments, invariant breaches).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Error type for I/O failures (datasets, checkpoints). Carries enough context
// to locate the failure (file, record index, byte offset) in the message.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void check_fail(const char* expr, const char* file, int line, const std::string& msg) {
    std::ostringstream os;
    os << file << ":" << line << ": check failed: " << expr;
    if (!msg.empty()) os << " — " << msg;
    throw ContractError(os.str());
}
} // namespace detail

#define BEVA_CHECK(cond, msg)                                                    \
    do {                                                                         \
        if (!(cond)) ::bevadapt::detail::check_fail(#cond, __FILE__, __LINE__, (msg)); \
    } while (0)

inline bool is_finite(double x) { return std::isfinite(x); }

// FNV-1a, used for config hashes and for deriving RNG streams.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    // splitmix-style mix of two words
    std::uint64_t x = a + 0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27; x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

} // namespace bevadapt
