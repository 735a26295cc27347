#include "slowfast/rng.hpp"

#include <cmath>

namespace slowfast {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) noexcept {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, c[0], hi0, lo0);
        mulhilo(kPhiloxM1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += kPhiloxW0;
        k[1] += kPhiloxW1;
    }
    return c;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, StreamId id) noexcept : seed_(seed), id_(id) {
    const std::uint64_t tag = (static_cast<std::uint64_t>(id.purpose) << 32) | id.index;
    const std::uint64_t k = splitmix64(seed ^ splitmix64(tag));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

void RngStream::refill() noexcept {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(id_.replica), static_cast<std::uint32_t>(id_.replica >> 32)};
    buf_ = philox4x32(ctr, key_);
    ++block_;
    used_ = 0;
}

std::uint64_t RngStream::next_u64() noexcept {
    if (used_ > 2) refill();
    const std::uint64_t v = (static_cast<std::uint64_t>(buf_[used_]) << 32) | buf_[used_ + 1];
    used_ += 2;
    return v;
}

double RngStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Marsaglia polar method on 32-bit halves; each Philox block yields two candidate pairs.
    double u, v, s;
    do {
        if (used_ > 2) refill();
        u = (static_cast<double>(buf_[used_]) + 0.5) * 0x1.0p-31 - 1.0;
        v = (static_cast<double>(buf_[used_ + 1]) + 0.5) * 0x1.0p-31 - 1.0;
        used_ += 2;
        s = u * u + v * v;
    } while (s >= 1.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

void RngStream::fill_normal(std::span<double> out) noexcept {
    for (double& x : out) x = normal();
}

void RngStream::seek(std::uint64_t block) noexcept {
    block_ = block;
    used_ = 4;
    has_spare_ = false;
}

RngStream RngStream::substream(std::uint32_t index) const noexcept {
    StreamId id = id_;
    id.index = index;
    return RngStream(seed_, id);
}

}  // namespace slowfast
