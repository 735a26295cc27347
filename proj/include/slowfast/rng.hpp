#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace slowfast {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// What a stream is used for. Distinct purposes never share a stream.
enum class Purpose : std::uint32_t {
    SlowNoise = 1,
    FastNoise = 2,
    FilterPropagate = 3,
    FilterResample = 4,
    Frozen = 5,
    Averaged = 6,
    Poisson = 7,
    Generic = 8,
};

struct StreamId {
    std::uint64_t replica = 0;
    Purpose purpose = Purpose::Generic;
    std::uint32_t index = 0;
};

/// Counter-based normal/uniform stream keyed by (seed, replica, purpose, index).
///
/// Output is a pure function of the key and the block counter, so any stream can be
/// recreated on any thread and replayed from any block with `seek`.
class RngStream {
public:
    RngStream(std::uint64_t seed, StreamId id) noexcept;

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on (0, 1).
    double uniform_open() noexcept;
    double normal() noexcept;
    void fill_normal(std::span<double> out) noexcept;
    std::uint64_t next_u64() noexcept;

    /// Position the stream at the start of block `block`; drops any cached normal.
    void seek(std::uint64_t block) noexcept;
    std::uint64_t block() const noexcept { return block_; }

    std::uint64_t seed() const noexcept { return seed_; }
    const StreamId& id() const noexcept { return id_; }

    /// A new stream with the same key material but a different sub-index.
    RngStream substream(std::uint32_t index) const noexcept;

private:
    void refill() noexcept;

    std::uint64_t seed_;
    StreamId id_;
    std::array<std::uint32_t, 2> key_{};
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace slowfast
