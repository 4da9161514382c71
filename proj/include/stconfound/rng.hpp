#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., Random123). A key
// (the user seed) and a 64-bit stream id select an independent substream, so
// replicate r of a study draws from the same numbers however the replicates
// are scheduled.

#include <array>
#include <cstdint>
#include <limits>

namespace stconfound {

class Philox4x32 {
public:
    using result_type = std::uint32_t;
    using counter_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    static constexpr const char* name = "philox4x32-10/v1";

    Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (pos_ == 4) {
            const counter_type ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                   static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
            buffer_ = bijection(ctr, key_);
            ++block_;
            pos_ = 0;
        }
        return buffer_[pos_++];
    }

    /// The raw 10-round Philox bijection.
    static counter_type bijection(counter_type ctr, key_type key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    key_type key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    counter_type buffer_{};
    int pos_ = 4;
};

}  // namespace stconfound
