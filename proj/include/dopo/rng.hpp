#pragma once

#include <cstdint>
#include <span>

namespace dopo {

// xoshiro256++ with splitmix64 seeding. We roll our own generator (and the
// Gaussian sampler below) instead of <random> because the standard library's
// distributions are implementation-defined, which would break bit-exact
// reproducibility of runs.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // uniform in [0,1)
    double next_u01();

    // uniform in (0,1], safe as a log() argument
    double next_u01_open();

    // standard normal via a 256-layer ziggurat
    double next_gaussian();

  private:
    std::uint64_t s_[4];
};

// Deterministic per-trajectory substream: a pure function of
// (master_seed, trajectory_index), independent of execution order.
Rng substream(std::uint64_t master_seed, std::uint64_t trajectory_index);

// Mixes a label index into a master seed (used when sweep labels should not
// share noise realizations).
std::uint64_t mix_seed(std::uint64_t master_seed, std::uint64_t salt);

// `dimension` independent N(0, dt) increments.
void generate_wiener_increments(Rng& rng, std::size_t dimension, double dt,
                                std::span<double> out);

} // namespace dopo
