#include "dopo/rng.hpp"

#include <cmath>
#include <cstddef>

namespace dopo {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

// Ziggurat tables for the standard normal, 256 layers.
// Layer 0 is the base strip plus the tail beyond r; every piece has area v.
struct ZigguratTables {
    static constexpr int kLayers = 256;
    static constexpr double kR = 3.6541528853610088;
    static constexpr double kV = 4.92867323399e-3;
    double x[kLayers]; // x[0] = r, decreasing
    double y[kLayers]; // y[i] = exp(-x[i]^2/2), increasing

    ZigguratTables() {
        x[0] = kR;
        y[0] = std::exp(-0.5 * kR * kR);
        for (int i = 1; i < kLayers; ++i) {
            y[i] = y[i - 1] + kV / x[i - 1];
            x[i] = std::sqrt(-2.0 * std::log(y[i]));
        }
    }

    // Used by tests: the topmost layer must close the distribution.
    double closure() const { return y[kLayers - 1] + kV / x[kLayers - 1]; }
};

const ZigguratTables& ziggurat() {
    static const ZigguratTables tables;
    return tables;
}

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
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

double Rng::next_u01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_u01_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::next_gaussian() {
    const auto& z = ziggurat();
    for (;;) {
        const std::uint64_t bits = next_u64();
        const int layer = static_cast<int>(bits & 0xFF);
        const double sign = (bits & 0x100) ? -1.0 : 1.0;
        // 55-bit uniform magnitude in [0,1)
        const double a = static_cast<double>(bits >> 9) * 0x1.0p-55;

        if (layer == 0) {
            // base strip with pseudo-width v/y[0]; beyond r sample the tail
            const double w0 = ZigguratTables::kV / z.y[0];
            const double cand = a * w0;
            if (cand < ZigguratTables::kR) return sign * cand;
            for (;;) {
                const double xx = -std::log(next_u01_open()) / ZigguratTables::kR;
                const double yy = -std::log(next_u01_open());
                if (yy + yy > xx * xx) return sign * (ZigguratTables::kR + xx);
            }
        }

        const double cand = a * z.x[layer - 1];
        if (cand < z.x[layer]) return sign * cand; // fully inside the strip
        // wedge between x[layer] and x[layer-1]
        const double ylo = z.y[layer - 1];
        const double yhi = z.y[layer];
        const double yv = ylo + next_u01() * (yhi - ylo);
        if (yv < std::exp(-0.5 * cand * cand)) return sign * cand;
    }
}

Rng substream(std::uint64_t master_seed, std::uint64_t trajectory_index) {
    std::uint64_t sm = trajectory_index;
    const std::uint64_t mixed = splitmix64(sm);
    return Rng(master_seed ^ mixed);
}

std::uint64_t mix_seed(std::uint64_t master_seed, std::uint64_t salt) {
    std::uint64_t sm = master_seed + 0x632BE59BD9B4E019ull * (salt + 1);
    return splitmix64(sm);
}

void generate_wiener_increments(Rng& rng, std::size_t dimension, double dt,
                                std::span<double> out) {
    const double root_dt = std::sqrt(dt);
    for (std::size_t i = 0; i < dimension; ++i) out[i] = rng.next_gaussian() * root_dt;
}

} // namespace dopo
