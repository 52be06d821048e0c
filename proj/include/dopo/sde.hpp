#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dopo/errors.hpp"
#include "dopo/rng.hpp"

namespace dopo {

using Complex = std::complex<double>;

// Ito system with diagonal complex noise: one independent real Wiener
// increment per state component,
//   dy_j = drift_j(y,t) dt + amplitude_j(y,t) dW_j.
struct SdeSystem {
    std::size_t dimension = 0;
    // Number of leading components that carry noise; the rest have
    // structurally zero diffusion and consume no Wiener increments. Defaults
    // to `dimension`.
    std::size_t noise_dimension = static_cast<std::size_t>(-1);
    // write drift(state, t) into out (length = dimension)
    std::function<void(std::span<const Complex>, double, std::span<Complex>)> drift;
    // write the diagonal diffusion amplitudes into out (length = dimension)
    std::function<void(std::span<const Complex>, double, std::span<Complex>)> diffusion_amplitude;
    // Optional fast path: amplitude_j as a function of component j alone.
    // Must agree with diffusion_amplitude whenever set; lets the weak-2
    // stepper skip full-vector evaluations at the supporting points.
    std::function<Complex(std::size_t, Complex, double)> diffusion_component;
    // Optional boundary enforcement, applied in place after every step.
    std::function<void(std::span<Complex>, double)> post_step_hook;

    std::size_t noise_count() const {
        return noise_dimension == static_cast<std::size_t>(-1) ? dimension : noise_dimension;
    }
};

enum class Scheme { EulerMaruyama, WeakOrder2Platen };

struct IntegrationConfig {
    double dt = 2e-3;
    double t_final = 0.0;
    Scheme scheme = Scheme::WeakOrder2Platen;
    std::vector<double> sample_times; // sorted, within [0, t_final]
    std::uint64_t master_seed = 0;
    long n_trajectories = 1;
    double max_failure_fraction = 0.0;

    void validate() const; // throws ConfigError
};

struct TrajectoryState {
    std::vector<Complex> variables;
    double time = 0.0;
};

struct EnsembleSnapshot {
    double time = 0.0;
    std::vector<std::vector<Complex>> states; // one vector per trajectory
};

// Scratch buffers so stepping does not allocate.
struct StepScratch {
    std::vector<Complex> drift0, diff0, ybar, driftbar, support;
    void resize(std::size_t dim);
};

// Explicit Euler-Maruyama. `increments` holds one N(0,dt) draw per component.
// The state is advanced in place and `time` moves to time + dt.
void euler_maruyama_step(const SdeSystem& system, std::span<Complex> state,
                         double time, double dt, std::span<const double> increments,
                         StepScratch& scratch, long trajectory_index = -1);

// Derivative-free explicit weak order-2.0 scheme for diagonal noise
// (Kloeden-Platen family). Supporting values sit at y + drift*dt +- amp*sqrt(dt);
// with zero diffusion the update reduces exactly to the order-2 Heun step.
void platen_weak2_step(const SdeSystem& system, std::span<Complex> state,
                       double time, double dt, std::span<const double> increments,
                       StepScratch& scratch, long trajectory_index = -1);

// Integrates one trajectory from t=0, recording the state at the first grid
// time at or after each requested sample time. Deterministic in (system,
// config, rng).
std::vector<TrajectoryState> integrate_trajectory(const SdeSystem& system,
                                                  const IntegrationConfig& config,
                                                  Rng rng,
                                                  std::span<const Complex> initial,
                                                  long trajectory_index = -1);

// Streaming consumer for batch runs. Trajectories are processed in fixed
// blocks; each completed block is handed over exactly once. Calls may come
// from different threads but never concurrently for the same block, and block
// coverage is a partition of [0, n_trajectories).
class BatchSink {
  public:
    virtual ~BatchSink() = default;
    // samples[s] is a flat buffer of `count * dimension` values; trajectory
    // (first + k) occupies [k*dim, (k+1)*dim) at sample time s. valid[k] = 0
    // marks a failed (excluded) trajectory whose buffer rows are zero.
    virtual void consume_block(std::size_t block_index, long first, long count,
                               const std::vector<std::vector<Complex>>& samples,
                               const std::vector<std::uint8_t>& valid) = 0;
};

struct BatchStats {
    long n_requested = 0;
    long n_failed = 0;
    std::vector<long> failed_indices;
};

// Trajectories are dispatched in fixed index blocks of this size; sinks can
// size per-block storage as ceil(n / kBatchBlockSize).
inline constexpr long kBatchBlockSize = 64;

// Runs n_trajectories independent trajectories (vacuum start unless
// `initial` given), trajectory-parallel, with per-trajectory substreams
// derived from (master_seed, index). Results do not depend on thread count.
BatchStats run_batch_streaming(const SdeSystem& system, const IntegrationConfig& config,
                               BatchSink& sink, unsigned n_threads = 0,
                               std::span<const Complex> initial = {});

// Materializing variant: snapshots at each sample time, failed trajectories
// excluded (aborts if the failure fraction exceeds the configured limit).
std::vector<EnsembleSnapshot> run_batch(const SdeSystem& system,
                                        const IntegrationConfig& config,
                                        unsigned n_threads = 0,
                                        std::span<const Complex> initial = {});

// First integration-grid index at or after t (grid spacing dt).
std::size_t sample_step_index(double t, double dt);

// Number of worker threads: DOPO_THREADS env var caps hardware concurrency.
unsigned resolve_thread_count(unsigned requested = 0);

} // namespace dopo
