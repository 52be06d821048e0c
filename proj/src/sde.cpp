#include "dopo/sde.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

namespace dopo {

namespace {

constexpr long kBlockSize = kBatchBlockSize;

bool all_finite(std::span<const Complex> v) {
    for (const auto& z : v) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

void check_finite(std::span<const Complex> state, double t, long traj) {
    if (!all_finite(state)) {
        throw IntegrationError("non-finite state at t=" + std::to_string(t) +
                                   (traj >= 0 ? " in trajectory " + std::to_string(traj) : ""),
                               traj, t);
    }
}

} // namespace

void IntegrationConfig::validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (n_trajectories < 1) throw ConfigError("n_trajectories must be >= 1");
    if (max_failure_fraction < 0.0 || max_failure_fraction > 1.0)
        throw ConfigError("max_failure_fraction must be in [0,1]");
    double prev = 0.0;
    for (double t : sample_times) {
        if (t < 0.0 || t > t_final + 1e-12)
            throw ConfigError("sample time " + std::to_string(t) + " outside [0, t_final]");
        if (t < prev) throw ConfigError("sample_times must be sorted");
        prev = t;
    }
}

void StepScratch::resize(std::size_t dim) {
    drift0.resize(dim);
    diff0.resize(dim);
    ybar.resize(dim);
    driftbar.resize(dim);
    support.resize(dim);
}

std::size_t sample_step_index(double t, double dt) {
    if (t <= 0.0) return 0;
    return static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
}

unsigned resolve_thread_count(unsigned requested) {
    unsigned n = requested ? requested : std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("DOPO_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
    }
    return n;
}

void euler_maruyama_step(const SdeSystem& system, std::span<Complex> state,
                         double time, double dt, std::span<const double> increments,
                         StepScratch& scratch, long trajectory_index) {
    const std::size_t dim = system.dimension;
    const std::size_t n_noise = system.noise_count();
    scratch.resize(dim);
    system.drift(state, time, scratch.drift0);
    system.diffusion_amplitude(state, time, scratch.diff0);
    for (std::size_t j = 0; j < dim; ++j) {
        const Complex noise = j < n_noise ? scratch.diff0[j] * increments[j] : Complex(0.0);
        state[j] += scratch.drift0[j] * dt + noise;
    }
    const double tnew = time + dt;
    if (system.post_step_hook) system.post_step_hook(state, tnew);
    check_finite(state, tnew, trajectory_index);
}

void platen_weak2_step(const SdeSystem& system, std::span<Complex> state,
                       double time, double dt, std::span<const double> increments,
                       StepScratch& scratch, long trajectory_index) {
    const std::size_t dim = system.dimension;
    scratch.resize(dim);
    const double tnew = time + dt;
    const double root_dt = std::sqrt(dt);

    auto& a0 = scratch.drift0;
    auto& b0 = scratch.diff0;
    system.drift(state, time, a0);
    system.diffusion_amplitude(state, time, b0);

    // predictor and shared base of the supporting values
    const std::size_t n_noise = system.noise_count();
    auto& ybar = scratch.ybar;
    auto& base = scratch.support;
    for (std::size_t j = 0; j < dim; ++j) {
        const Complex shift = a0[j] * dt;
        base[j] = state[j] + shift;
        ybar[j] = j < n_noise ? base[j] + b0[j] * increments[j] : base[j];
    }
    system.drift(ybar, tnew, scratch.driftbar);

    if (system.diffusion_component) {
        for (std::size_t j = 0; j < dim; ++j) {
            const Complex dW = j < n_noise ? Complex(increments[j]) : Complex(0.0);
            Complex noise = 0.0;
            if (j < n_noise && b0[j] != 0.0) {
                const Complex off = b0[j] * root_dt;
                const Complex bp = system.diffusion_component(j, base[j] + off, tnew);
                const Complex bm = system.diffusion_component(j, base[j] - off, tnew);
                noise = 0.25 * (bp + bm + 2.0 * b0[j]) * dW +
                        0.25 * (bp - bm) * (dW * dW - dt) / root_dt;
            }
            state[j] += 0.5 * (scratch.driftbar[j] + a0[j]) * dt + noise;
        }
    } else {
        // generic path: full-vector supporting evaluations per component
        std::vector<Complex> amp(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const Complex dW = j < n_noise ? Complex(increments[j]) : Complex(0.0);
            Complex noise = 0.0;
            if (j < n_noise && b0[j] != 0.0) {
                const Complex off = b0[j] * root_dt;
                const Complex saved = base[j];
                base[j] = saved + off;
                system.diffusion_amplitude(base, tnew, amp);
                const Complex bp = amp[j];
                base[j] = saved - off;
                system.diffusion_amplitude(base, tnew, amp);
                const Complex bm = amp[j];
                base[j] = saved;
                noise = 0.25 * (bp + bm + 2.0 * b0[j]) * dW +
                        0.25 * (bp - bm) * (dW * dW - dt) / root_dt;
            }
            state[j] += 0.5 * (scratch.driftbar[j] + a0[j]) * dt + noise;
        }
    }

    if (system.post_step_hook) system.post_step_hook(state, tnew);
    check_finite(state, tnew, trajectory_index);
}

namespace {

// Shared single-trajectory driver; calls `record(sample_idx, state)` at each
// sample time.
template <typename Recorder>
void drive_trajectory(const SdeSystem& system, const IntegrationConfig& config,
                      Rng& rng, std::span<const Complex> initial, long traj_index,
                      std::vector<Complex>& state, std::vector<double>& increments,
                      StepScratch& scratch, Recorder&& record) {
    const std::size_t dim = system.dimension;
    state.assign(dim, Complex(0.0, 0.0));
    if (!initial.empty()) {
        if (initial.size() != dim)
            throw ConfigError("initial state length does not match system dimension");
        std::copy(initial.begin(), initial.end(), state.begin());
    }
    increments.resize(system.noise_count());

    std::vector<std::size_t> sample_steps(config.sample_times.size());
    std::size_t n_steps = 0;
    for (std::size_t i = 0; i < config.sample_times.size(); ++i) {
        sample_steps[i] = sample_step_index(config.sample_times[i], config.dt);
        n_steps = std::max(n_steps, sample_steps[i]);
    }

    std::size_t next_sample = 0;
    while (next_sample < sample_steps.size() && sample_steps[next_sample] == 0) {
        record(next_sample, state);
        ++next_sample;
    }
    for (std::size_t step = 1; step <= n_steps; ++step) {
        const double t = static_cast<double>(step - 1) * config.dt;
        generate_wiener_increments(rng, system.noise_count(), config.dt, increments);
        if (config.scheme == Scheme::EulerMaruyama) {
            euler_maruyama_step(system, state, t, config.dt, increments, scratch, traj_index);
        } else {
            platen_weak2_step(system, state, t, config.dt, increments, scratch, traj_index);
        }
        while (next_sample < sample_steps.size() && sample_steps[next_sample] == step) {
            record(next_sample, state);
            ++next_sample;
        }
    }
}

} // namespace

std::vector<TrajectoryState> integrate_trajectory(const SdeSystem& system,
                                                  const IntegrationConfig& config,
                                                  Rng rng,
                                                  std::span<const Complex> initial,
                                                  long trajectory_index) {
    config.validate();
    std::vector<TrajectoryState> out(config.sample_times.size());
    std::vector<Complex> state;
    std::vector<double> increments;
    StepScratch scratch;
    drive_trajectory(system, config, rng, initial, trajectory_index, state, increments, scratch,
                     [&](std::size_t s, const std::vector<Complex>& st) {
                         out[s].variables = st;
                         out[s].time = static_cast<double>(sample_step_index(
                                           config.sample_times[s], config.dt)) *
                                       config.dt;
                     });
    return out;
}

BatchStats run_batch_streaming(const SdeSystem& system, const IntegrationConfig& config,
                               BatchSink& sink, unsigned n_threads,
                               std::span<const Complex> initial) {
    config.validate();
    if (!initial.empty() && initial.size() != system.dimension)
        throw ConfigError("initial state length does not match system dimension");
    const long n = config.n_trajectories;
    const std::size_t n_samples = config.sample_times.size();
    const std::size_t n_blocks = static_cast<std::size_t>((n + kBlockSize - 1) / kBlockSize);
    const unsigned workers =
        std::min<unsigned>(resolve_thread_count(n_threads), static_cast<unsigned>(n_blocks));

    std::atomic<std::size_t> next_block{0};
    std::vector<std::vector<long>> failures_per_block(n_blocks);
    std::atomic<bool> poisoned{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto work = [&]() {
        std::vector<Complex> state;
        std::vector<double> increments;
        StepScratch scratch;
        std::vector<std::vector<Complex>> samples(n_samples);
        std::vector<std::uint8_t> valid;

        for (;;) {
            if (poisoned.load(std::memory_order_relaxed)) break;
            const std::size_t b = next_block.fetch_add(1);
            if (b >= n_blocks) break;
            const long first = static_cast<long>(b) * kBlockSize;
            const long count = std::min<long>(kBlockSize, n - first);
            for (auto& s : samples) s.assign(static_cast<std::size_t>(count) * system.dimension,
                                             Complex(0.0, 0.0));
            valid.assign(count, 1);

            for (long k = 0; k < count; ++k) {
                const long gi = first + k;
                Rng rng = substream(config.master_seed, static_cast<std::uint64_t>(gi));
                try {
                    drive_trajectory(system, config, rng, initial, gi, state, increments, scratch,
                                     [&](std::size_t s, const std::vector<Complex>& st) {
                                         std::copy(st.begin(), st.end(),
                                                   samples[s].begin() +
                                                       static_cast<std::ptrdiff_t>(k) *
                                                           static_cast<std::ptrdiff_t>(
                                                               system.dimension));
                                     });
                } catch (const IntegrationError&) {
                    valid[k] = 0;
                    failures_per_block[b].push_back(gi);
                } catch (...) {
                    // anything else (a throwing drift, sink failure, ...) must
                    // not escape the worker thread
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    poisoned.store(true, std::memory_order_relaxed);
                    return;
                }
            }

            try {
                sink.consume_block(b, first, count, samples, valid);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                poisoned.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    BatchStats stats;
    stats.n_requested = n;
    for (const auto& f : failures_per_block) {
        stats.n_failed += static_cast<long>(f.size());
        stats.failed_indices.insert(stats.failed_indices.end(), f.begin(), f.end());
    }
    std::sort(stats.failed_indices.begin(), stats.failed_indices.end());
    if (stats.n_failed > 0 &&
        static_cast<double>(stats.n_failed) >
            config.max_failure_fraction * static_cast<double>(n)) {
        throw NumericalError("batch aborted: " + std::to_string(stats.n_failed) + " of " +
                             std::to_string(n) + " trajectories failed (first index " +
                             std::to_string(stats.failed_indices.front()) + ")");
    }
    return stats;
}

namespace {

class SnapshotCollector final : public BatchSink {
  public:
    SnapshotCollector(std::size_t n_samples, long n_traj, std::size_t dim)
        : dim_(dim), states_(n_samples), valid_(static_cast<std::size_t>(n_traj), 0) {
        for (auto& s : states_)
            s.assign(static_cast<std::size_t>(n_traj) * dim, Complex(0.0, 0.0));
    }

    void consume_block(std::size_t, long first, long count,
                       const std::vector<std::vector<Complex>>& samples,
                       const std::vector<std::uint8_t>& valid) override {
        for (long k = 0; k < count; ++k) valid_[static_cast<std::size_t>(first + k)] = valid[k];
        for (std::size_t s = 0; s < states_.size(); ++s) {
            std::copy(samples[s].begin(), samples[s].end(),
                      states_[s].begin() + static_cast<std::ptrdiff_t>(first) *
                                               static_cast<std::ptrdiff_t>(dim_));
        }
    }

    std::vector<EnsembleSnapshot> finish(const IntegrationConfig& config) {
        std::vector<EnsembleSnapshot> out(states_.size());
        for (std::size_t s = 0; s < states_.size(); ++s) {
            out[s].time = static_cast<double>(sample_step_index(config.sample_times[s],
                                                                config.dt)) *
                          config.dt;
            out[s].states.reserve(valid_.size());
            for (std::size_t i = 0; i < valid_.size(); ++i) {
                if (!valid_[i]) continue;
                const auto begin = states_[s].begin() +
                                   static_cast<std::ptrdiff_t>(i) * static_cast<std::ptrdiff_t>(dim_);
                out[s].states.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(dim_));
            }
        }
        return out;
    }

  private:
    std::size_t dim_;
    std::vector<std::vector<Complex>> states_; // [sample][traj*dim]
    std::vector<std::uint8_t> valid_;
};

} // namespace

std::vector<EnsembleSnapshot> run_batch(const SdeSystem& system,
                                        const IntegrationConfig& config,
                                        unsigned n_threads,
                                        std::span<const Complex> initial) {
    config.validate();
    SnapshotCollector collector(config.sample_times.size(), config.n_trajectories,
                                system.dimension);
    run_batch_streaming(system, config, collector, n_threads, initial);
    return collector.finish(config);
}

} // namespace dopo
