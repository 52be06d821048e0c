#include "dopo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

namespace dopo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double elapsed_s(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

} // namespace

std::string series_observable_name(SeriesObservable o) {
    switch (o) {
        case SeriesObservable::PhotonNumber: return "photon_number";
        case SeriesObservable::CorrXX: return "corr_xx";
        case SeriesObservable::CorrPP: return "corr_pp";
        case SeriesObservable::EprSum: return "epr_sum";
        case SeriesObservable::Discord: return "discord";
        case SeriesObservable::VarP: return "var_p";
    }
    return "?";
}

void ExperimentSpec::validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (n_trajectories < 1) throw ConfigError("n_trajectories must be >= 1");
    if (sample_times.empty()) throw ConfigError("sample_times must not be empty");
    double prev = 0.0;
    for (double t : sample_times) {
        if (t < 0.0) throw ConfigError("sample times must be nonnegative");
        if (t < prev) throw ConfigError("sample_times must be sorted");
        prev = t;
    }
    std::set<std::string> labels;
    auto check_params = [&](const ModelParams& p) {
        derive_params(p);
        if (variant != DopoVariant::Full10 && (p.delta_s != 0.0 || p.delta_p != 0.0))
            throw ConfigError("detunings require the full10 variant");
    };
    check_params(params);
    for (const auto& entry : sweep) {
        if (entry.label.empty()) throw ConfigError("sweep labels must not be empty");
        if (!labels.insert(entry.label).second)
            throw ConfigError("duplicate sweep label: " + entry.label);
        check_params(apply_overrides(params, entry.overrides));
    }
    if (outputs.distributions) {
        const auto& d = *outputs.distributions;
        if (d.targets.empty()) throw ConfigError("distribution targets must not be empty");
        if (d.grid.points < 8) throw ConfigError("distribution grid needs at least 8 points");
        if (!(d.grid.span_sigmas > 0)) throw ConfigError("grid span must be positive");
        for (double t : d.times) {
            const bool found = std::any_of(sample_times.begin(), sample_times.end(),
                                           [&](double s) { return std::abs(s - t) < 1e-9; });
            if (!found)
                throw ConfigError("distribution time " + std::to_string(t) +
                                  " is not a sample time");
        }
    }
}

std::vector<double> unit_sample_grid(double t_f) {
    std::vector<double> out;
    const long last = static_cast<long>(std::floor(t_f + 1e-9));
    out.reserve(static_cast<std::size_t>(last) + 1);
    for (long i = 0; i <= last; ++i) out.push_back(static_cast<double>(i));
    return out;
}

ModelParams apply_overrides(const ModelParams& base,
                            const std::map<std::string, double>& overrides) {
    ModelParams p = base;
    for (const auto& [key, value] : overrides) {
        if (key == "gamma_s") p.gamma_s = value;
        else if (key == "gamma_c") p.gamma_c = value;
        else if (key == "gamma_p") p.gamma_p = value;
        else if (key == "zeta") p.zeta = value;
        else if (key == "theta") p.theta = value;
        else if (key == "delta_s") p.delta_s = value;
        else if (key == "delta_p") p.delta_p = value;
        else if (key == "g") p.g = value;
        else if (key == "lambda_f") p.lambda_f = value;
        else if (key == "t_f") p.t_f = value;
        else throw ConfigError("unknown parameter override: " + key);
    }
    return p;
}

namespace {

std::vector<SeriesObservable> all_series_observables() {
    return {SeriesObservable::PhotonNumber, SeriesObservable::CorrXX,
            SeriesObservable::CorrPP,       SeriesObservable::EprSum,
            SeriesObservable::Discord,      SeriesObservable::VarP};
}

ExperimentSpec base_campaign_spec() {
    ExperimentSpec spec;
    spec.params = ModelParams{}; // gamma_p=100, zeta=1, theta=pi, g=0.01, lambda_f=1.5, t_f=200
    spec.variant = DopoVariant::PumpEliminated6;
    spec.boundary = BoundaryRule::ReflectClassicalSubspace;
    spec.scheme = Scheme::WeakOrder2Platen;
    spec.dt = 2e-3;
    spec.sample_times = unit_sample_grid(spec.params.t_f);
    spec.master_seed = 20160901;
    spec.outputs.series = all_series_observables();
    return spec;
}

std::string trim_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace

ExperimentSpec case_a_spec() {
    ExperimentSpec spec = base_campaign_spec();
    spec.n_trajectories = 50000;
    for (double gs : {0.05, 0.1, 0.5, 1.0, 5.0}) {
        spec.sweep.push_back({"gs" + trim_number(gs),
                              {{"gamma_s", gs}, {"gamma_c", 2.0 * gs}}});
    }
    spec.params.gamma_s = 0.05;
    spec.params.gamma_c = 0.1;
    return spec;
}

ExperimentSpec case_b_spec() {
    ExperimentSpec spec = base_campaign_spec();
    spec.n_trajectories = 50000;
    for (double gc : {0.1, 0.5, 1.0, 5.0, 10.0}) {
        spec.sweep.push_back({"gc" + trim_number(gc),
                              {{"gamma_s", 0.01}, {"gamma_c", gc}}});
    }
    spec.params.gamma_s = 0.01;
    spec.params.gamma_c = 0.1;
    return spec;
}

ExperimentSpec superposition_spec() {
    ExperimentSpec spec = base_campaign_spec();
    spec.params.gamma_s = 0.1;
    spec.params.gamma_c = 0.2;
    spec.n_trajectories = 200000;
    spec.sweep.push_back({"superposition", {}});
    DistributionRequest dist;
    dist.times = {29.0, 31.0, 33.0, 35.0};
    dist.targets = {QuadTarget::X1, QuadTarget::X2, QuadTarget::P1, QuadTarget::P2};
    spec.outputs.distributions = dist;
    return spec;
}

namespace {

// Streaming accumulator: per-block moment sums at every sample time plus raw
// signal pairs at the distribution times. Block-indexed storage keeps the
// final reduction independent of thread scheduling.
class MomentSink final : public BatchSink {
  public:
    MomentSink(long n_traj, std::size_t n_samples, std::size_t dim, const ModeMap& map,
               std::vector<std::size_t> dist_sample_indices)
        : n_traj_(n_traj),
          dim_(dim),
          map_(map),
          dist_indices_(std::move(dist_sample_indices)),
          n_blocks_(static_cast<std::size_t>((n_traj + kBatchBlockSize - 1) / kBatchBlockSize)),
          block_sums_(n_blocks_ * n_samples),
          block_valid_(n_blocks_, 0),
          valid_(static_cast<std::size_t>(n_traj), 0),
          n_samples_(n_samples) {
        dist_pairs_.resize(dist_indices_.size());
        for (auto& v : dist_pairs_)
            v.assign(static_cast<std::size_t>(n_traj) * 4, Complex(0.0, 0.0));
    }

    void consume_block(std::size_t block, long first, long count,
                       const std::vector<std::vector<Complex>>& samples,
                       const std::vector<std::uint8_t>& valid) override {
        long n_valid = 0;
        for (long k = 0; k < count; ++k) {
            valid_[static_cast<std::size_t>(first + k)] = valid[k];
            if (valid[k]) ++n_valid;
        }
        block_valid_[block] = n_valid;
        for (std::size_t s = 0; s < n_samples_; ++s) {
            RawMoments acc;
            const auto& flat = samples[s];
            for (long k = 0; k < count; ++k) {
                if (!valid[k]) continue;
                const std::span<const Complex> row(flat.data() +
                                                       static_cast<std::size_t>(k) * dim_,
                                                   dim_);
                acc += raw_moments_of_state(row, map_);
            }
            block_sums_[block * n_samples_ + s] = acc;
        }
        for (std::size_t di = 0; di < dist_indices_.size(); ++di) {
            const auto& flat = samples[dist_indices_[di]];
            auto& store = dist_pairs_[di];
            for (long k = 0; k < count; ++k) {
                const std::size_t row = static_cast<std::size_t>(k) * dim_;
                const std::size_t out = static_cast<std::size_t>(first + k) * 4;
                store[out + 0] = flat[row + map_.alpha1];
                store[out + 1] = flat[row + map_.beta1];
                store[out + 2] = flat[row + map_.alpha2];
                store[out + 3] = flat[row + map_.beta2];
            }
        }
    }

    // pairwise reduction over a block range
    RawMoments reduce(std::size_t sample, std::size_t lo, std::size_t hi) const {
        if (hi - lo == 1) return block_sums_[lo * n_samples_ + sample];
        const std::size_t mid = lo + (hi - lo) / 2;
        RawMoments left = reduce(sample, lo, mid);
        left += reduce(sample, mid, hi);
        return left;
    }

    MomentSet moments_at(std::size_t sample) const {
        const RawMoments total = reduce(sample, 0, n_blocks_);
        long n_valid = 0;
        for (long c : block_valid_) n_valid += c;
        const std::size_t nb = std::min<std::size_t>(20, n_blocks_);
        std::vector<RawMoments> batch_sums(nb);
        std::vector<long> counts(nb, 0);
        for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t lo = b * n_blocks_ / nb;
            const std::size_t hi = (b + 1) * n_blocks_ / nb;
            batch_sums[b] = reduce(sample, lo, hi);
            for (std::size_t j = lo; j < hi; ++j) counts[b] += block_valid_[j];
        }
        return moments_from_sums(total, n_valid, batch_sums, counts, map_.scale);
    }

    // per-batch moment means at a sample time (for derived standard errors)
    std::vector<MomentSet> batch_moments_at(std::size_t sample) const {
        const std::size_t nb = std::min<std::size_t>(20, n_blocks_);
        std::vector<MomentSet> out;
        out.reserve(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            const std::size_t lo = b * n_blocks_ / nb;
            const std::size_t hi = (b + 1) * n_blocks_ / nb;
            long count = 0;
            for (std::size_t j = lo; j < hi; ++j) count += block_valid_[j];
            if (count <= 0) continue;
            const RawMoments sum = reduce(sample, lo, hi);
            out.push_back(moments_from_sums(sum, count, {}, {}, map_.scale));
        }
        return out;
    }

    // compacted bare-amplitude pairs of one mode at a distribution time
    void mode_pairs(std::size_t dist_index, bool mode1, std::vector<Complex>& alphas,
                    std::vector<Complex>& betas) const {
        alphas.clear();
        betas.clear();
        const auto& store = dist_pairs_[dist_index];
        for (long i = 0; i < n_traj_; ++i) {
            if (!valid_[static_cast<std::size_t>(i)]) continue;
            const std::size_t row = static_cast<std::size_t>(i) * 4;
            alphas.push_back(store[row + (mode1 ? 0 : 2)] * map_.scale);
            betas.push_back(store[row + (mode1 ? 1 : 3)] * map_.scale);
        }
    }

  private:
    long n_traj_;
    std::size_t dim_;
    ModeMap map_;
    std::vector<std::size_t> dist_indices_;
    std::size_t n_blocks_;
    std::vector<RawMoments> block_sums_; // [block * n_samples + sample]
    std::vector<long> block_valid_;
    std::vector<std::uint8_t> valid_;
    std::size_t n_samples_;
    std::vector<std::vector<Complex>> dist_pairs_; // [dist time][traj*4]
};

double batch_se(const std::vector<double>& values) {
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / (static_cast<double>(v.size()) *
                            static_cast<double>(v.size() - 1)));
}

LabelResult run_label(const ExperimentSpec& spec, const SweepEntry& entry,
                      std::uint64_t seed, unsigned threads,
                      const DiscordConvention& convention) {
    const auto start = std::chrono::steady_clock::now();
    LabelResult result;
    result.label = entry.label;
    result.params = apply_overrides(spec.params, entry.overrides);
    result.derived = derive_params(result.params);

    const PumpSchedule schedule{result.params.lambda_f, result.params.t_f};
    const SdeSystem system = build_system(result.params, spec.variant, schedule, spec.boundary);
    const ModeMap map = mode_map(spec.variant, result.params);

    IntegrationConfig cfg;
    cfg.dt = spec.dt;
    cfg.t_final = spec.sample_times.back();
    cfg.scheme = spec.scheme;
    cfg.sample_times = spec.sample_times;
    cfg.master_seed = seed;
    cfg.n_trajectories = spec.n_trajectories;
    cfg.max_failure_fraction = spec.max_failure_fraction;

    std::vector<std::size_t> dist_indices;
    std::vector<double> dist_times;
    if (spec.outputs.distributions) {
        for (double t : spec.outputs.distributions->times) {
            for (std::size_t s = 0; s < spec.sample_times.size(); ++s) {
                if (std::abs(spec.sample_times[s] - t) < 1e-9) {
                    dist_indices.push_back(s);
                    dist_times.push_back(spec.sample_times[s]);
                    break;
                }
            }
        }
    }

    MomentSink sink(spec.n_trajectories, spec.sample_times.size(), system.dimension, map,
                    dist_indices);
    const BatchStats stats = run_batch_streaming(system, cfg, sink, threads);
    result.n_failed = stats.n_failed;

    // series rows
    result.rows.resize(spec.sample_times.size());
    for (std::size_t s = 0; s < spec.sample_times.size(); ++s) {
        const MomentSet ms = sink.moments_at(s);
        const QuadratureStats q = quadrature_stats(ms);
        ObservableRow& row = result.rows[s];
        row.tau = spec.sample_times[s];
        row.lambda = pump_rate(schedule, row.tau);
        row.n1 = ms.mean[kB1A1].real();
        row.n2 = ms.mean[kB2A2].real();
        row.n1_se = ms.se[kB1A1];
        row.n2_se = ms.se[kB2A2];
        row.corr_xx = q.corr_xx;
        row.corr_pp = q.corr_pp;
        row.epr_sum = q.epr_sum;
        row.var_p1 = q.var_p1;
        row.var_p2 = q.var_p2;
        try {
            const DiscordResult d = gaussian_discord(covariance_matrix(ms), convention);
            row.discord = d.value;
            row.discord_warning = d.warning;
        } catch (const NumericalError&) {
            row.discord = kNaN;
            row.discord_warning = true;
        }

        const std::vector<MomentSet> batches = sink.batch_moments_at(s);
        std::vector<double> xx, pp, epr, vp1, vp2, dis;
        for (const auto& bms : batches) {
            const QuadratureStats bq = quadrature_stats(bms);
            xx.push_back(bq.corr_xx);
            pp.push_back(bq.corr_pp);
            epr.push_back(bq.epr_sum);
            vp1.push_back(bq.var_p1);
            vp2.push_back(bq.var_p2);
            try {
                dis.push_back(gaussian_discord(covariance_matrix(bms), convention).value);
            } catch (const NumericalError&) {
            }
        }
        row.corr_xx_se = batch_se(xx);
        row.corr_pp_se = batch_se(pp);
        row.epr_sum_se = batch_se(epr);
        row.var_p1_se = batch_se(vp1);
        row.var_p2_se = batch_se(vp2);
        row.discord_se = batch_se(dis);
    }

    // distribution artifacts (grid centered on the instantaneous moments)
    if (spec.outputs.distributions) {
        const auto& req = *spec.outputs.distributions;
        struct Task {
            std::size_t dist_index;
            double tau;
            QuadTarget target;
        };
        std::vector<Task> tasks;
        for (std::size_t di = 0; di < dist_indices.size(); ++di)
            for (QuadTarget t : req.targets) tasks.push_back({di, dist_times[di], t});
        result.distributions.resize(tasks.size());

        std::atomic<std::size_t> next{0};
        auto work = [&]() {
            std::vector<Complex> alphas, betas;
            for (;;) {
                const std::size_t ti = next.fetch_add(1);
                if (ti >= tasks.size()) break;
                const Task& task = tasks[ti];
                const MomentSet ms = sink.moments_at(dist_indices[task.dist_index]);
                const QuadratureStats q = quadrature_stats(ms);
                const bool is_x =
                    task.target == QuadTarget::X1 || task.target == QuadTarget::X2;
                const bool mode1 =
                    task.target == QuadTarget::X1 || task.target == QuadTarget::P1;
                const double center = is_x ? (mode1 ? q.mean_x1 : q.mean_x2)
                                           : (mode1 ? q.mean_p1 : q.mean_p2);
                const double sd = std::sqrt(std::max(
                    1e-12, is_x ? (mode1 ? q.var_x1 : q.var_x2)
                                : (mode1 ? q.var_p1 : q.var_p2)));
                const double half = req.grid.span_sigmas * sd;
                std::vector<double> grid(static_cast<std::size_t>(req.grid.points));
                for (std::size_t k = 0; k < grid.size(); ++k)
                    grid[k] = center - half +
                              2.0 * half * static_cast<double>(k) /
                                  static_cast<double>(grid.size() - 1);

                sink.mode_pairs(task.dist_index, mode1, alphas, betas);
                DistributionArtifact art;
                art.tau = task.tau;
                art.dist = distribution_from_pairs(alphas, betas, task.target, grid);
                try {
                    art.fit = fit_gaussian(art.dist);
                    std::vector<double> clamped(art.dist.density.size());
                    for (std::size_t k = 0; k < clamped.size(); ++k)
                        clamped[k] = std::max(art.dist.density[k], 0.0) *
                                     std::max(art.dist.density[k], 0.0);
                    const double l2 =
                        std::sqrt(trapezoid_integral(art.dist.grid, clamped));
                    art.bimodal = l2 > 0.0 && art.fit.residual_norm > 0.05 * l2;
                } catch (const NumericalError&) {
                    art.fit = GaussianFit{};
                    art.bimodal = false;
                }
                result.distributions[ti] = std::move(art);
            }
        };
        const unsigned workers =
            std::min<unsigned>(resolve_thread_count(threads),
                               static_cast<unsigned>(tasks.size()));
        if (workers <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }
    }

    result.wall_time_s = elapsed_s(start);
    return result;
}

} // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned n_threads) {
    spec.validate();
    const auto start = std::chrono::steady_clock::now();

    ExperimentResult result;
    result.spec = spec;
    result.convention_table = discord_convention_table();
    result.convention_used = default_discord_convention();
    if (const auto resolved = resolve_discord_convention()) result.convention_used = *resolved;
    result.threads_used = resolve_thread_count(n_threads);

    std::vector<SweepEntry> entries = spec.sweep;
    if (entries.empty()) entries.push_back({"run", {}});

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::uint64_t seed = spec.common_random_numbers
                                       ? spec.master_seed
                                       : mix_seed(spec.master_seed, i);
        try {
            result.labels.push_back(
                run_label(spec, entries[i], seed, n_threads, result.convention_used));
        } catch (const NumericalError& e) {
            // a failed label must not abort its siblings
            LabelResult failed;
            failed.label = entries[i].label;
            failed.params = apply_overrides(spec.params, entries[i].overrides);
            failed.derived = derive_params(failed.params);
            failed.n_failed = spec.n_trajectories;
            failed.error = e.what();
            result.labels.push_back(std::move(failed));
        }
    }

    result.wall_time_s = elapsed_s(start);
    return result;
}

} // namespace dopo
