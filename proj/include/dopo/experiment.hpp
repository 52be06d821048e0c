#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dopo/model.hpp"
#include "dopo/observables.hpp"
#include "dopo/sde.hpp"

namespace dopo {

enum class SeriesObservable { PhotonNumber, CorrXX, CorrPP, EprSum, Discord, VarP };

std::string series_observable_name(SeriesObservable o);

struct GridSpec {
    int points = 801;
    double span_sigmas = 5.0; // half-width in running standard deviations

    bool operator==(const GridSpec&) const = default;
};

struct DistributionRequest {
    std::vector<double> times;       // subset of sample_times
    std::vector<QuadTarget> targets; // which marginals
    GridSpec grid;

    bool operator==(const DistributionRequest&) const = default;
};

struct OutputRequest {
    std::vector<SeriesObservable> series; // canonical order, no duplicates
    std::optional<DistributionRequest> distributions;

    bool operator==(const OutputRequest&) const = default;
};

struct SweepEntry {
    std::string label;
    std::map<std::string, double> overrides; // ModelParams field name -> value

    bool operator==(const SweepEntry&) const = default;
};

struct ExperimentSpec {
    ModelParams params;
    DopoVariant variant = DopoVariant::PumpEliminated6;
    BoundaryRule boundary = BoundaryRule::ReflectClassicalSubspace;
    Scheme scheme = Scheme::WeakOrder2Platen;
    double dt = 2e-3;
    std::vector<SweepEntry> sweep; // empty = single run with base params
    std::vector<double> sample_times;
    long n_trajectories = 50000;
    std::uint64_t master_seed = 20160901;
    bool common_random_numbers = false;
    double max_failure_fraction = 0.0;
    OutputRequest outputs;

    bool operator==(const ExperimentSpec&) const = default;

    void validate() const; // throws ConfigError
};

// One sampled time in one label's series; values not requested stay NaN.
struct ObservableRow {
    double tau = 0.0;
    double lambda = 0.0;
    double n1 = 0, n1_se = 0, n2 = 0, n2_se = 0;
    double corr_xx = 0, corr_xx_se = 0, corr_pp = 0, corr_pp_se = 0;
    double epr_sum = 0, epr_sum_se = 0;
    double discord = 0, discord_se = 0;
    double var_p1 = 0, var_p1_se = 0, var_p2 = 0, var_p2_se = 0;
    bool discord_warning = false;
};

struct DistributionArtifact {
    double tau = 0.0;
    QuadratureDistribution dist;
    GaussianFit fit;
    bool bimodal = false;
};

struct LabelResult {
    std::string label;
    ModelParams params;
    DerivedParams derived;
    std::vector<ObservableRow> rows;
    std::vector<DistributionArtifact> distributions;
    long n_failed = 0;
    double wall_time_s = 0.0;
    // nonempty when the label's batch failed; sibling labels still run
    std::string error;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::vector<LabelResult> labels;
    std::array<ConventionEntry, 4> convention_table{};
    DiscordConvention convention_used;
    unsigned threads_used = 1;
    double wall_time_s = 0.0;
};

std::vector<double> unit_sample_grid(double t_f); // {0, 1, ..., t_f}

// Campaign (a): gamma_s swept over {0.05,0.1,0.5,1,5} with gamma_c = 2 gamma_s.
ExperimentSpec case_a_spec();
// Campaign (b): gamma_c swept over {0.1,0.5,1,5,10} with gamma_s = 0.01.
ExperimentSpec case_b_spec();
// Distribution-function run: gamma_s=0.1, gamma_c=0.2, marginals at
// tau in {29,31,33,35}, 200k trajectories.
ExperimentSpec superposition_spec();

ModelParams apply_overrides(const ModelParams& base,
                            const std::map<std::string, double>& overrides);

// Runs every sweep label (sequentially; trajectories in parallel) and
// evaluates the requested observables at every sample time.
ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned n_threads = 0);

} // namespace dopo
