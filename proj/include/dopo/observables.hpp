#pragma once

#include <array>
#include <optional>
#include <vector>

#include "dopo/model.hpp"
#include "dopo/sde.hpp"

namespace dopo {

// Index layout of the tracked normally ordered moments (bare alpha/beta).
enum MomentIdx : std::size_t {
    kA1, kB1, kA2, kB2,          // first moments
    kA1A1, kB1B1, kA2A2, kB2B2,  // squared singles
    kB1A1, kB2A2,                // photon numbers <beta alpha>
    kA1A2, kB1B2, kB1A2, kB2A1,  // cross-mode
    kMomentCount
};

struct RawMoments {
    std::array<Complex, kMomentCount> m{};
    RawMoments& operator+=(const RawMoments& o) {
        for (std::size_t i = 0; i < kMomentCount; ++i) m[i] += o.m[i];
        return *this;
    }
};

// Ensemble means of c-number products with batch-means standard errors.
struct MomentSet {
    std::array<Complex, kMomentCount> mean{};
    std::array<double, kMomentCount> se{};
    long n_samples = 0;
    int n_batches = 0;
};

struct QuadratureStats {
    double mean_x1 = 0, mean_x2 = 0, mean_p1 = 0, mean_p2 = 0;
    double var_x1 = 0.25, var_x2 = 0.25, var_p1 = 0.25, var_p2 = 0.25;
    double cov_x1x2 = 0, cov_p1p2 = 0;
    double corr_xx = 0, corr_pp = 0;
    double epr_sum = 1.0; // <Du+^2> + <Dv-^2>
};

// Symmetric 4x4 covariance of r = 2(x1, p1, x2, p2); vacuum = identity.
struct CovarianceMatrix4 {
    std::array<std::array<double, 4>, 4> m{};

    double a_s() const; // det of mode-1 block
    double b_s() const; // det of mode-2 block
    double c_s() const; // det of the cross block
    double d_s() const; // det of the full matrix
};

enum class LogBase { Natural, Base2 };

struct DiscordConvention {
    LogBase base = LogBase::Natural;
    double prescale = 1.0; // covariance multiplied by this before the formulas
};

// Shipped default, pinned by matching the classical-mixture anchor value
// (see discord_convention_table / resolve_discord_convention).
DiscordConvention default_discord_convention();

struct DiscordResult {
    double value = 0.0;
    bool warning = false; // result was below -1e-6 before clamping
};

struct ConventionEntry {
    LogBase base;
    double prescale;
    double value; // discord of the alpha=50 classical mixture, NaN on failure
};

enum class QuadTarget { X1, X2, P1, P2 };

std::string target_name(QuadTarget t);

struct QuadratureDistribution {
    std::vector<double> grid;
    std::vector<double> density; // real part of the kernel mean; may dip < 0
    QuadTarget target = QuadTarget::X1;
    double imag_residue = 0.0; // max |Im| of the kernel mean, a diagnostic
    long n_excluded = 0;       // kernel-overflow exclusions
    long n_samples = 0;
    bool unreliable = false;   // exclusion fraction above 1%
};

struct GaussianFit {
    double mean = 0.0;
    double sigma = 0.0;
    double residual_norm = 0.0; // L2 norm of (density - fit) over the grid
};

// --- operations ----------------------------------------------------------

MomentSet estimate_moments(const EnsembleSnapshot& snapshot, const ModeMap& map);

// Moments from pre-accumulated sums (streaming path). batch_sums/counts give
// the batch-means standard errors; scale converts stored variables to bare
// amplitudes (products scale by scale^2).
MomentSet moments_from_sums(const RawMoments& total, long n,
                            std::span<const RawMoments> batch_sums,
                            std::span<const long> batch_counts, double scale);

RawMoments raw_moments_of_state(std::span<const Complex> state, const ModeMap& map);

// Symmetric-ordered quadrature statistics with the analytic commutator
// corrections, x = (a + a^dag)/2, p = (a - a^dag)/(2i).
QuadratureStats quadrature_stats(const MomentSet& moments);

CovarianceMatrix4 covariance_matrix(const MomentSet& moments);

// f_B(X) = (X + 1/2) log(X + 1/2) - (X - 1/2) log(X - 1/2); f_B(1/2) = 0.
double binary_entropy(double x, LogBase base = LogBase::Natural);

// (nu_minus, nu_plus) from the symplectic invariants.
std::pair<double, double> symplectic_eigenvalues(const CovarianceMatrix4& cov);

// Gaussian quantum discord D<-; evaluates the general minimization and the
// squeezed-thermal shortcut and keeps the smaller value. Tiny negative
// results clamp to zero; anything below -1e-6 is kept and flagged.
DiscordResult gaussian_discord(const CovarianceMatrix4& cov,
                               const DiscordConvention& convention =
                                   default_discord_convention());

// Covariance of the equal mixture of |a,-a> and |-a,a> coherent pairs.
CovarianceMatrix4 classical_mixture_covariance(double alpha_cl);

// Discord of the alpha_cl = 50 anchor under all four (base, prescale)
// combinations; used to pin the shipped convention and emitted in metadata.
std::array<ConventionEntry, 4> discord_convention_table();

// The convention whose anchor value matches 0.02356 within 5%, if any.
std::optional<DiscordConvention> resolve_discord_convention();

// Marginal distribution from the positive-P kernel on the given grid.
QuadratureDistribution distribution(const EnsembleSnapshot& snapshot, const ModeMap& map,
                                    QuadTarget target, std::span<const double> grid);

// Same, from flat (alpha, beta) sample pairs in bare units.
QuadratureDistribution distribution_from_pairs(std::span<const Complex> alphas,
                                               std::span<const Complex> betas,
                                               QuadTarget target,
                                               std::span<const double> grid);

// Least-squares fit of a normalized Gaussian; density is clamped at zero.
GaussianFit fit_gaussian(const QuadratureDistribution& dist);

// (side peak - adjacent trough)/(side peak + trough) beyond the central
// maximum; zero when the tails are monotone.
double fringe_visibility(const QuadratureDistribution& dist);

double trapezoid_integral(std::span<const double> grid, std::span<const double> values);

// Centered moving average used to stabilize extremum searches on sampled
// densities (window is forced odd).
std::vector<double> smooth_density(std::span<const double> density, int window);

} // namespace dopo
