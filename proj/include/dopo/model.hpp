#pragma once

#include <cstddef>
#include <string>

#include "dopo/sde.hpp"

namespace dopo {

// Physical rates in units of the beamsplitter coupling zeta (default 1).
struct ModelParams {
    double gamma_s = 0.1;  // signal incoherent decay
    double gamma_c = 0.2;  // injection-path decay
    double gamma_p = 100.0; // pump decay
    double zeta = 1.0;      // beamsplitter coupling
    double theta = 3.14159265358979323846; // coupling phase k_c z; pi = out-of-phase
    double delta_s = 0.0;   // signal detuning (full model only)
    double delta_p = 0.0;   // pump detuning (full model only)
    double g = 0.01;        // noise parameter kappa / sqrt(2 gamma'_s gamma_p)
    double lambda_f = 1.5;  // final normalized pump rate
    double t_f = 200.0;     // ramp duration in units of 1/gamma'_s

    bool operator==(const ModelParams&) const = default;
};

struct DerivedParams {
    double gamma_s_eff = 0.0; // gamma'_s = gamma_s + zeta^2/gamma_c
    double xi = 0.0;          // zeta^2 / (gamma_s gamma_c + zeta^2)
    double lambda_th = 0.0;   // 1 - |xi|
    double gamma_sn = 0.0;    // gamma_s / gamma'_s
    double gamma_cn = 0.0;    // gamma_c / gamma'_s
    double zeta_n = 0.0;      // zeta / gamma'_s
};

struct PumpSchedule {
    double lambda_f = 1.5;
    double t_f = 200.0;

    bool operator==(const PumpSchedule&) const = default;
};

enum class DopoVariant {
    Full10,          // (a_s1, b_s1, a_s2, b_s2, a_p1, b_p1, a_p2, b_p2, a_c, b_c)
    PumpEliminated6, // (eta1, mu1, eta2, mu2, eta_c, mu_c)
    PathEliminated4, // (eta1, mu1, eta2, mu2)
};

enum class BoundaryRule { None, ReflectClassicalSubspace };

std::size_t variant_dimension(DopoVariant variant);
std::string variant_name(DopoVariant variant);

// Mapping from state-vector slots to the bare signal-mode pairs (alpha, beta).
// `scale` converts stored variables to bare alpha/beta (1/g for the
// normalized variants, 1 for the full model).
struct ModeMap {
    std::size_t alpha1 = 0, beta1 = 1, alpha2 = 2, beta2 = 3;
    double scale = 1.0;
};

ModeMap mode_map(DopoVariant variant, const ModelParams& params);

// Eq.-(22)-style derived quantities and the normalized rates.
// gamma_c = 0 with zeta > 0 is rejected (lossless closed path has no
// eliminated form).
DerivedParams derive_params(const ModelParams& params);

// Linear ramp lambda(tau) = lambda_f * tau / t_f, clamped at lambda_f.
double pump_rate(const PumpSchedule& schedule, double tau);

// Steady-state injection-path field for given signal amplitudes.
std::pair<Complex, Complex> steady_injection_field(const ModelParams& params,
                                                   Complex alpha_s1, Complex alpha_s2,
                                                   Complex beta_s1, Complex beta_s2);

// Mirror-fold x into [-bound, bound]; bound <= 0 collapses to 0.
double reflect_fold(double x, double bound);

// Reflects the real parts of the signal pairs into the classical subspace
// |Re| <= sqrt(lambda)/scale and zeroes their imaginary parts. Injection-path
// and pump variables are untouched. `n_signal` = number of signal slots at
// the front of the state vector (4 for every variant here).
void reflect_boundary(std::span<Complex> state, double lambda, double scale = 1.0,
                      std::size_t n_signal = 4);

// Builds the positive-P SDE system for the chosen variant in normalized time
// tau = gamma'_s t. The eliminated variants require zero detunings.
SdeSystem build_system(const ModelParams& params, DopoVariant variant,
                       const PumpSchedule& schedule, BoundaryRule boundary);

} // namespace dopo
