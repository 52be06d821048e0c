#include "dopo/model.hpp"

#include <cmath>
#include <complex>

namespace dopo {

namespace {

// e^{i theta}, snapped to exactly +-1 at the in/out-of-phase working points so
// that those runs stay on the real axis.
Complex unit_phase(double theta) {
    const Complex z = std::polar(1.0, theta);
    if (std::abs(z.imag()) < 1e-12) return Complex(z.real() > 0 ? 1.0 : -1.0, 0.0);
    return z;
}

// g sqrt(lambda - y^2), principal branch, with a cheap path on the real axis
// where the integration spends essentially all its time under the boundary
// rule.
inline Complex signal_noise_amp(double g, double lam, Complex yj) {
    if (yj.imag() == 0.0) {
        const double r = lam - yj.real() * yj.real();
        return r >= 0.0 ? Complex(g * std::sqrt(r), 0.0) : Complex(0.0, g * std::sqrt(-r));
    }
    return g * std::sqrt(Complex(lam) - yj * yj);
}

} // namespace

std::size_t variant_dimension(DopoVariant variant) {
    switch (variant) {
        case DopoVariant::Full10: return 10;
        case DopoVariant::PumpEliminated6: return 6;
        case DopoVariant::PathEliminated4: return 4;
    }
    return 0;
}

std::string variant_name(DopoVariant variant) {
    switch (variant) {
        case DopoVariant::Full10: return "full10";
        case DopoVariant::PumpEliminated6: return "pump_eliminated6";
        case DopoVariant::PathEliminated4: return "path_eliminated4";
    }
    return "?";
}

ModeMap mode_map(DopoVariant variant, const ModelParams& params) {
    ModeMap m;
    m.scale = (variant == DopoVariant::Full10) ? 1.0 : 1.0 / params.g;
    return m;
}

DerivedParams derive_params(const ModelParams& p) {
    if (p.gamma_s < 0 || p.gamma_c < 0 || p.gamma_p < 0 || p.zeta < 0)
        throw ConfigError("rates must be nonnegative");
    if (p.gamma_s == 0.0 && p.zeta == 0.0)
        throw ConfigError("gamma_s and zeta cannot both be zero");
    if (p.zeta > 0.0 && p.gamma_c == 0.0)
        throw ConfigError("gamma_c = 0 with zeta > 0: lossless closed path has no "
                          "eliminated form");
    DerivedParams d;
    if (p.zeta == 0.0) {
        d.gamma_s_eff = p.gamma_s;
        d.xi = 0.0;
    } else {
        d.gamma_s_eff = p.gamma_s + p.zeta * p.zeta / p.gamma_c;
        d.xi = p.zeta * p.zeta / (p.gamma_s * p.gamma_c + p.zeta * p.zeta);
    }
    d.lambda_th = 1.0 - std::abs(d.xi);
    d.gamma_sn = p.gamma_s / d.gamma_s_eff;
    d.gamma_cn = p.gamma_c / d.gamma_s_eff;
    d.zeta_n = p.zeta / d.gamma_s_eff;
    return d;
}

double pump_rate(const PumpSchedule& s, double tau) {
    if (tau <= 0.0) return 0.0;
    if (tau >= s.t_f) return s.lambda_f;
    return s.lambda_f * tau / s.t_f;
}

std::pair<Complex, Complex> steady_injection_field(const ModelParams& p,
                                                   Complex alpha_s1, Complex alpha_s2,
                                                   Complex beta_s1, Complex beta_s2) {
    if (p.gamma_c <= 0.0) throw ConfigError("steady injection field requires gamma_c > 0");
    const Complex eip = unit_phase(p.theta);
    const Complex eim = unit_phase(-p.theta);
    const Complex ac = (-p.zeta * alpha_s1 + eip * p.zeta * alpha_s2) / p.gamma_c;
    const Complex bc = (-p.zeta * beta_s1 + eim * p.zeta * beta_s2) / p.gamma_c;
    return {ac, bc};
}

double reflect_fold(double x, double bound) {
    if (!(bound > 0.0)) return 0.0;
    if (x >= -bound && x <= bound) return x;
    // triangle wave with period 4*bound maps R onto [-bound, bound]
    const double period = 4.0 * bound;
    double u = std::fmod(x + bound, period);
    if (u < 0.0) u += period;
    return (u <= 2.0 * bound) ? u - bound : 3.0 * bound - u;
}

void reflect_boundary(std::span<Complex> state, double lambda, double scale,
                      std::size_t n_signal) {
    const double bound = (lambda > 0.0) ? std::sqrt(lambda) / scale : 0.0;
    for (std::size_t j = 0; j < n_signal && j < state.size(); ++j) {
        state[j] = Complex(reflect_fold(state[j].real(), bound), 0.0);
    }
}

namespace {

SdeSystem build_pump_eliminated(const ModelParams& p, const DerivedParams& d,
                                const PumpSchedule& schedule, BoundaryRule boundary) {
    SdeSystem sys;
    sys.dimension = 6;
    sys.noise_dimension = 4; // the injection-path pair is noiseless
    const double gsn = d.gamma_sn, gcn = d.gamma_cn, zn = d.zeta_n, g = p.g;
    const Complex eip = unit_phase(p.theta);
    const Complex eim = unit_phase(-p.theta);

    sys.drift = [=](std::span<const Complex> y, double tau, std::span<Complex> out) {
        const double lam = pump_rate(schedule, tau);
        const Complex e1 = y[0], m1 = y[1], e2 = y[2], m2 = y[3], ec = y[4], mc = y[5];
        out[0] = -gsn * e1 + m1 * (lam - e1 * e1) + zn * ec;
        out[1] = -gsn * m1 + e1 * (lam - m1 * m1) + zn * mc;
        out[2] = -gsn * e2 + m2 * (lam - e2 * e2) - zn * ec * eip;
        out[3] = -gsn * m2 + e2 * (lam - m2 * m2) - zn * mc * eim;
        out[4] = -gcn * ec - zn * e1 + zn * e2 * eip;
        out[5] = -gcn * mc - zn * m1 + zn * m2 * eim;
    };
    sys.diffusion_amplitude = [=](std::span<const Complex> y, double tau,
                                  std::span<Complex> out) {
        const double lam = pump_rate(schedule, tau);
        for (std::size_t j = 0; j < 4; ++j) out[j] = signal_noise_amp(g, lam, y[j]);
        out[4] = out[5] = 0.0; // Eqs. for the injection path carry no noise
    };
    sys.diffusion_component = [=](std::size_t j, Complex yj, double tau) -> Complex {
        if (j >= 4) return 0.0;
        return signal_noise_amp(g, pump_rate(schedule, tau), yj);
    };
    if (boundary == BoundaryRule::ReflectClassicalSubspace) {
        sys.post_step_hook = [=](std::span<Complex> y, double tau) {
            reflect_boundary(y, pump_rate(schedule, tau), 1.0, 4);
        };
    }
    return sys;
}

SdeSystem build_path_eliminated(const ModelParams& p, const DerivedParams& d,
                                const PumpSchedule& schedule, BoundaryRule boundary) {
    SdeSystem sys;
    sys.dimension = 4;
    const double xi = d.xi, g = p.g;
    const Complex eip = unit_phase(p.theta);
    const Complex eim = unit_phase(-p.theta);

    sys.drift = [=](std::span<const Complex> y, double tau, std::span<Complex> out) {
        const double lam = pump_rate(schedule, tau);
        const Complex e1 = y[0], m1 = y[1], e2 = y[2], m2 = y[3];
        out[0] = -e1 + m1 * (lam - e1 * e1) + xi * e2 * eip;
        out[1] = -m1 + e1 * (lam - m1 * m1) + xi * m2 * eim;
        out[2] = -e2 + m2 * (lam - e2 * e2) + xi * e1 * eip;
        out[3] = -m2 + e2 * (lam - m2 * m2) + xi * m1 * eim;
    };
    sys.diffusion_amplitude = [=](std::span<const Complex> y, double tau,
                                  std::span<Complex> out) {
        const double lam = pump_rate(schedule, tau);
        for (std::size_t j = 0; j < 4; ++j) out[j] = signal_noise_amp(g, lam, y[j]);
    };
    sys.diffusion_component = [=](std::size_t, Complex yj, double tau) -> Complex {
        return signal_noise_amp(g, pump_rate(schedule, tau), yj);
    };
    if (boundary == BoundaryRule::ReflectClassicalSubspace) {
        sys.post_step_hook = [=](std::span<Complex> y, double tau) {
            reflect_boundary(y, pump_rate(schedule, tau), 1.0, 4);
        };
    }
    return sys;
}

SdeSystem build_full(const ModelParams& p, const DerivedParams& d,
                     const PumpSchedule& schedule, BoundaryRule boundary) {
    SdeSystem sys;
    sys.dimension = 10;
    sys.noise_dimension = 4; // zero-temperature pumps and path are noiseless
    // kappa recovered from the noise parameter, eps_p tied to lambda through
    // the classical threshold so every variant shares one pump schedule
    const double kappa = p.g * std::sqrt(2.0 * d.gamma_s_eff * p.gamma_p);
    const double eps_th = d.gamma_s_eff * p.gamma_p / kappa;
    const double gse = d.gamma_s_eff; // integration runs in tau = gamma'_s t
    const Complex eip = unit_phase(p.theta);
    const Complex eim = unit_phase(-p.theta);
    const Complex gs_p(p.gamma_s, p.delta_s), gs_m(p.gamma_s, -p.delta_s);
    const Complex gp_p(p.gamma_p, p.delta_p), gp_m(p.gamma_p, -p.delta_p);
    const Complex gc_p(p.gamma_c, p.delta_s), gc_m(p.gamma_c, -p.delta_s);
    const double zeta = p.zeta, g = p.g;

    sys.drift = [=](std::span<const Complex> y, double tau, std::span<Complex> out) {
        const double eps = pump_rate(schedule, tau) * eps_th;
        const Complex as1 = y[0], bs1 = y[1], as2 = y[2], bs2 = y[3];
        const Complex ap1 = y[4], bp1 = y[5], ap2 = y[6], bp2 = y[7];
        const Complex ac = y[8], bc = y[9];
        out[0] = (-gs_p * as1 + kappa * bs1 * ap1 + zeta * ac) / gse;
        out[1] = (-gs_m * bs1 + kappa * as1 * bp1 + zeta * bc) / gse;
        out[2] = (-gs_p * as2 + kappa * bs2 * ap2 - zeta * ac * eip) / gse;
        out[3] = (-gs_m * bs2 + kappa * as2 * bp2 - zeta * bc * eim) / gse;
        out[4] = (eps - gp_p * ap1 - 0.5 * kappa * as1 * as1) / gse;
        out[5] = (eps - gp_m * bp1 - 0.5 * kappa * bs1 * bs1) / gse;
        out[6] = (eps - gp_p * ap2 - 0.5 * kappa * as2 * as2) / gse;
        out[7] = (eps - gp_m * bp2 - 0.5 * kappa * bs2 * bs2) / gse;
        out[8] = (-gc_p * ac - zeta * as1 + zeta * as2 * eip) / gse;
        out[9] = (-gc_m * bc - zeta * bs1 + zeta * bs2 * eim) / gse;
    };
    const double root_gse = std::sqrt(gse);
    sys.diffusion_amplitude = [=](std::span<const Complex> y, double,
                                  std::span<Complex> out) {
        // zero-temperature reservoirs: only the signal modes keep noise
        out[0] = std::sqrt(kappa * y[4]) / root_gse;
        out[1] = std::sqrt(kappa * y[5]) / root_gse;
        out[2] = std::sqrt(kappa * y[6]) / root_gse;
        out[3] = std::sqrt(kappa * y[7]) / root_gse;
        for (std::size_t j = 4; j < 10; ++j) out[j] = 0.0;
    };
    if (boundary == BoundaryRule::ReflectClassicalSubspace) {
        sys.post_step_hook = [=](std::span<Complex> y, double tau) {
            reflect_boundary(y, pump_rate(schedule, tau), g, 4);
        };
    }
    return sys;
}

} // namespace

SdeSystem build_system(const ModelParams& params, DopoVariant variant,
                       const PumpSchedule& schedule, BoundaryRule boundary) {
    const DerivedParams d = derive_params(params);
    if (variant != DopoVariant::Full10 && (params.delta_s != 0.0 || params.delta_p != 0.0))
        throw ConfigError("detunings require the full10 variant");
    if (params.g <= 0.0) throw ConfigError("noise parameter g must be positive");
    switch (variant) {
        case DopoVariant::Full10: return build_full(params, d, schedule, boundary);
        case DopoVariant::PumpEliminated6:
            return build_pump_eliminated(params, d, schedule, boundary);
        case DopoVariant::PathEliminated4:
            return build_path_eliminated(params, d, schedule, boundary);
    }
    throw ConfigError("unknown variant");
}

} // namespace dopo
