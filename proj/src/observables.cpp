#include "dopo/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dopo {

namespace {

constexpr double kTwoOverPiSqrt = 0.79788456080286535588; // sqrt(2/pi)
constexpr double kOverflowGuard = 700.0;                  // exp() overflow threshold
constexpr double kAnchorDiscord = 0.02356;                // classical-mixture reference

RawMoments pairwise_raw(const EnsembleSnapshot& snap, const ModeMap& map, std::size_t lo,
                        std::size_t hi) {
    if (hi - lo <= 64) {
        RawMoments acc;
        for (std::size_t i = lo; i < hi; ++i)
            acc += raw_moments_of_state(snap.states[i], map);
        return acc;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    RawMoments left = pairwise_raw(snap, map, lo, mid);
    left += pairwise_raw(snap, map, mid, hi);
    return left;
}

double det2(double a, double b, double c, double d) { return a * d - b * c; }

double det4(const std::array<std::array<double, 4>, 4>& m) {
    double det = 0.0;
    for (int c = 0; c < 4; ++c) {
        double sub[3][3];
        for (int i = 1; i < 4; ++i) {
            int cc = 0;
            for (int j = 0; j < 4; ++j) {
                if (j == c) continue;
                sub[i - 1][cc++] = m[i][j];
            }
        }
        const double minor = sub[0][0] * (sub[1][1] * sub[2][2] - sub[1][2] * sub[2][1]) -
                             sub[0][1] * (sub[1][0] * sub[2][2] - sub[1][2] * sub[2][0]) +
                             sub[0][2] * (sub[1][0] * sub[2][1] - sub[1][1] * sub[2][0]);
        det += ((c % 2 == 0) ? 1.0 : -1.0) * m[0][c] * minor;
    }
    return det;
}

struct Invariants {
    double a, b, c, d;
};

Invariants invariants_of(const CovarianceMatrix4& cov) {
    return {cov.a_s(), cov.b_s(), cov.c_s(), cov.d_s()};
}

CovarianceMatrix4 scaled(const CovarianceMatrix4& cov, double s) {
    CovarianceMatrix4 out = cov;
    for (auto& row : out.m)
        for (auto& v : row) v *= s;
    return out;
}

// inf det(eps) over Gaussian measurements on mode 2, by the printed two-branch
// minimization (general covariance).
double min_conditional_det(const Invariants& iv) {
    const double A = iv.a, B = iv.b, C = iv.c, D = iv.d;
    const bool homodyne_branch =
        (D - A * B) * (D - A * B) <= (1.0 + B) * C * C * (A + D);
    if (homodyne_branch && std::abs(B - 1.0) > 1e-6) {
        const double root = std::sqrt(std::max(0.0, C * C + (B - 1.0) * (D - A)));
        return (2.0 * C * C + (B - 1.0) * (D - A) + 2.0 * std::abs(C) * root) /
               ((B - 1.0) * (B - 1.0));
    }
    const double arg = C * C * C * C + (D - A * B) * (D - A * B) -
                       2.0 * C * C * (A * B + D);
    return (A * B - C * C + D - std::sqrt(std::max(0.0, arg))) / (2.0 * B);
}

} // namespace

double CovarianceMatrix4::a_s() const { return det2(m[0][0], m[0][1], m[1][0], m[1][1]); }
double CovarianceMatrix4::b_s() const { return det2(m[2][2], m[2][3], m[3][2], m[3][3]); }
double CovarianceMatrix4::c_s() const { return det2(m[0][2], m[0][3], m[1][2], m[1][3]); }
double CovarianceMatrix4::d_s() const { return det4(m); }

std::string target_name(QuadTarget t) {
    switch (t) {
        case QuadTarget::X1: return "x1";
        case QuadTarget::X2: return "x2";
        case QuadTarget::P1: return "p1";
        case QuadTarget::P2: return "p2";
    }
    return "?";
}

RawMoments raw_moments_of_state(std::span<const Complex> state, const ModeMap& map) {
    const Complex a1 = state[map.alpha1], b1 = state[map.beta1];
    const Complex a2 = state[map.alpha2], b2 = state[map.beta2];
    RawMoments r;
    r.m[kA1] = a1;
    r.m[kB1] = b1;
    r.m[kA2] = a2;
    r.m[kB2] = b2;
    r.m[kA1A1] = a1 * a1;
    r.m[kB1B1] = b1 * b1;
    r.m[kA2A2] = a2 * a2;
    r.m[kB2B2] = b2 * b2;
    r.m[kB1A1] = b1 * a1;
    r.m[kB2A2] = b2 * a2;
    r.m[kA1A2] = a1 * a2;
    r.m[kB1B2] = b1 * b2;
    r.m[kB1A2] = b1 * a2;
    r.m[kB2A1] = b2 * a1;
    return r;
}

MomentSet moments_from_sums(const RawMoments& total, long n,
                            std::span<const RawMoments> batch_sums,
                            std::span<const long> batch_counts, double scale) {
    if (n <= 0) throw NumericalError("empty ensemble");
    MomentSet out;
    out.n_samples = n;
    out.n_batches = static_cast<int>(batch_sums.size());
    std::array<double, kMomentCount> factor;
    for (std::size_t i = 0; i < kMomentCount; ++i)
        factor[i] = (i < 4) ? scale : scale * scale;
    for (std::size_t i = 0; i < kMomentCount; ++i)
        out.mean[i] = total.m[i] * (factor[i] / static_cast<double>(n));

    const std::size_t nb = batch_sums.size();
    if (nb >= 2) {
        for (std::size_t i = 0; i < kMomentCount; ++i) {
            double acc = 0.0;
            std::size_t used = 0;
            for (std::size_t b = 0; b < nb; ++b) {
                if (batch_counts[b] <= 0) continue;
                const Complex bm =
                    batch_sums[b].m[i] * (factor[i] / static_cast<double>(batch_counts[b]));
                acc += std::norm(bm - out.mean[i]);
                ++used;
            }
            out.se[i] = used >= 2
                            ? std::sqrt(acc / (static_cast<double>(used) *
                                               static_cast<double>(used - 1)))
                            : 0.0;
        }
    }
    return out;
}

MomentSet estimate_moments(const EnsembleSnapshot& snapshot, const ModeMap& map) {
    const std::size_t n = snapshot.states.size();
    if (n == 0) throw NumericalError("empty ensemble");
    const RawMoments total = pairwise_raw(snapshot, map, 0, n);
    const std::size_t nb = std::min<std::size_t>(20, n);
    std::vector<RawMoments> batch_sums(nb);
    std::vector<long> counts(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * n / nb;
        const std::size_t hi = (b + 1) * n / nb;
        batch_sums[b] = pairwise_raw(snapshot, map, lo, hi);
        counts[b] = static_cast<long>(hi - lo);
    }
    return moments_from_sums(total, static_cast<long>(n), batch_sums, counts, map.scale);
}

QuadratureStats quadrature_stats(const MomentSet& ms) {
    const auto& m = ms.mean;
    QuadratureStats q;
    q.mean_x1 = 0.5 * (m[kA1] + m[kB1]).real();
    q.mean_x2 = 0.5 * (m[kA2] + m[kB2]).real();
    q.mean_p1 = 0.5 * (m[kA1] - m[kB1]).imag();
    q.mean_p2 = 0.5 * (m[kA2] - m[kB2]).imag();

    const double xx1 = 0.25 * (m[kA1A1] + m[kB1B1] + 2.0 * m[kB1A1] + 1.0).real();
    const double xx2 = 0.25 * (m[kA2A2] + m[kB2B2] + 2.0 * m[kB2A2] + 1.0).real();
    const double pp1 = 0.25 * (-m[kA1A1] - m[kB1B1] + 2.0 * m[kB1A1] + 1.0).real();
    const double pp2 = 0.25 * (-m[kA2A2] - m[kB2B2] + 2.0 * m[kB2A2] + 1.0).real();
    q.var_x1 = xx1 - q.mean_x1 * q.mean_x1;
    q.var_x2 = xx2 - q.mean_x2 * q.mean_x2;
    q.var_p1 = pp1 - q.mean_p1 * q.mean_p1;
    q.var_p2 = pp2 - q.mean_p2 * q.mean_p2;

    q.cov_x1x2 = 0.25 * (m[kA1A2] + m[kB1B2] + m[kB1A2] + m[kB2A1]).real() -
                 q.mean_x1 * q.mean_x2;
    q.cov_p1p2 = 0.25 * (-m[kA1A2] - m[kB1B2] + m[kB1A2] + m[kB2A1]).real() -
                 q.mean_p1 * q.mean_p2;

    const double denx = std::sqrt(std::max(0.0, q.var_x1 * q.var_x2));
    const double denp = std::sqrt(std::max(0.0, q.var_p1 * q.var_p2));
    q.corr_xx = denx > 0.0 ? q.cov_x1x2 / denx : 0.0;
    q.corr_pp = denp > 0.0 ? q.cov_p1p2 / denp : 0.0;
    q.epr_sum = q.var_x1 + q.var_x2 + 2.0 * q.cov_x1x2 +
                q.var_p1 + q.var_p2 - 2.0 * q.cov_p1p2;
    return q;
}

CovarianceMatrix4 covariance_matrix(const MomentSet& ms) {
    const auto& m = ms.mean;
    const QuadratureStats q = quadrature_stats(ms);
    const double cov_x1p1 =
        0.25 * (m[kA1A1] - m[kB1B1]).imag() - q.mean_x1 * q.mean_p1;
    const double cov_x2p2 =
        0.25 * (m[kA2A2] - m[kB2B2]).imag() - q.mean_x2 * q.mean_p2;
    const double cov_x1p2 =
        0.25 * (m[kA1A2] - m[kB2A1] + m[kB1A2] - m[kB1B2]).imag() -
        q.mean_x1 * q.mean_p2;
    const double cov_p1x2 =
        0.25 * (m[kA1A2] + m[kB2A1] - m[kB1A2] - m[kB1B2]).imag() -
        q.mean_p1 * q.mean_x2;

    CovarianceMatrix4 cov;
    auto& s = cov.m;
    s[0][0] = 4.0 * q.var_x1;
    s[1][1] = 4.0 * q.var_p1;
    s[2][2] = 4.0 * q.var_x2;
    s[3][3] = 4.0 * q.var_p2;
    s[0][1] = s[1][0] = 4.0 * cov_x1p1;
    s[0][2] = s[2][0] = 4.0 * q.cov_x1x2;
    s[0][3] = s[3][0] = 4.0 * cov_x1p2;
    s[1][2] = s[2][1] = 4.0 * cov_p1x2;
    s[1][3] = s[3][1] = 4.0 * q.cov_p1p2;
    s[2][3] = s[3][2] = 4.0 * cov_x2p2;
    return cov;
}

double binary_entropy(double x, LogBase base) {
    if (x < 0.5 - 1e-9)
        throw NumericalError("binary_entropy domain: argument " + std::to_string(x) +
                             " below 1/2");
    x = std::max(x, 0.5);
    const double hi = x + 0.5;
    const double lo = x - 0.5;
    double v = hi * std::log(hi);
    if (lo > 0.0) v -= lo * std::log(lo);
    if (base == LogBase::Base2) v /= std::log(2.0);
    return v;
}

std::pair<double, double> symplectic_eigenvalues(const CovarianceMatrix4& cov) {
    const Invariants iv = invariants_of(cov);
    if (!(iv.d > 0.0))
        throw NumericalError("covariance determinant not positive (D_S = " +
                             std::to_string(iv.d) + ")");
    const double delta = iv.a + iv.b + 2.0 * iv.c;
    if (!(delta > 0.0))
        throw NumericalError("unphysical covariance: nonpositive symplectic invariant sum");
    double disc = delta * delta - 4.0 * iv.d;
    const double tol = 1e-9 * std::max(delta * delta, 4.0 * std::abs(iv.d));
    if (disc < -tol)
        throw NumericalError("unphysical covariance: negative symplectic discriminant");
    disc = std::max(disc, 0.0);
    const double root = std::sqrt(disc);
    const double lo = std::max(0.0, 0.5 * (delta - root));
    const double hi = std::max(0.0, 0.5 * (delta + root));
    return {std::sqrt(lo), std::sqrt(hi)};
}

DiscordConvention default_discord_convention() { return {LogBase::Natural, 1.0}; }

DiscordResult gaussian_discord(const CovarianceMatrix4& cov,
                               const DiscordConvention& convention) {
    const CovarianceMatrix4 sc =
        convention.prescale == 1.0 ? cov : scaled(cov, convention.prescale);
    const Invariants iv = invariants_of(sc);
    const auto [nu_minus, nu_plus] = symplectic_eigenvalues(sc);

    auto fb = [&](double x) { return binary_entropy(x, convention.base); };
    const double common = fb(std::sqrt(iv.b)) - fb(nu_minus) - fb(nu_plus);

    double best = std::numeric_limits<double>::quiet_NaN();
    auto consider = [&](double root_det_eps) {
        if (!std::isfinite(root_det_eps) || root_det_eps < 0.5 - 1e-9) return;
        const double v = common + fb(root_det_eps);
        if (std::isnan(best) || v < best) best = v;
    };
    // general minimization
    const double e_general = min_conditional_det(iv);
    if (e_general > 0.0 && std::isfinite(e_general)) consider(std::sqrt(e_general));
    // squeezed-thermal shortcut; the smaller route wins
    consider((std::sqrt(iv.a) + 2.0 * std::sqrt(iv.a * iv.b) + 2.0 * iv.c) /
             (1.0 + std::sqrt(iv.b)));
    if (std::isnan(best)) throw NumericalError("gaussian discord: no valid evaluation route");

    DiscordResult result;
    if (best < 0.0 && best >= -1e-6) {
        result.value = 0.0;
    } else {
        result.value = best;
        result.warning = best < -1e-6;
    }
    return result;
}

CovarianceMatrix4 classical_mixture_covariance(double alpha_cl) {
    const double a = 4.0 * alpha_cl * alpha_cl;
    CovarianceMatrix4 cov;
    cov.m[0][0] = a + 1.0;
    cov.m[1][1] = 1.0;
    cov.m[2][2] = a + 1.0;
    cov.m[3][3] = 1.0;
    cov.m[0][2] = cov.m[2][0] = -a;
    return cov;
}

std::array<ConventionEntry, 4> discord_convention_table() {
    const CovarianceMatrix4 anchor = classical_mixture_covariance(50.0);
    std::array<ConventionEntry, 4> table{{{LogBase::Natural, 1.0, 0.0},
                                          {LogBase::Base2, 1.0, 0.0},
                                          {LogBase::Natural, 0.5, 0.0},
                                          {LogBase::Base2, 0.5, 0.0}}};
    for (auto& entry : table) {
        try {
            entry.value =
                gaussian_discord(anchor, {entry.base, entry.prescale}).value;
        } catch (const NumericalError&) {
            entry.value = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return table;
}

std::optional<DiscordConvention> resolve_discord_convention() {
    for (const auto& entry : discord_convention_table()) {
        if (std::isfinite(entry.value) &&
            std::abs(entry.value - kAnchorDiscord) / kAnchorDiscord < 0.05) {
            return DiscordConvention{entry.base, entry.prescale};
        }
    }
    return std::nullopt;
}

QuadratureDistribution distribution_from_pairs(std::span<const Complex> alphas,
                                               std::span<const Complex> betas,
                                               QuadTarget target,
                                               std::span<const double> grid) {
    if (alphas.size() != betas.size()) throw NumericalError("alpha/beta size mismatch");
    if (alphas.empty()) throw NumericalError("empty ensemble");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw ConfigError("distribution grid must be sorted");

    const bool is_x = (target == QuadTarget::X1 || target == QuadTarget::X2);
    QuadratureDistribution out;
    out.target = target;
    out.grid.assign(grid.begin(), grid.end());
    out.n_samples = static_cast<long>(alphas.size());

    std::vector<double> acc_re(grid.size(), 0.0), acc_im(grid.size(), 0.0);
    long included = 0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        // kernel = sqrt(2/pi) exp(-2q^2 +- 2q s -+ s^2/2), s = alpha +- beta
        const Complex s = is_x ? alphas[i] + betas[i] : alphas[i] - betas[i];
        const Complex s2h = 0.5 * s * s;
        const double const_re = is_x ? -s2h.real() : s2h.real();
        if (const_re > kOverflowGuard) {
            ++out.n_excluded;
            continue;
        }
        ++included;
        const double const_im = is_x ? -s2h.imag() : s2h.imag();
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const double q = grid[k];
            double ex_re, ex_im;
            if (is_x) {
                ex_re = -2.0 * q * q + 2.0 * q * s.real() + const_re;
                ex_im = 2.0 * q * s.imag() + const_im;
            } else {
                ex_re = -2.0 * q * q + 2.0 * q * s.imag() + const_re;
                ex_im = -2.0 * q * s.real() + const_im;
            }
            const double w = std::exp(ex_re);
            if (ex_im == 0.0) {
                acc_re[k] += w;
            } else {
                acc_re[k] += w * std::cos(ex_im);
                acc_im[k] += w * std::sin(ex_im);
            }
        }
    }
    if (included == 0) throw NumericalError("all samples excluded by overflow guard");

    out.density.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        out.density[k] = kTwoOverPiSqrt * acc_re[k] / static_cast<double>(included);
        out.imag_residue = std::max(
            out.imag_residue,
            std::abs(kTwoOverPiSqrt * acc_im[k] / static_cast<double>(included)));
    }
    out.unreliable =
        out.n_excluded > 0 &&
        static_cast<double>(out.n_excluded) > 0.01 * static_cast<double>(out.n_samples);
    return out;
}

QuadratureDistribution distribution(const EnsembleSnapshot& snapshot, const ModeMap& map,
                                    QuadTarget target, std::span<const double> grid) {
    const std::size_t n = snapshot.states.size();
    if (n == 0) throw NumericalError("empty ensemble");
    const bool mode1 = (target == QuadTarget::X1 || target == QuadTarget::P1);
    std::vector<Complex> alphas(n), betas(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& st = snapshot.states[i];
        alphas[i] = st[mode1 ? map.alpha1 : map.alpha2] * map.scale;
        betas[i] = st[mode1 ? map.beta1 : map.beta2] * map.scale;
    }
    return distribution_from_pairs(alphas, betas, target, grid);
}

double trapezoid_integral(std::span<const double> grid, std::span<const double> values) {
    double acc = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        acc += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    return acc;
}

GaussianFit fit_gaussian(const QuadratureDistribution& dist) {
    const std::size_t n = dist.grid.size();
    if (n < 3) throw NumericalError("fit_gaussian: grid too small");
    std::vector<double> d(n);
    double maxd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = std::max(dist.density[i], 0.0);
        maxd = std::max(maxd, d[i]);
    }
    if (maxd <= 0.0) throw NumericalError("fit_gaussian: degenerate density");

    // moment-based initial guess
    std::vector<double> xd(n), xxd(n);
    for (std::size_t i = 0; i < n; ++i) {
        xd[i] = dist.grid[i] * d[i];
        xxd[i] = dist.grid[i] * dist.grid[i] * d[i];
    }
    const double z = trapezoid_integral(dist.grid, d);
    if (z <= 0.0) throw NumericalError("fit_gaussian: zero integral");
    double mean = trapezoid_integral(dist.grid, xd) / z;
    double var = trapezoid_integral(dist.grid, xxd) / z - mean * mean;
    double sigma = std::sqrt(std::max(var, 1e-12));

    auto model = [](double x, double m, double s) {
        const double u = (x - m) / s;
        return std::exp(-0.5 * u * u) / (s * std::sqrt(2.0 * M_PI));
    };
    auto sse = [&](double m, double s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = d[i] - model(dist.grid[i], m, s);
            acc += r * r;
        }
        return acc;
    };

    double cur = sse(mean, sigma);
    for (int iter = 0; iter < 100; ++iter) {
        double jtj00 = 0, jtj01 = 0, jtj11 = 0, jtr0 = 0, jtr1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double f = model(dist.grid[i], mean, sigma);
            const double u = (dist.grid[i] - mean) / sigma;
            const double jm = f * u / sigma;
            const double js = f * (u * u - 1.0) / sigma;
            const double r = d[i] - f;
            jtj00 += jm * jm;
            jtj01 += jm * js;
            jtj11 += js * js;
            jtr0 += jm * r;
            jtr1 += js * r;
        }
        const double det = jtj00 * jtj11 - jtj01 * jtj01;
        if (!(std::abs(det) > 1e-300)) break;
        double dm = (jtj11 * jtr0 - jtj01 * jtr1) / det;
        double ds = (jtj00 * jtr1 - jtj01 * jtr0) / det;
        double step = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 25; ++halving) {
            const double m_new = mean + step * dm;
            const double s_new = sigma + step * ds;
            if (s_new > 0.0) {
                const double trial = sse(m_new, s_new);
                if (trial <= cur) {
                    mean = m_new;
                    sigma = s_new;
                    improved = trial < cur - 1e-30;
                    cur = trial;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!improved && std::abs(dm) < 1e-13 * (1.0 + std::abs(mean)) &&
            std::abs(ds) < 1e-13 * (1.0 + sigma))
            break;
        if (!improved) break;
    }

    GaussianFit fit;
    fit.mean = mean;
    fit.sigma = sigma;
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = d[i] - model(dist.grid[i], mean, sigma);
        sq[i] = r * r;
    }
    fit.residual_norm = std::sqrt(trapezoid_integral(dist.grid, sq));
    return fit;
}

std::vector<double> smooth_density(std::span<const double> density, int window) {
    if (window < 1) window = 1;
    if (window % 2 == 0) ++window;
    const int half = window / 2;
    const int n = static_cast<int>(density.size());
    std::vector<double> out(density.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        double acc = 0.0;
        for (int j = lo; j <= hi; ++j) acc += density[j];
        out[i] = acc / static_cast<double>(hi - lo + 1);
    }
    return out;
}

namespace {

// first trough/peak pair beyond `start`, stepping by dir; returns visibility
double side_visibility(const std::vector<double>& d, int start, int dir) {
    const int n = static_cast<int>(d.size());
    int i = start;
    // descend to a local minimum
    while (i + dir >= 0 && i + dir < n && d[i + dir] <= d[i]) i += dir;
    if (i + dir < 0 || i + dir >= n) return 0.0; // monotone tail
    const double trough = d[i];
    // ascend to the side peak
    int j = i;
    while (j + dir >= 0 && j + dir < n && d[j + dir] >= d[j]) j += dir;
    const double peak = d[j];
    if (peak <= trough || peak + trough <= 0.0) return 0.0;
    return (peak - trough) / (peak + trough);
}

} // namespace

double fringe_visibility(const QuadratureDistribution& dist) {
    const std::size_t n = dist.density.size();
    if (n < 5) return 0.0;
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = std::max(dist.density[i], 0.0);
    const int center = static_cast<int>(
        std::max_element(d.begin(), d.end()) - d.begin());
    return std::max(side_visibility(d, center, +1), side_visibility(d, center, -1));
}

} // namespace dopo
