#include <doctest.h>

#include <cmath>
#include <vector>

#include "dopo/experiment.hpp"

using namespace dopo;

namespace {

// short, cheap variant of a preset for unit testing
ExperimentSpec shrink(ExperimentSpec spec, long n, double t_max) {
    spec.n_trajectories = n;
    std::vector<double> times;
    for (double t : spec.sample_times)
        if (t <= t_max + 1e-9) times.push_back(t);
    spec.sample_times = times;
    if (spec.outputs.distributions) spec.outputs.distributions.reset();
    return spec;
}

} // namespace

TEST_CASE("case_a_spec defines the gamma_s sweep") {
    const auto spec = case_a_spec();
    REQUIRE(spec.sweep.size() == 5);
    const double expected_th[] = {0.0050, 0.020, 0.33, 0.67, 0.98};
    for (std::size_t i = 0; i < 5; ++i) {
        const auto p = apply_overrides(spec.params, spec.sweep[i].overrides);
        CHECK(p.gamma_c == doctest::Approx(2.0 * p.gamma_s));
        const auto d = derive_params(p);
        CHECK(d.lambda_th == doctest::Approx(expected_th[i]).epsilon(5e-3));
    }
    CHECK(spec.params.t_f == 200.0);
    CHECK(spec.params.lambda_f == 1.5);
    CHECK(spec.params.gamma_p == 100.0);
    CHECK(spec.params.zeta == 1.0);
    CHECK(spec.params.g == 0.01);
    CHECK(spec.dt == 2e-3);
    CHECK(spec.n_trajectories == 50000);
    CHECK(spec.boundary == BoundaryRule::ReflectClassicalSubspace);
    CHECK(spec.variant == DopoVariant::PumpEliminated6);
}

TEST_CASE("case_b_spec defines the gamma_c sweep") {
    const auto spec = case_b_spec();
    REQUIRE(spec.sweep.size() == 5);
    const double expected_xi[] = {0.999, 0.995, 0.990, 0.952, 0.909};
    const double expected_th[] = {0.0010, 0.0050, 0.0099, 0.048, 0.091};
    for (std::size_t i = 0; i < 5; ++i) {
        const auto p = apply_overrides(spec.params, spec.sweep[i].overrides);
        CHECK(p.gamma_s == doctest::Approx(0.01));
        const auto d = derive_params(p);
        CHECK(d.xi == doctest::Approx(expected_xi[i]).epsilon(5e-3));
        CHECK(d.lambda_th == doctest::Approx(expected_th[i]).epsilon(5e-2));
    }
}

TEST_CASE("superposition_spec requests the four marginals at four times") {
    const auto spec = superposition_spec();
    REQUIRE(spec.outputs.distributions.has_value());
    const auto& d = *spec.outputs.distributions;
    CHECK(d.times == std::vector<double>{29.0, 31.0, 33.0, 35.0});
    CHECK(d.targets.size() == 4);
    CHECK(spec.n_trajectories == 200000);
    CHECK(spec.params.gamma_s == doctest::Approx(0.1));
    CHECK(spec.params.gamma_c == doctest::Approx(0.2));
    CHECK(d.grid.span_sigmas == doctest::Approx(5.0));
}

TEST_CASE("run_experiment rejects a zero-trajectory override") {
    auto spec = shrink(case_b_spec(), 100, 2.0);
    spec.n_trajectories = 0;
    CHECK_THROWS_AS(run_experiment(spec), ConfigError);
}

TEST_CASE("initial row is exact vacuum regardless of parameters") {
    auto spec = shrink(case_a_spec(), 200, 3.0);
    const auto result = run_experiment(spec);
    REQUIRE(result.labels.size() == 5);
    for (const auto& label : result.labels) {
        const auto& row = label.rows.front();
        CHECK(row.tau == 0.0);
        CHECK(row.lambda == 0.0);
        CHECK(row.n1 == 0.0);
        CHECK(row.n2 == 0.0);
        CHECK(row.epr_sum == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(row.var_p1 == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(row.var_p2 == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(row.discord == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("pump column equals the schedule on the tau column") {
    auto spec = shrink(case_b_spec(), 64, 10.0);
    spec.sweep.resize(1);
    const auto result = run_experiment(spec);
    const PumpSchedule sched{spec.params.lambda_f, spec.params.t_f};
    double prev = -1.0;
    for (const auto& row : result.labels[0].rows) {
        CHECK(row.lambda == pump_rate(sched, row.tau));
        CHECK(row.lambda >= prev);
        prev = row.lambda;
    }
}

TEST_CASE("same spec and seed reproduce identical series") {
    auto spec = shrink(case_b_spec(), 128, 5.0);
    spec.sweep = {spec.sweep[2]}; // gc1
    const auto a = run_experiment(spec, 1);
    const auto b = run_experiment(spec, 2);
    REQUIRE(a.labels.size() == 1);
    REQUIRE(b.labels.size() == 1);
    for (std::size_t i = 0; i < a.labels[0].rows.size(); ++i) {
        const auto& ra = a.labels[0].rows[i];
        const auto& rb = b.labels[0].rows[i];
        CHECK(ra.n1 == rb.n1);
        CHECK(ra.corr_pp == rb.corr_pp);
        CHECK(ra.epr_sum == rb.epr_sum);
        CHECK(ra.discord == rb.discord);
        CHECK(ra.var_p1 == rb.var_p1);
        CHECK(ra.n1_se == rb.n1_se);
    }
}

TEST_CASE("downsampling trajectories 4x roughly doubles standard errors") {
    auto big = shrink(case_b_spec(), 2000, 12.0);
    big.sweep = {big.sweep[2]};
    auto small = big;
    small.n_trajectories = 500;
    const auto rb = run_experiment(big);
    const auto rs = run_experiment(small);
    std::vector<double> ratios;
    for (std::size_t i = 0; i < rb.labels[0].rows.size(); ++i) {
        const auto& b = rb.labels[0].rows[i];
        const auto& s = rs.labels[0].rows[i];
        if (b.var_p1_se > 1e-12) ratios.push_back(s.var_p1_se / b.var_p1_se);
        if (b.epr_sum_se > 1e-12) ratios.push_back(s.epr_sum_se / b.epr_sum_se);
    }
    REQUIRE(ratios.size() >= 6);
    std::sort(ratios.begin(), ratios.end());
    const double median = ratios[ratios.size() / 2];
    CHECK(median > 1.4);
    CHECK(median < 2.6);
}

TEST_CASE("a diverging label does not abort its siblings") {
    ExperimentSpec spec = case_a_spec();
    spec.n_trajectories = 16;
    spec.sample_times = {0.0, 20.0, 45.0};
    spec.dt = 0.1; // makes the stiff injection path (gamma_cn ~ 46) blow up
    spec.sweep = {{"stiff", {{"gamma_s", 0.5}, {"gamma_c", 25.0}}},
                  {"tame", {{"gamma_s", 0.1}, {"gamma_c", 0.2}}}};
    const auto result = run_experiment(spec);
    REQUIRE(result.labels.size() == 2);
    CHECK_FALSE(result.labels[0].error.empty());
    CHECK(result.labels[0].rows.empty());
    CHECK(result.labels[1].error.empty());
    CHECK(result.labels[1].rows.size() == 3);
}

TEST_CASE("common random numbers reuse the seed across labels") {
    auto spec = shrink(case_a_spec(), 64, 2.0);
    spec.sweep = {{"one", {{"gamma_s", 0.1}, {"gamma_c", 0.2}}},
                  {"two", {{"gamma_s", 0.1}, {"gamma_c", 0.2}}}};
    spec.common_random_numbers = true;
    const auto crn = run_experiment(spec);
    // identical parameters + identical streams -> identical series
    for (std::size_t i = 0; i < crn.labels[0].rows.size(); ++i)
        CHECK(crn.labels[0].rows[i].n1 == crn.labels[1].rows[i].n1);
    spec.common_random_numbers = false;
    const auto ind = run_experiment(spec);
    bool any_different = false;
    for (std::size_t i = 0; i < ind.labels[0].rows.size(); ++i)
        any_different = any_different || ind.labels[0].rows[i].n1 != ind.labels[1].rows[i].n1;
    CHECK(any_different);
}
