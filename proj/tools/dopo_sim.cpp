// Command-line front end for the coupled-DOPO positive-P simulator.
//
//   dopo_sim run --preset case-b-desk --out out/
//   dopo_sim sweep --config my.json --out out/ --trajectories 2000
//   dopo_sim distributions --preset superposition-desk --out out/
//   dopo_sim convergence-check --out out/
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dopo/config.hpp"
#include "dopo/io.hpp"
#include "dopo/observables.hpp"
#include "dopo/rng.hpp"
#include "dopo/sde.hpp"
#include "dopo/version.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir = "out";
    std::vector<std::string> sets;
    // value-or-unset flags
    double dt = -1.0;
    long trajectories = -1;
    std::string scheme;
    long long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Path to a JSON config");
    cmd->add_option("--preset", args.preset,
                    "Preset name (case-a, case-b, superposition, *-desk)");
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--seed", args.seed, "Master seed (64-bit)");
    cmd->add_option("--trajectories", args.trajectories, "Trajectory count override");
    cmd->add_option("--scheme", args.scheme, "Integration scheme: em | platen2");
    cmd->add_option("--dt", args.dt, "Time step override");
    cmd->add_option("--set", args.sets,
                    "Dotted-path config override, e.g. --set params.gamma_s=0.3")
        ->take_all();
}

dopo::ExperimentSpec resolve_spec(const CommonArgs& args) {
    std::string text;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw dopo::IoError("cannot read config file " + args.config_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
        if (!args.preset.empty())
            throw dopo::ConfigError("--config and --preset are mutually exclusive");
    } else {
        const std::string name = args.preset.empty() ? "case-b-desk" : args.preset;
        text = dopo::render_config(dopo::preset_spec(name));
    }
    for (const auto& assignment : args.sets)
        text = dopo::apply_set_override(text, assignment);
    dopo::ExperimentSpec spec = dopo::parse_config(text);
    if (args.seed >= 0) spec.master_seed = static_cast<std::uint64_t>(args.seed);
    if (args.trajectories >= 0) spec.n_trajectories = args.trajectories;
    if (args.dt > 0) spec.dt = args.dt;
    if (!args.scheme.empty()) {
        if (args.scheme == "em") spec.scheme = dopo::Scheme::EulerMaruyama;
        else if (args.scheme == "platen2") spec.scheme = dopo::Scheme::WeakOrder2Platen;
        else throw dopo::ConfigError("unknown scheme '" + args.scheme + "'");
    }
    spec.validate();
    return spec;
}

int run_spec(const dopo::ExperimentSpec& spec, const std::string& out_dir) {
    std::fprintf(stderr, "dopo_sim %s: %zu label(s), %ld trajectories, dt=%g\n",
                 dopo::kVersion, spec.sweep.empty() ? 1 : spec.sweep.size(),
                 spec.n_trajectories, spec.dt);
    const dopo::ExperimentResult result = dopo::run_experiment(spec);
    int failed_labels = 0;
    for (const auto& label : result.labels) {
        if (label.error.empty()) {
            std::fprintf(stderr, "  %-16s %6.1fs  failed=%ld\n", label.label.c_str(),
                         label.wall_time_s, label.n_failed);
        } else {
            ++failed_labels;
            std::fprintf(stderr, "  %-16s FAILED: %s\n", label.label.c_str(),
                         label.error.c_str());
        }
    }
    const auto files = dopo::write_outputs(result, out_dir);
    std::fprintf(stderr, "wrote %zu files to %s\n", files.size(), out_dir.c_str());
    return failed_labels == 0 ? 0 : 3;
}

// Weak-order harness on the Ornstein-Uhlenbeck benchmark: measures the
// E[x^2] convergence slope of both schemes against the exact discrete chain
// driven by the same increments.
int convergence_check(const std::string& out_dir, long n_traj) {
    using namespace dopo;
    const double gamma = 1.0, sigma = 1.0, x0 = 1.0, t_end = 1.0;
    SdeSystem ou;
    ou.dimension = 1;
    ou.drift = [=](std::span<const Complex> y, double, std::span<Complex> out) {
        out[0] = -gamma * y[0];
    };
    ou.diffusion_amplitude = [=](std::span<const Complex>, double, std::span<Complex> out) {
        out[0] = sigma;
    };
    ou.diffusion_component = [=](std::size_t, Complex, double) -> Complex { return sigma; };

    const std::vector<double> dts{0.02, 0.01, 0.005, 0.0025};
    std::string csv = "scheme,dt,err_ex,err_ex2\n";
    double slopes[2] = {0, 0};
    for (int si = 0; si < 2; ++si) {
        const Scheme scheme = si == 0 ? Scheme::EulerMaruyama : Scheme::WeakOrder2Platen;
        std::vector<double> lx, ly;
        for (double dt : dts) {
            const long steps = std::lround(t_end / dt);
            const double decay = std::exp(-gamma * dt);
            const double qexact = sigma * std::sqrt((1.0 - decay * decay) / (2.0 * gamma));
            double sum_dx = 0.0, sum_dx2 = 0.0;
            StepScratch scratch;
            std::vector<double> dw(1);
            std::vector<Complex> y(1);
            for (long i = 0; i < n_traj; ++i) {
                Rng rng = substream(0xC0FFEEull + static_cast<std::uint64_t>(si), i);
                y[0] = x0;
                double xe = x0;
                for (long s = 0; s < steps; ++s) {
                    generate_wiener_increments(rng, 1, dt, dw);
                    const double t = static_cast<double>(s) * dt;
                    if (scheme == Scheme::EulerMaruyama)
                        euler_maruyama_step(ou, y, t, dt, dw, scratch);
                    else
                        platen_weak2_step(ou, y, t, dt, dw, scratch);
                    xe = xe * decay + qexact * dw[0] / std::sqrt(dt);
                }
                sum_dx += y[0].real() - xe;
                sum_dx2 += y[0].real() * y[0].real() - xe * xe;
            }
            const double err_ex = std::abs(sum_dx / static_cast<double>(n_traj));
            const double err_ex2 = std::abs(sum_dx2 / static_cast<double>(n_traj));
            csv += std::string(si == 0 ? "em" : "platen2") + "," + format_double(dt) + "," +
                   format_double(err_ex) + "," + format_double(err_ex2) + "\n";
            lx.push_back(std::log(dt));
            ly.push_back(std::log(std::max(err_ex2, 1e-300)));
        }
        // least-squares slope
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) { mx += lx[i]; my += ly[i]; }
        mx /= lx.size();
        my /= ly.size();
        double num = 0, den = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            num += (lx[i] - mx) * (ly[i] - my);
            den += (lx[i] - mx) * (lx[i] - mx);
        }
        slopes[si] = num / den;
    }
    std::fprintf(stderr, "weak-order slopes: em=%.3f platen2=%.3f\n", slopes[0], slopes[1]);
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "convergence.csv", std::ios::binary);
    if (!out) throw dopo::IoError("cannot write convergence.csv");
    out << csv;
    const bool ok = std::abs(slopes[0] - 1.0) <= 0.3 && std::abs(slopes[1] - 2.0) <= 0.3;
    std::fprintf(stderr, "%s\n", ok ? "weak-order check passed" : "weak-order check FAILED");
    return ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Positive-P Monte Carlo simulator for two DOPOs with mutual injections"};
    app.require_subcommand(1);

    CommonArgs run_args, sweep_args, dist_args;
    CLI::App* cmd_run = app.add_subcommand("run", "Run an experiment (series + distributions)");
    add_common(cmd_run, run_args);
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "Run series observables only");
    add_common(cmd_sweep, sweep_args);
    CLI::App* cmd_dist =
        app.add_subcommand("distributions", "Run distribution outputs only");
    add_common(cmd_dist, dist_args);

    std::string conv_out = "out";
    long conv_traj = 100000;
    CLI::App* cmd_conv =
        app.add_subcommand("convergence-check", "Weak-order harness on the OU benchmark");
    cmd_conv->add_option("--out", conv_out, "Output directory");
    cmd_conv->add_option("--trajectories", conv_traj, "Trajectories per step size");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            return run_spec(resolve_spec(run_args), run_args.out_dir);
        }
        if (cmd_sweep->parsed()) {
            dopo::ExperimentSpec spec = resolve_spec(sweep_args);
            spec.outputs.distributions.reset();
            return run_spec(spec, sweep_args.out_dir);
        }
        if (cmd_dist->parsed()) {
            dopo::ExperimentSpec spec = resolve_spec(dist_args);
            if (!spec.outputs.distributions)
                throw dopo::ConfigError("spec requests no distributions");
            return run_spec(spec, dist_args.out_dir);
        }
        if (cmd_conv->parsed()) {
            return convergence_check(conv_out, conv_traj);
        }
    } catch (const dopo::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const dopo::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const dopo::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
