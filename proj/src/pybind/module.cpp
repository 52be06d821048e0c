#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dopo/config.hpp"
#include "dopo/io.hpp"
#include "dopo/observables.hpp"
#include "dopo/version.hpp"

namespace py = pybind11;
using namespace dopo;

namespace {

py::list covariance_to_list(const CovarianceMatrix4& cov) {
    py::list rows;
    for (int i = 0; i < 4; ++i) {
        py::list row;
        for (int j = 0; j < 4; ++j) row.append(cov.m[i][j]);
        rows.append(row);
    }
    return rows;
}

CovarianceMatrix4 covariance_from_list(const std::vector<std::vector<double>>& rows) {
    if (rows.size() != 4) throw ConfigError("covariance must be 4x4");
    CovarianceMatrix4 cov;
    for (int i = 0; i < 4; ++i) {
        if (rows[i].size() != 4) throw ConfigError("covariance must be 4x4");
        for (int j = 0; j < 4; ++j) cov.m[i][j] = rows[i][j];
    }
    return cov;
}

py::dict derived_to_dict(const DerivedParams& d) {
    py::dict out;
    out["gamma_s_eff"] = d.gamma_s_eff;
    out["xi"] = d.xi;
    out["lambda_th"] = d.lambda_th;
    out["gamma_sn"] = d.gamma_sn;
    out["gamma_cn"] = d.gamma_cn;
    out["zeta_n"] = d.zeta_n;
    return out;
}

} // namespace

PYBIND11_MODULE(_dopo_sim, m) {
    m.doc() = "Positive-P Monte Carlo simulator for two DOPOs with mutual injections";
    m.attr("__version__") = kVersion;

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<NumericalError>(m, "NumericalError");
    py::register_exception<IoError>(m, "IoError");

    m.def(
        "derive_params",
        [](double gamma_s, double gamma_c, double zeta) {
            ModelParams p;
            p.gamma_s = gamma_s;
            p.gamma_c = gamma_c;
            p.zeta = zeta;
            return derived_to_dict(derive_params(p));
        },
        py::arg("gamma_s"), py::arg("gamma_c"), py::arg("zeta") = 1.0,
        "Effective loss, normalized coupling and classical threshold");

    m.def(
        "pump_rate",
        [](double lambda_f, double t_f, double tau) {
            return pump_rate(PumpSchedule{lambda_f, t_f}, tau);
        },
        py::arg("lambda_f"), py::arg("t_f"), py::arg("tau"));

    m.def("binary_entropy",
          [](double x, bool base2) {
              return binary_entropy(x, base2 ? LogBase::Base2 : LogBase::Natural);
          },
          py::arg("x"), py::arg("base2") = false);

    m.def("classical_mixture_covariance",
          [](double alpha) { return covariance_to_list(classical_mixture_covariance(alpha)); },
          py::arg("alpha_cl"));

    m.def(
        "gaussian_discord",
        [](const std::vector<std::vector<double>>& cov, bool base2, double prescale) {
            const DiscordResult r = gaussian_discord(
                covariance_from_list(cov), DiscordConvention{base2 ? LogBase::Base2
                                                                   : LogBase::Natural,
                                                             prescale});
            return py::make_tuple(r.value, r.warning);
        },
        py::arg("covariance"), py::arg("base2") = false, py::arg("prescale") = 1.0,
        "Gaussian quantum discord of a two-mode covariance matrix; returns "
        "(value, warning)");

    m.def("symplectic_eigenvalues", [](const std::vector<std::vector<double>>& cov) {
        const auto nu = symplectic_eigenvalues(covariance_from_list(cov));
        return py::make_tuple(nu.first, nu.second);
    });

    m.def("discord_convention_table", []() {
        py::list out;
        for (const auto& e : discord_convention_table()) {
            py::dict row;
            row["log_base"] = e.base == LogBase::Natural ? "natural" : "base2";
            row["prescale"] = e.prescale;
            row["anchor_discord"] = e.value;
            out.append(row);
        }
        return out;
    });

    m.def("preset_config", [](const std::string& name) { return render_config(preset_spec(name)); },
          py::arg("name"), "Canonical JSON config for a named preset");

    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::string& out_dir, unsigned threads) {
            const ExperimentSpec spec = parse_config(config_json);
            const ExperimentResult result = run_experiment(spec, threads);
            const auto files = write_outputs(result, out_dir);
            py::list names;
            for (const auto& f : files) names.append(f.string());
            return names;
        },
        py::arg("config_json"), py::arg("out_dir"), py::arg("threads") = 0,
        "Parse a JSON config, run it, and write CSV/metadata outputs; returns "
        "the written paths");
}
