#include "dopo/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "dopo/config.hpp"
#include "dopo/version.hpp"

namespace dopo {

namespace {

using Json = nlohmann::ordered_json;

std::string tau_tag(double tau) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", tau);
    std::string s = buf;
    for (auto& c : s)
        if (c == '.') c = 'p'; // keep file names dot-free before the extension
    return s;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << body;
    if (!out) throw IoError("write failed: " + path.string());
}

struct Column {
    const char* name;
    double ObservableRow::*value;
    double ObservableRow::*se; // nullptr = no error column
};

std::vector<Column> columns_for(const OutputRequest& outputs) {
    std::vector<Column> cols;
    cols.push_back({"tau", &ObservableRow::tau, nullptr});
    cols.push_back({"lambda", &ObservableRow::lambda, nullptr});
    auto requested = [&](SeriesObservable o) {
        return std::find(outputs.series.begin(), outputs.series.end(), o) !=
               outputs.series.end();
    };
    if (requested(SeriesObservable::PhotonNumber)) {
        cols.push_back({"n1", &ObservableRow::n1, &ObservableRow::n1_se});
        cols.push_back({"n2", &ObservableRow::n2, &ObservableRow::n2_se});
    }
    if (requested(SeriesObservable::CorrXX))
        cols.push_back({"corr_xx", &ObservableRow::corr_xx, &ObservableRow::corr_xx_se});
    if (requested(SeriesObservable::CorrPP))
        cols.push_back({"corr_pp", &ObservableRow::corr_pp, &ObservableRow::corr_pp_se});
    if (requested(SeriesObservable::EprSum))
        cols.push_back({"epr_sum", &ObservableRow::epr_sum, &ObservableRow::epr_sum_se});
    if (requested(SeriesObservable::Discord))
        cols.push_back({"discord", &ObservableRow::discord, &ObservableRow::discord_se});
    if (requested(SeriesObservable::VarP)) {
        cols.push_back({"var_p1", &ObservableRow::var_p1, &ObservableRow::var_p1_se});
        cols.push_back({"var_p2", &ObservableRow::var_p2, &ObservableRow::var_p2_se});
    }
    return cols;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string series_header(const OutputRequest& outputs) {
    std::string h;
    bool first = true;
    for (const auto& col : columns_for(outputs)) {
        if (!first) h += ',';
        h += col.name;
        first = false;
        if (col.se) {
            h += ',';
            h += col.name;
            h += "_se";
        }
    }
    return h;
}

std::string series_csv(const LabelResult& label, const OutputRequest& outputs) {
    const auto cols = columns_for(outputs);
    std::string body = series_header(outputs) + "\n";
    for (const auto& row : label.rows) {
        bool first = true;
        for (const auto& col : cols) {
            if (!first) body += ',';
            first = false;
            body += format_double(row.*(col.value));
            if (col.se) {
                body += ',';
                body += format_double(row.*(col.se));
            }
        }
        body += '\n';
    }
    return body;
}

std::string distribution_csv(const QuadratureDistribution& dist) {
    std::string body = "grid,density\n";
    for (std::size_t i = 0; i < dist.grid.size(); ++i) {
        body += format_double(dist.grid[i]);
        body += ',';
        body += format_double(dist.density[i]);
        body += '\n';
    }
    return body;
}

std::string metadata_json(const ExperimentResult& result) {
    Json doc;
    doc["tool"] = "dopo_sim";
    doc["version"] = kVersion;
    doc["config"] = Json::parse(render_config(result.spec));
    doc["threads_used"] = result.threads_used;
    doc["wall_time_s"] = result.wall_time_s;

    Json conv;
    conv["anchor"] = 0.02356;
    conv["selected"] = {{"log_base", result.convention_used.base == LogBase::Natural
                                         ? "natural"
                                         : "base2"},
                        {"prescale", result.convention_used.prescale}};
    conv["table"] = Json::array();
    for (const auto& entry : result.convention_table) {
        conv["table"].push_back(
            {{"log_base", entry.base == LogBase::Natural ? "natural" : "base2"},
             {"prescale", entry.prescale},
             {"anchor_discord", std::isfinite(entry.value) ? Json(entry.value)
                                                           : Json(nullptr)}});
    }
    doc["discord_convention"] = conv;

    doc["labels"] = Json::array();
    for (const auto& label : result.labels) {
        Json lj;
        lj["label"] = label.label;
        lj["params"] = Json::parse(render_config([&] {
                                       ExperimentSpec s = result.spec;
                                       s.params = label.params;
                                       s.sweep.clear();
                                       return s;
                                   }()))["params"];
        lj["derived"] = {{"gamma_s_eff", label.derived.gamma_s_eff},
                         {"xi", label.derived.xi},
                         {"lambda_th", label.derived.lambda_th},
                         {"gamma_sn", label.derived.gamma_sn},
                         {"gamma_cn", label.derived.gamma_cn},
                         {"zeta_n", label.derived.zeta_n}};
        lj["trajectories_failed"] = label.n_failed;
        lj["error"] = label.error.empty() ? Json(nullptr) : Json(label.error);
        lj["wall_time_s"] = label.wall_time_s;
        Json dists = Json::array();
        for (const auto& art : label.distributions) {
            dists.push_back({{"tau", art.tau},
                             {"target", target_name(art.dist.target)},
                             {"n_excluded", art.dist.n_excluded},
                             {"unreliable", art.dist.unreliable},
                             {"imag_residue", art.dist.imag_residue},
                             {"fit_mean", art.fit.mean},
                             {"fit_sigma", art.fit.sigma},
                             {"fit_residual_norm", art.fit.residual_norm},
                             {"bimodal", art.bimodal}});
        }
        lj["distributions"] = dists;
        Json warn = Json::array();
        for (const auto& row : label.rows)
            if (row.discord_warning) warn.push_back(row.tau);
        lj["discord_warnings_tau"] = warn;
        doc["labels"].push_back(lj);
    }
    return doc.dump(2) + "\n";
}

std::vector<std::filesystem::path> write_outputs(const ExperimentResult& result,
                                                 const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());

    std::vector<std::filesystem::path> written;
    std::size_t labels_with_dists = 0;
    for (const auto& label : result.labels)
        if (!label.distributions.empty()) ++labels_with_dists;

    for (const auto& label : result.labels) {
        const auto series_path = dir / ("series_" + label.label + ".csv");
        write_file(series_path, series_csv(label, result.spec.outputs));
        written.push_back(series_path);
        for (const auto& art : label.distributions) {
            std::string name = "dist_";
            if (labels_with_dists > 1) name += label.label + "_";
            name += target_name(art.dist.target) + "_" + tau_tag(art.tau) + ".csv";
            const auto dist_path = dir / name;
            write_file(dist_path, distribution_csv(art.dist));
            written.push_back(dist_path);
        }
    }
    const auto meta_path = dir / "metadata.json";
    write_file(meta_path, metadata_json(result));
    written.push_back(meta_path);
    return written;
}

} // namespace dopo
