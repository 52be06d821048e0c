#include "dopo/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

namespace dopo {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path.empty() ? what : path + ": " + what);
}

void expect_keys(const Json& obj, const std::string& path,
                 const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key))
            fail(path.empty() ? key : path + "." + key, "unknown key");
    }
}

double get_number(const Json& obj, const std::string& path, const std::string& key,
                  double fallback, bool* present = nullptr) {
    if (!obj.contains(key)) {
        if (present) *present = false;
        return fallback;
    }
    if (present) *present = true;
    const auto& v = obj.at(key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

Scheme parse_scheme(const std::string& s, const std::string& path) {
    if (s == "em") return Scheme::EulerMaruyama;
    if (s == "platen2") return Scheme::WeakOrder2Platen;
    fail(path, "unknown scheme '" + s + "' (expected em|platen2)");
}

std::string scheme_name(Scheme s) {
    return s == Scheme::EulerMaruyama ? "em" : "platen2";
}

DopoVariant parse_variant(const std::string& s, const std::string& path) {
    if (s == "full10") return DopoVariant::Full10;
    if (s == "pump_eliminated6") return DopoVariant::PumpEliminated6;
    if (s == "path_eliminated4") return DopoVariant::PathEliminated4;
    fail(path, "unknown variant '" + s + "'");
}

BoundaryRule parse_boundary(const std::string& s, const std::string& path) {
    if (s == "none") return BoundaryRule::None;
    if (s == "reflect_classical_subspace") return BoundaryRule::ReflectClassicalSubspace;
    fail(path, "unknown boundary rule '" + s + "'");
}

std::string boundary_name(BoundaryRule b) {
    return b == BoundaryRule::None ? "none" : "reflect_classical_subspace";
}

SeriesObservable parse_series_observable(const std::string& s, const std::string& path) {
    for (SeriesObservable o :
         {SeriesObservable::PhotonNumber, SeriesObservable::CorrXX, SeriesObservable::CorrPP,
          SeriesObservable::EprSum, SeriesObservable::Discord, SeriesObservable::VarP}) {
        if (series_observable_name(o) == s) return o;
    }
    fail(path, "unknown observable '" + s + "'");
}

QuadTarget parse_target(const std::string& s, const std::string& path) {
    for (QuadTarget t : {QuadTarget::X1, QuadTarget::X2, QuadTarget::P1, QuadTarget::P2})
        if (target_name(t) == s) return t;
    fail(path, "unknown target '" + s + "'");
}

void parse_params_into(ModelParams& p, const Json& obj, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    expect_keys(obj, path,
                {"gamma_s", "gamma_c", "gamma_p", "zeta", "theta", "delta_s", "delta_p", "g",
                 "lambda_f", "t_f"});
    p.gamma_s = get_number(obj, path, "gamma_s", p.gamma_s);
    p.gamma_c = get_number(obj, path, "gamma_c", p.gamma_c);
    p.gamma_p = get_number(obj, path, "gamma_p", p.gamma_p);
    p.zeta = get_number(obj, path, "zeta", p.zeta);
    p.theta = get_number(obj, path, "theta", p.theta);
    p.delta_s = get_number(obj, path, "delta_s", p.delta_s);
    p.delta_p = get_number(obj, path, "delta_p", p.delta_p);
    p.g = get_number(obj, path, "g", p.g);
    p.lambda_f = get_number(obj, path, "lambda_f", p.lambda_f);
    p.t_f = get_number(obj, path, "t_f", p.t_f);
}

std::vector<double> parse_sample_times(const Json& v, const std::string& path) {
    std::vector<double> out;
    if (v.is_array()) {
        for (const auto& x : v) {
            if (!x.is_number()) fail(path, "expected numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }
    if (v.is_object()) {
        expect_keys(v, path, {"start", "stop", "step"});
        const double start = get_number(v, path, "start", 0.0);
        const double stop = get_number(v, path, "stop", 0.0);
        const double step = get_number(v, path, "step", 1.0);
        if (!(step > 0)) fail(path + ".step", "must be positive");
        for (double t = start; t <= stop + 1e-9; t += step) out.push_back(t);
        return out;
    }
    fail(path, "expected an array or {start, stop, step}");
}

ExperimentSpec spec_from_json(const Json& doc);

ExperimentSpec expand_preset_then_merge(const Json& doc) {
    const auto& pv = doc.at("preset");
    if (!pv.is_string()) fail("preset", "expected a string");
    const ExperimentSpec base = preset_spec(pv.get<std::string>());
    // re-render the preset and overlay remaining keys on it
    Json merged = Json::parse(render_config(base));
    for (const auto& [key, value] : doc.items()) {
        if (key == "preset") continue;
        if (key == "params" && value.is_object() && merged.contains("params")) {
            for (const auto& [pk, pv2] : value.items()) merged["params"][pk] = pv2;
        } else {
            merged[key] = value;
        }
    }
    return spec_from_json(merged);
}

ExperimentSpec spec_from_json(const Json& doc) {
    if (!doc.is_object()) fail("", "config root must be an object");
    if (doc.contains("preset")) return expand_preset_then_merge(doc);

    expect_keys(doc, "",
                {"variant", "boundary", "scheme", "dt", "params", "sweep", "sample_times",
                 "n_trajectories", "master_seed", "common_random_numbers",
                 "max_failure_fraction", "outputs"});

    ExperimentSpec spec;
    spec.outputs.series.clear();
    if (doc.contains("variant")) {
        if (!doc.at("variant").is_string()) fail("variant", "expected a string");
        spec.variant = parse_variant(doc.at("variant").get<std::string>(), "variant");
    }
    if (doc.contains("boundary")) {
        if (!doc.at("boundary").is_string()) fail("boundary", "expected a string");
        spec.boundary = parse_boundary(doc.at("boundary").get<std::string>(), "boundary");
    }
    if (doc.contains("scheme")) {
        if (!doc.at("scheme").is_string()) fail("scheme", "expected a string");
        spec.scheme = parse_scheme(doc.at("scheme").get<std::string>(), "scheme");
    }
    spec.dt = get_number(doc, "", "dt", spec.dt);
    if (doc.contains("params")) parse_params_into(spec.params, doc.at("params"), "params");
    if (doc.contains("sweep")) {
        const auto& sw = doc.at("sweep");
        if (!sw.is_array()) fail("sweep", "expected an array");
        for (std::size_t i = 0; i < sw.size(); ++i) {
            const std::string path = "sweep[" + std::to_string(i) + "]";
            const auto& e = sw.at(i);
            if (!e.is_object()) fail(path, "expected an object");
            expect_keys(e, path, {"label", "overrides"});
            SweepEntry entry;
            if (!e.contains("label") || !e.at("label").is_string())
                fail(path + ".label", "required string");
            entry.label = e.at("label").get<std::string>();
            if (e.contains("overrides")) {
                const auto& ov = e.at("overrides");
                if (!ov.is_object()) fail(path + ".overrides", "expected an object");
                expect_keys(ov, path + ".overrides",
                            {"gamma_s", "gamma_c", "gamma_p", "zeta", "theta", "delta_s",
                             "delta_p", "g", "lambda_f", "t_f"});
                for (const auto& [k, v] : ov.items()) {
                    if (!v.is_number()) fail(path + ".overrides." + k, "expected a number");
                    entry.overrides[k] = v.get<double>();
                }
            }
            spec.sweep.push_back(std::move(entry));
        }
    }
    if (doc.contains("sample_times"))
        spec.sample_times = parse_sample_times(doc.at("sample_times"), "sample_times");
    else
        spec.sample_times = unit_sample_grid(spec.params.t_f);
    if (doc.contains("n_trajectories")) {
        const auto& v = doc.at("n_trajectories");
        if (!v.is_number_integer() || v.get<long>() < 0)
            fail("n_trajectories", "expected a nonnegative integer");
        spec.n_trajectories = v.get<long>();
    }
    if (doc.contains("master_seed")) {
        const auto& v = doc.at("master_seed");
        if (!v.is_number_unsigned() && !v.is_number_integer())
            fail("master_seed", "expected an integer");
        spec.master_seed = v.get<std::uint64_t>();
    }
    if (doc.contains("common_random_numbers")) {
        const auto& v = doc.at("common_random_numbers");
        if (!v.is_boolean()) fail("common_random_numbers", "expected a boolean");
        spec.common_random_numbers = v.get<bool>();
    }
    spec.max_failure_fraction =
        get_number(doc, "", "max_failure_fraction", spec.max_failure_fraction);

    if (doc.contains("outputs")) {
        const auto& out = doc.at("outputs");
        if (!out.is_object()) fail("outputs", "expected an object");
        expect_keys(out, "outputs", {"series", "distributions"});
        if (out.contains("series")) {
            const auto& arr = out.at("series");
            if (!arr.is_array()) fail("outputs.series", "expected an array");
            for (const auto& s : arr) {
                if (!s.is_string()) fail("outputs.series", "expected strings");
                spec.outputs.series.push_back(
                    parse_series_observable(s.get<std::string>(), "outputs.series"));
            }
        }
        if (out.contains("distributions") && !out.at("distributions").is_null()) {
            const auto& d = out.at("distributions");
            if (!d.is_object()) fail("outputs.distributions", "expected an object");
            expect_keys(d, "outputs.distributions", {"times", "targets", "grid"});
            DistributionRequest req;
            if (d.contains("times")) {
                for (const auto& t : d.at("times")) {
                    if (!t.is_number()) fail("outputs.distributions.times", "expected numbers");
                    req.times.push_back(t.get<double>());
                }
            }
            if (d.contains("targets")) {
                for (const auto& t : d.at("targets")) {
                    if (!t.is_string()) fail("outputs.distributions.targets",
                                             "expected strings");
                    req.targets.push_back(
                        parse_target(t.get<std::string>(), "outputs.distributions.targets"));
                }
            }
            if (d.contains("grid")) {
                const auto& gr = d.at("grid");
                if (!gr.is_object()) fail("outputs.distributions.grid", "expected an object");
                expect_keys(gr, "outputs.distributions.grid", {"points", "span_sigmas"});
                if (gr.contains("points")) {
                    if (!gr.at("points").is_number_integer())
                        fail("outputs.distributions.grid.points", "expected an integer");
                    req.grid.points = gr.at("points").get<int>();
                }
                req.grid.span_sigmas = get_number(gr, "outputs.distributions.grid",
                                                  "span_sigmas", req.grid.span_sigmas);
            }
            spec.outputs.distributions = req;
        }
    } else {
        spec.outputs.series = {SeriesObservable::PhotonNumber, SeriesObservable::CorrXX,
                               SeriesObservable::CorrPP,       SeriesObservable::EprSum,
                               SeriesObservable::Discord,      SeriesObservable::VarP};
    }

    spec.validate();
    return spec;
}

} // namespace

ExperimentSpec preset_spec(const std::string& name) {
    if (name == "case-a") return case_a_spec();
    if (name == "case-b") return case_b_spec();
    if (name == "superposition") return superposition_spec();
    if (name == "case-a-desk") {
        ExperimentSpec s = case_a_spec();
        s.n_trajectories = 5000;
        return s;
    }
    if (name == "case-b-desk") {
        ExperimentSpec s = case_b_spec();
        s.n_trajectories = 5000;
        return s;
    }
    if (name == "superposition-desk") {
        ExperimentSpec s = superposition_spec();
        s.n_trajectories = 20000;
        return s;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

ExperimentSpec parse_config(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return spec_from_json(doc);
}

std::string render_config(const ExperimentSpec& spec, int indent) {
    Json doc;
    doc["variant"] = variant_name(spec.variant);
    doc["boundary"] = boundary_name(spec.boundary);
    doc["scheme"] = scheme_name(spec.scheme);
    doc["dt"] = spec.dt;
    doc["params"] = {{"gamma_s", spec.params.gamma_s}, {"gamma_c", spec.params.gamma_c},
                     {"gamma_p", spec.params.gamma_p}, {"zeta", spec.params.zeta},
                     {"theta", spec.params.theta},     {"delta_s", spec.params.delta_s},
                     {"delta_p", spec.params.delta_p}, {"g", spec.params.g},
                     {"lambda_f", spec.params.lambda_f}, {"t_f", spec.params.t_f}};
    doc["sweep"] = Json::array();
    for (const auto& entry : spec.sweep) {
        Json e;
        e["label"] = entry.label;
        e["overrides"] = Json::object();
        for (const auto& [k, v] : entry.overrides) e["overrides"][k] = v;
        doc["sweep"].push_back(e);
    }
    doc["sample_times"] = spec.sample_times;
    doc["n_trajectories"] = spec.n_trajectories;
    doc["master_seed"] = spec.master_seed;
    doc["common_random_numbers"] = spec.common_random_numbers;
    doc["max_failure_fraction"] = spec.max_failure_fraction;
    Json outputs;
    outputs["series"] = Json::array();
    for (SeriesObservable o : spec.outputs.series)
        outputs["series"].push_back(series_observable_name(o));
    if (spec.outputs.distributions) {
        const auto& d = *spec.outputs.distributions;
        Json dj;
        dj["times"] = d.times;
        dj["targets"] = Json::array();
        for (QuadTarget t : d.targets) dj["targets"].push_back(target_name(t));
        dj["grid"] = {{"points", d.grid.points}, {"span_sigmas", d.grid.span_sigmas}};
        outputs["distributions"] = dj;
    } else {
        outputs["distributions"] = nullptr;
    }
    doc["outputs"] = outputs;
    return doc.dump(indent);
}

std::string apply_set_override(const std::string& config_text, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);

    Json doc;
    try {
        doc = Json::parse(config_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Json value;
    try {
        value = Json::parse(value_text);
    } catch (const nlohmann::json::parse_error&) {
        value = value_text; // fall back to a plain string
    }

    Json* node = &doc;
    std::size_t pos = 0;
    for (;;) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot - pos);
        if (key.empty()) throw ConfigError("--set path has an empty segment: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
    return doc.dump();
}

} // namespace dopo
