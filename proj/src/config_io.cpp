#include "config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dmk::io {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw InputError("expected an object", path.empty() ? "<root>" : path);
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> known) {
    const std::set<std::string> allowed(known.begin(), known.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw InputError("unknown key", join(path, it.key()));
}

void check_schema(const json& j, const std::string& path, const char* schema, bool required) {
    if (!j.contains("schema")) {
        if (required) throw InputError(std::string("missing, expected \"") + schema + "\"", join(path, "schema"));
        return;
    }
    if (!j["schema"].is_string() || j["schema"].get<std::string>() != schema)
        throw InputError(std::string("unsupported schema, expected \"") + schema + "\"", join(path, "schema"));
}

double number(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw InputError("missing", join(path, key));
    const json& v = j[key];
    if (!v.is_number()) throw InputError("expected a number", join(path, key));
    return v.get<double>();
}

void maybe_number(const json& j, const std::string& key, const std::string& path, double& out) {
    if (j.contains(key)) out = number(j, key, path);
}

int integer(const json& j, const std::string& key, const std::string& path) {
    const json& v = j[key];
    if (!v.is_number_integer()) throw InputError("expected an integer", join(path, key));
    return v.get<int>();
}

void maybe_integer(const json& j, const std::string& key, const std::string& path, int& out) {
    if (j.contains(key)) out = integer(j, key, path);
}

std::uint64_t unsigned_integer(const json& j, const std::string& key, const std::string& path) {
    const json& v = j[key];
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw InputError("expected a non-negative integer", join(path, key));
    return v.get<std::uint64_t>();
}

Vec3 vec3(const json& j, const std::string& key, const std::string& path) {
    const std::string p = join(path, key);
    if (!j.contains(key)) throw InputError("missing", p);
    const json& v = j[key];
    if (!v.is_array() || v.size() != 3) throw InputError("expected an array of 3 numbers", p);
    Vec3 out{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!v[i].is_number()) throw InputError("expected a number", p + "[" + std::to_string(i) + "]");
        out[i] = v[i].get<double>();
    }
    return out;
}

}  // namespace

json to_json(const geom::Intrinsics& k) { return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}; }

geom::Intrinsics intrinsics_from_json(const json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, path, {"fx", "fy", "cx", "cy"});
    return {number(j, "fx", path), number(j, "fy", path), number(j, "cx", path), number(j, "cy", path)};
}

json to_json(const geom::RigidMotion& m) { return {{"euler", m.euler}, {"translation", m.translation}}; }

geom::RigidMotion motion_from_json(const json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, path, {"euler", "translation"});
    return {vec3(j, "euler", path), vec3(j, "translation", path)};
}

json to_json(const loss::HyperParams& h) {
    return {{"schema", kHyperParamsSchema}, {"alpha_mot", h.alpha_mot}, {"beta_mot", h.beta_mot},
            {"alpha_dep", h.alpha_dep},     {"alpha_cyc", h.alpha_cyc}, {"beta_cyc", h.beta_cyc},
            {"alpha_rgb", h.alpha_rgb},     {"beta_rgb", h.beta_rgb},   {"eps_norm", h.eps_norm},
            {"eps_occ", h.eps_occ}};
}

loss::HyperParams hyper_from_json(const json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j, path,
                   {"schema", "alpha_mot", "beta_mot", "alpha_dep", "alpha_cyc", "beta_cyc", "alpha_rgb", "beta_rgb",
                    "eps_norm", "eps_occ"});
    check_schema(j, path, kHyperParamsSchema, false);
    loss::HyperParams h;
    maybe_number(j, "alpha_mot", path, h.alpha_mot);
    maybe_number(j, "beta_mot", path, h.beta_mot);
    maybe_number(j, "alpha_dep", path, h.alpha_dep);
    maybe_number(j, "alpha_cyc", path, h.alpha_cyc);
    maybe_number(j, "beta_cyc", path, h.beta_cyc);
    maybe_number(j, "alpha_rgb", path, h.alpha_rgb);
    maybe_number(j, "beta_rgb", path, h.beta_rgb);
    maybe_number(j, "eps_norm", path, h.eps_norm);
    maybe_number(j, "eps_occ", path, h.eps_occ);
    try {
        h.validate();
    } catch (const InputError& e) {
        throw InputError(e.message(), join(path, e.path()));
    }
    return h;
}

json to_json(const fit::FitConfig& c) {
    return {{"schema", kFitConfigSchema},
            {"steps", c.steps},
            {"lr", {{"depth", c.lr.depth}, {"residual", c.lr.residual}, {"ego", c.lr.ego}, {"intrinsics", c.lr.intrinsics},
                    {"principal_point", c.lr.principal_point}}},
            {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
            {"final_lr_fraction", c.final_lr_fraction},
            {"residual_warmup", c.residual_warmup},
            {"intrinsics_warmup", c.intrinsics_warmup},
            {"seed", c.seed},
            {"log_every", c.log_every},
            {"init_depth", c.init_depth},
            {"learn_intrinsics", c.learn_intrinsics},
            {"hyper", to_json(c.hyper)}};
}

fit::FitConfig fit_config_from_json(const json& j) {
    const std::string path;
    require_object(j, path);
    reject_unknown(j, path,
                   {"schema", "steps", "lr", "adam", "final_lr_fraction", "residual_warmup", "intrinsics_warmup", "seed", "log_every",
                    "init_depth", "learn_intrinsics", "hyper"});
    check_schema(j, path, kFitConfigSchema, true);
    fit::FitConfig c;
    maybe_integer(j, "steps", path, c.steps);
    if (j.contains("lr")) {
        const json& lr = j["lr"];
        require_object(lr, "lr");
        reject_unknown(lr, "lr", {"depth", "residual", "ego", "intrinsics", "principal_point"});
        maybe_number(lr, "depth", "lr", c.lr.depth);
        maybe_number(lr, "residual", "lr", c.lr.residual);
        maybe_number(lr, "ego", "lr", c.lr.ego);
        maybe_number(lr, "intrinsics", "lr", c.lr.intrinsics);
        maybe_number(lr, "principal_point", "lr", c.lr.principal_point);
    }
    if (j.contains("adam")) {
        const json& a = j["adam"];
        require_object(a, "adam");
        reject_unknown(a, "adam", {"beta1", "beta2", "eps"});
        maybe_number(a, "beta1", "adam", c.adam.beta1);
        maybe_number(a, "beta2", "adam", c.adam.beta2);
        maybe_number(a, "eps", "adam", c.adam.eps);
    }
    maybe_number(j, "final_lr_fraction", path, c.final_lr_fraction);
    maybe_integer(j, "residual_warmup", path, c.residual_warmup);
    maybe_integer(j, "intrinsics_warmup", path, c.intrinsics_warmup);
    if (j.contains("seed")) c.seed = unsigned_integer(j, "seed", path);
    maybe_integer(j, "log_every", path, c.log_every);
    maybe_number(j, "init_depth", path, c.init_depth);
    if (j.contains("learn_intrinsics")) {
        if (!j["learn_intrinsics"].is_boolean()) throw InputError("expected a boolean", "learn_intrinsics");
        c.learn_intrinsics = j["learn_intrinsics"].get<bool>();
    }
    if (j.contains("hyper")) c.hyper = hyper_from_json(j["hyper"], "hyper");
    c.validate();
    return c;
}

json to_json(const synth::SceneSpec& s) {
    json objects = json::array();
    for (const auto& o : s.objects)
        objects.push_back({{"rect", {o.u0, o.v0, o.u1, o.v1}}, {"depth", o.depth}, {"translation", o.translation}});
    return {{"schema", kSceneSpecSchema},
            {"width", s.width},
            {"height", s.height},
            {"intrinsics", to_json(s.k)},
            {"background", {{"depth_near", s.depth_near}, {"depth_far", s.depth_far}, {"texture_seed", s.texture_seed}}},
            {"objects", objects},
            {"ego_motion", to_json(s.ego)},
            {"noise_sigma", s.noise_sigma}};
}

synth::SceneSpec scene_spec_from_json(const json& j) {
    const std::string path;
    require_object(j, path);
    reject_unknown(j, path,
                   {"schema", "width", "height", "intrinsics", "background", "objects", "ego_motion", "noise_sigma"});
    check_schema(j, path, kSceneSpecSchema, true);
    synth::SceneSpec s;
    maybe_integer(j, "width", path, s.width);
    maybe_integer(j, "height", path, s.height);
    if (j.contains("intrinsics")) s.k = intrinsics_from_json(j["intrinsics"], "intrinsics");
    if (j.contains("background")) {
        const json& b = j["background"];
        require_object(b, "background");
        reject_unknown(b, "background", {"depth_near", "depth_far", "texture_seed"});
        maybe_number(b, "depth_near", "background", s.depth_near);
        maybe_number(b, "depth_far", "background", s.depth_far);
        if (b.contains("texture_seed")) s.texture_seed = unsigned_integer(b, "texture_seed", "background");
    }
    if (j.contains("objects")) {
        const json& objs = j["objects"];
        if (!objs.is_array()) throw InputError("expected an array", "objects");
        for (std::size_t i = 0; i < objs.size(); ++i) {
            const std::string p = "objects[" + std::to_string(i) + "]";
            const json& o = objs[i];
            require_object(o, p);
            reject_unknown(o, p, {"rect", "depth", "translation"});
            synth::ObjectSpec spec;
            if (!o.contains("rect") || !o["rect"].is_array() || o["rect"].size() != 4)
                throw InputError("expected [u0, v0, u1, v1]", p + ".rect");
            int rect[4];
            for (std::size_t k = 0; k < 4; ++k) {
                if (!o["rect"][k].is_number_integer()) throw InputError("expected an integer", p + ".rect[" + std::to_string(k) + "]");
                rect[k] = o["rect"][k].get<int>();
            }
            spec.u0 = rect[0];
            spec.v0 = rect[1];
            spec.u1 = rect[2];
            spec.v1 = rect[3];
            spec.depth = number(o, "depth", p);
            spec.translation = vec3(o, "translation", p);
            s.objects.push_back(spec);
        }
    }
    if (j.contains("ego_motion")) s.ego = motion_from_json(j["ego_motion"], "ego_motion");
    maybe_number(j, "noise_sigma", path, s.noise_sigma);
    s.validate();
    return s;
}

json trace_to_json(const std::vector<fit::TraceEntry>& trace) {
    json entries = json::array();
    for (const auto& e : trace) {
        json row = {{"step", e.step}};
        for (const auto& [name, v] : e.values) row[name] = v;
        entries.push_back(std::move(row));
    }
    return {{"schema", kLossTraceSchema}, {"entries", entries}};
}

std::vector<fit::TraceEntry> trace_from_json(const json& j) {
    require_object(j, "");
    check_schema(j, "", kLossTraceSchema, true);
    if (!j.contains("entries") || !j["entries"].is_array()) throw InputError("expected an array", "entries");
    std::vector<fit::TraceEntry> out;
    for (const auto& row : j["entries"]) {
        fit::TraceEntry e;
        if (!row.is_object()) throw InputError("expected an object", "entries[]");
        for (auto it = row.begin(); it != row.end(); ++it) {
            if (it.key() == "step")
                e.step = it.value().get<int>();
            else
                e.values.emplace_back(it.key(), it.value().get<double>());
        }
        out.push_back(std::move(e));
    }
    return out;
}

json metrics_to_json(const metrics::DepthMetrics& d, const metrics::MotionMetrics& m) {
    json j = json::object();
    j["schema"] = kMetricsSchema;
    j["abs_rel"] = d.abs_rel;
    j["sq_rel"] = d.sq_rel;
    j["rmse"] = d.rmse;
    j["rmse_log"] = d.rmse_log;
    j["delta1"] = d.delta1;
    j["delta2"] = d.delta2;
    j["delta3"] = d.delta3;
    j["depth_count"] = d.count;
    j["epe_object_mean"] = m.epe_object_mean;
    j["epe_object_median"] = m.epe_object_median;
    j["epe_background_mean"] = m.epe_background_mean;
    j["epe_background_median"] = m.epe_background_median;
    j["background_pred_mean_norm"] = m.background_pred_mean_norm;
    j["object_gt_mean_norm"] = m.object_gt_mean_norm;
    j["object_direction_deg"] = m.object_direction_deg;
    j["ego_angle_deg"] = m.ego_angle_deg;
    j["ego_magnitude_ratio"] = m.ego_magnitude_ratio;
    j["object_count"] = m.object_count;
    j["background_count"] = m.background_count;
    return j;
}

std::string metrics_csv(const json& flat) {
    std::ostringstream head, row;
    bool first = true;
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        if (it.key() == "schema") continue;
        head << (first ? "" : ",") << it.key();
        row << (first ? "" : ",") << it.value().dump();
        first = false;
    }
    return head.str() + "\n" + row.str() + "\n";
}

json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("invalid JSON: ") + e.what(), origin);
    }
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open for reading", path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str(), path.string());
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open for writing", path.string());
    out << j.dump(2) << "\n";
}

}  // namespace dmk::io
