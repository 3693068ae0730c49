#include "dmk/dmk.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>

#include "config_io.hpp"
#include "fitting.hpp"
#include "grad_suite.hpp"
#include "metrics.hpp"
#include "raster_io.hpp"
#include "render.hpp"
#include "scene_synth.hpp"

namespace fs = std::filesystem;
using dmk::io::json;

struct dmk_scene {
    dmk::synth::SceneSample sample;
    bool has_k = false;
    bool has_truth = false;
};

struct dmk_fit {
    dmk::fit::FitResult result;
};

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kSceneSchema = "dmk.scene/1";
constexpr const char* kFitSchema = "dmk.fit/1";

thread_local std::string last_error;

template <class F>
dmk_status guarded(F&& body) {
    try {
        last_error.clear();
        body();
        return DMK_OK;
    } catch (const dmk::DivergenceError& e) {
        last_error = "diverged at step " + std::to_string(e.step()) + " (" + e.component() + "): " + e.what();
        return DMK_ERR_DIVERGED;
    } catch (const dmk::InputError& e) {
        last_error = e.what();
        return DMK_ERR_INPUT;
    } catch (const dmk::DimensionError& e) {
        last_error = e.what();
        return DMK_ERR_DIMENSION;
    } catch (const dmk::NumericError& e) {
        last_error = e.what();
        return DMK_ERR_NUMERIC;
    } catch (const dmk::ContractError& e) {
        last_error = e.what();
        return DMK_ERR_CONTRACT;
    } catch (const json::exception& e) {
        last_error = std::string("JSON: ") + e.what();
        return DMK_ERR_INPUT;
    } catch (const std::exception& e) {
        last_error = e.what();
        return DMK_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown failure";
        return DMK_ERR_INTERNAL;
    }
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void need(const void* p, const char* what) {
    if (!p) throw dmk::InputError("must not be NULL", what);
}

void copy_channels(std::initializer_list<const dmk::Field*> channels, double* out, std::size_t len) {
    std::size_t total = 0;
    for (const auto* f : channels) total += f->size();
    if (len != total)
        throw dmk::DimensionError("buffer holds " + std::to_string(len) + " values, map has " + std::to_string(total));
    for (const auto* f : channels) out = std::copy(f->data.begin(), f->data.end(), out);
}

void copy3(const dmk::Field3& f, double* out, std::size_t len) { copy_channels({&f[0], &f[1], &f[2]}, out, len); }

fs::path directory(const char* dir) {
    need(dir, "dir");
    const fs::path p(dir);
    if (!fs::is_directory(p)) throw dmk::InputError("not a directory", p.string());
    return p;
}

fs::path existing(const fs::path& p) {
    if (!fs::exists(p)) throw dmk::InputError("missing file", p.string());
    return p;
}

dmk::RgbImage load_frame(const fs::path& dir, const std::string& stem) {
    if (fs::exists(dir / (stem + ".pfm"))) return dmk::io::read_pfm3(dir / (stem + ".pfm"));
    return dmk::io::read_ppm(existing(dir / (stem + ".ppm")));
}

dmk::Field mask_from_pgm(const fs::path& p) {
    dmk::Field f = dmk::io::read_pgm(p);
    for (double& x : f.data) x = x >= 0.5 ? 1.0 : 0.0;
    return f;
}

}  // namespace

extern "C" {

const char* dmk_version(void) { return kVersion; }
const char* dmk_last_error(void) { return last_error.c_str(); }
void dmk_string_free(char* s) { std::free(s); }

dmk_status dmk_demo_spec(const char* name, uint64_t texture_seed, char** spec_json) {
    return guarded([&] {
        need(name, "name");
        need(spec_json, "spec_json");
        const std::string n = name;
        dmk::synth::SceneSpec s;
        if (n == "static")
            s = dmk::synth::static_scene(texture_seed);
        else if (n == "ego")
            s = dmk::synth::ego_motion_scene(texture_seed);
        else if (n == "dynamic")
            s = dmk::synth::dynamic_scene(texture_seed);
        else
            throw dmk::InputError("unknown demo scene \"" + n + "\"", "name");
        *spec_json = dup(dmk::io::to_json(s).dump(2));
    });
}

dmk_status dmk_scene_render(const char* spec_json, uint64_t seed, dmk_scene** out) {
    return guarded([&] {
        need(spec_json, "spec_json");
        need(out, "out");
        const dmk::synth::SceneSpec spec = dmk::io::scene_spec_from_json(dmk::io::parse_json(spec_json, "spec"));
        auto* s = new dmk_scene;
        s->sample = dmk::synth::render_pair(spec, seed);
        s->has_k = true;
        s->has_truth = true;
        *out = s;
    });
}

dmk_status dmk_scene_save(const dmk_scene* scene, const char* dir, char** artifacts_json) {
    return guarded([&] {
        need(scene, "scene");
        const fs::path d = directory(dir);
        const auto& s = scene->sample;
        json files = json::array();
        auto note = [&](const char* name) {
            files.push_back(name);
            return d / name;
        };
        dmk::io::write_ppm(note("frame_a.ppm"), s.frame_a);
        dmk::io::write_ppm(note("frame_b.ppm"), s.frame_b);
        dmk::io::write_pfm(note("frame_a.pfm"), s.frame_a);
        dmk::io::write_pfm(note("frame_b.pfm"), s.frame_b);
        if (scene->has_truth) {
            dmk::io::write_pfm(note("depth_a.pfm"), s.depth_a);
            dmk::io::write_pfm(note("depth_b.pfm"), s.depth_b);
            dmk::io::write_pfm(note("t_obj_ab.pfm"), s.t_obj_ab);
            dmk::io::write_pfm(note("t_obj_ba.pfm"), s.t_obj_ba);
            dmk::io::write_pgm(note("object_mask_a.pgm"), s.object_mask_a);
            dmk::io::write_pgm(note("object_mask_b.pgm"), s.object_mask_b);
            dmk::io::write_pgm(note("valid_a.pgm"), s.valid_a);
            dmk::io::write_pgm(note("valid_b.pgm"), s.valid_b);
        }
        json meta = {{"schema", kSceneSchema}, {"width", s.width}, {"height", s.height}};
        if (scene->has_k) meta["intrinsics"] = dmk::io::to_json(s.k);
        if (scene->has_truth) {
            meta["ego_ab"] = dmk::io::to_json(s.ego_ab);
            meta["ego_ba"] = dmk::io::to_json(s.ego_ba);
        }
        dmk::io::write_json(note("scene.json"), meta);
        if (artifacts_json) *artifacts_json = dup(files.dump());
    });
}

dmk_status dmk_scene_load(const char* dir, dmk_scene** out) {
    return guarded([&] {
        need(out, "out");
        const fs::path d = directory(dir);
        auto scene = std::make_unique<dmk_scene>();
        auto& s = scene->sample;
        s.frame_a = load_frame(d, "frame_a");
        s.frame_b = load_frame(d, "frame_b");
        s.height = s.frame_a[0].rows;
        s.width = s.frame_a[0].cols;
        if (!s.frame_b[0].same_shape(s.frame_a[0]))
            throw dmk::DimensionError("frame_a and frame_b differ in resolution");

        json meta = json::object();
        if (fs::exists(d / "scene.json")) {
            meta = dmk::io::read_json(d / "scene.json");
            if (!meta.is_object() || meta.value("schema", "") != kSceneSchema)
                throw dmk::InputError(std::string("unsupported schema, expected \"") + kSceneSchema + "\"",
                                      (d / "scene.json").string() + ": schema");
        }
        if (meta.contains("intrinsics")) {
            s.k = dmk::io::intrinsics_from_json(meta["intrinsics"], "intrinsics");
            scene->has_k = true;
        } else if (fs::exists(d / "intrinsics.json")) {
            s.k = dmk::io::intrinsics_from_json(dmk::io::read_json(d / "intrinsics.json"));
            scene->has_k = true;
        }
        if (scene->has_k) s.k.validate(s.width, s.height);

        const char* truth[] = {"depth_a.pfm", "depth_b.pfm", "t_obj_ab.pfm", "t_obj_ba.pfm", "object_mask_a.pgm",
                               "object_mask_b.pgm", "valid_a.pgm", "valid_b.pgm"};
        bool all = meta.contains("ego_ab") && meta.contains("ego_ba");
        for (const char* f : truth) all = all && fs::exists(d / f);
        if (all) {
            s.depth_a = dmk::io::read_pfm(d / "depth_a.pfm");
            s.depth_b = dmk::io::read_pfm(d / "depth_b.pfm");
            s.t_obj_ab = dmk::io::read_pfm3(d / "t_obj_ab.pfm");
            s.t_obj_ba = dmk::io::read_pfm3(d / "t_obj_ba.pfm");
            s.object_mask_a = mask_from_pgm(d / "object_mask_a.pgm");
            s.object_mask_b = mask_from_pgm(d / "object_mask_b.pgm");
            s.valid_a = mask_from_pgm(d / "valid_a.pgm");
            s.valid_b = mask_from_pgm(d / "valid_b.pgm");
            s.ego_ab = dmk::io::motion_from_json(meta["ego_ab"], "ego_ab");
            s.ego_ba = dmk::io::motion_from_json(meta["ego_ba"], "ego_ba");
            for (const dmk::Field* f : {&s.depth_a, &s.depth_b, &s.t_obj_ab[0], &s.t_obj_ba[0], &s.object_mask_a,
                                        &s.object_mask_b, &s.valid_a, &s.valid_b})
                if (!f->same_shape(s.frame_a[0])) throw dmk::DimensionError("ground truth resolution differs from frames");
            scene->has_truth = true;
        }
        *out = scene.release();
    });
}

dmk_status dmk_scene_info(const dmk_scene* scene, char** info_json) {
    return guarded([&] {
        need(scene, "scene");
        need(info_json, "info_json");
        json j = {{"width", scene->sample.width},
                  {"height", scene->sample.height},
                  {"has_intrinsics", scene->has_k},
                  {"has_ground_truth", scene->has_truth}};
        if (scene->has_k) j["intrinsics"] = dmk::io::to_json(scene->sample.k);
        *info_json = dup(j.dump());
    });
}

dmk_status dmk_scene_self_check(const dmk_scene* scene, double* residual) {
    return guarded([&] {
        need(scene, "scene");
        need(residual, "residual");
        if (!scene->has_truth || !scene->has_k) throw dmk::InputError("scene has no ground truth", "scene");
        *residual = dmk::synth::photometric_residual(scene->sample);
        if (*residual > dmk::synth::kSelfCheckLimit)
            throw dmk::ContractError("self-check residual " + std::to_string(*residual) + " exceeds " +
                                     std::to_string(dmk::synth::kSelfCheckLimit));
    });
}

dmk_status dmk_scene_copy(const dmk_scene* scene, const char* name, double* out, size_t len) {
    return guarded([&] {
        need(scene, "scene");
        need(name, "name");
        need(out, "out");
        const auto& s = scene->sample;
        const std::string n = name;
        if (n == "frame_a") return copy3(s.frame_a, out, len);
        if (n == "frame_b") return copy3(s.frame_b, out, len);
        if (!scene->has_truth) throw dmk::InputError("scene has no ground truth", "name");
        if (n == "t_obj_ab") return copy3(s.t_obj_ab, out, len);
        if (n == "t_obj_ba") return copy3(s.t_obj_ba, out, len);
        const std::pair<const char*, const dmk::Field*> single[] = {
            {"depth_a", &s.depth_a},        {"depth_b", &s.depth_b}, {"object_mask_a", &s.object_mask_a},
            {"object_mask_b", &s.object_mask_b}, {"valid_a", &s.valid_a}, {"valid_b", &s.valid_b}};
        for (const auto& [key, f] : single)
            if (n == key) return copy_channels({f}, out, len);
        throw dmk::InputError("unknown map \"" + n + "\"", "name");
    });
}

void dmk_scene_free(dmk_scene* scene) { delete scene; }

dmk_status dmk_default_config(char** config_json) {
    return guarded([&] {
        need(config_json, "config_json");
        *config_json = dup(dmk::io::to_json(dmk::fit::FitConfig{}).dump(2));
    });
}

dmk_status dmk_fit_run(const dmk_scene* scene, const char* config_json, dmk_progress_fn progress, void* user,
                       dmk_fit** out) {
    return guarded([&] {
        need(scene, "scene");
        need(out, "out");
        const dmk::fit::FitConfig cfg =
            config_json ? dmk::io::fit_config_from_json(dmk::io::parse_json(config_json, "config")) : dmk::fit::FitConfig{};
        if (!cfg.learn_intrinsics && !scene->has_k)
            throw dmk::InputError("scene has no intrinsics; supply intrinsics.json or learn them", "intrinsics");
        std::optional<dmk::geom::Intrinsics> k;
        if (scene->has_k && !cfg.learn_intrinsics) k = scene->sample.k;
        dmk::fit::ProgressFn hook;
        if (progress) hook = [&](const dmk::fit::TraceEntry& e) { progress(e.step, e.total(), user); };
        auto f = std::make_unique<dmk_fit>();
        f->result = dmk::fit::fit_pair(scene->sample.frame_a, scene->sample.frame_b, k, cfg, hook);
        *out = f.release();
    });
}

dmk_status dmk_fit_oracle(const dmk_scene* scene, dmk_fit** out) {
    return guarded([&] {
        need(scene, "scene");
        need(out, "out");
        if (!scene->has_truth) throw dmk::InputError("scene has no ground truth", "scene");
        const auto& s = scene->sample;
        auto f = std::make_unique<dmk_fit>();
        auto& r = f->result;
        r.depth_a = s.depth_a;
        r.depth_b = s.depth_b;
        r.t_obj_ab = s.t_obj_ab;
        r.t_obj_ba = s.t_obj_ba;
        r.ego_ab = s.ego_ab;
        r.ego_ba = s.ego_ba;
        r.k = s.k;
        *out = f.release();
    });
}

namespace {

json fit_info(const dmk::fit::FitResult& r) {
    return {{"schema", kFitSchema},
            {"width", r.depth_a.cols},
            {"height", r.depth_a.rows},
            {"ego_ab", dmk::io::to_json(r.ego_ab)},
            {"ego_ba", dmk::io::to_json(r.ego_ba)},
            {"intrinsics", dmk::io::to_json(r.k)},
            {"intrinsics_learned", r.intrinsics_learned},
            {"steps", r.steps},
            {"converged", r.converged},
            {"rigid_flow_px", r.rigid_flow_px},
            {"no_parallax", r.no_parallax}};
}

}  // namespace

dmk_status dmk_fit_save(const dmk_fit* fit, const char* dir, char** artifacts_json) {
    return guarded([&] {
        need(fit, "fit");
        const fs::path d = directory(dir);
        const auto& r = fit->result;
        dmk::io::write_pfm(d / "depth_a.pfm", r.depth_a);
        dmk::io::write_pfm(d / "depth_b.pfm", r.depth_b);
        dmk::io::write_pfm(d / "t_obj_ab.pfm", r.t_obj_ab);
        dmk::io::write_pfm(d / "t_obj_ba.pfm", r.t_obj_ba);
        dmk::io::write_json(d / "fit.json", fit_info(r));
        dmk::io::write_json(d / "trace.json", dmk::io::trace_to_json(r.trace));
        if (artifacts_json)
            *artifacts_json = dup(json::array({"depth_a.pfm", "depth_b.pfm", "t_obj_ab.pfm", "t_obj_ba.pfm", "fit.json",
                                               "trace.json"})
                                      .dump());
    });
}

dmk_status dmk_fit_load(const char* dir, dmk_fit** out) {
    return guarded([&] {
        need(out, "out");
        const fs::path d = directory(dir);
        auto f = std::make_unique<dmk_fit>();
        auto& r = f->result;
        r.depth_a = dmk::io::read_pfm(existing(d / "depth_a.pfm"));
        r.depth_b = dmk::io::read_pfm(existing(d / "depth_b.pfm"));
        r.t_obj_ab = dmk::io::read_pfm3(existing(d / "t_obj_ab.pfm"));
        r.t_obj_ba = dmk::io::read_pfm3(existing(d / "t_obj_ba.pfm"));
        for (const dmk::Field* m : {&r.depth_b, &r.t_obj_ab[0], &r.t_obj_ba[0]})
            if (!m->same_shape(r.depth_a)) throw dmk::DimensionError("fit maps differ in resolution");
        const json info = dmk::io::read_json(existing(d / "fit.json"));
        if (!info.is_object() || info.value("schema", "") != kFitSchema)
            throw dmk::InputError(std::string("unsupported schema, expected \"") + kFitSchema + "\"",
                                  (d / "fit.json").string() + ": schema");
        r.ego_ab = dmk::io::motion_from_json(info.at("ego_ab"), "ego_ab");
        r.ego_ba = dmk::io::motion_from_json(info.at("ego_ba"), "ego_ba");
        r.k = dmk::io::intrinsics_from_json(info.at("intrinsics"), "intrinsics");
        r.intrinsics_learned = info.value("intrinsics_learned", false);
        r.steps = info.value("steps", 0);
        r.converged = info.value("converged", false);
        r.rigid_flow_px = info.value("rigid_flow_px", 0.0);
        r.no_parallax = info.value("no_parallax", false);
        if (fs::exists(d / "trace.json")) r.trace = dmk::io::trace_from_json(dmk::io::read_json(d / "trace.json"));
        *out = f.release();
    });
}

dmk_status dmk_fit_info(const dmk_fit* fit, char** info_json) {
    return guarded([&] {
        need(fit, "fit");
        need(info_json, "info_json");
        *info_json = dup(fit_info(fit->result).dump(2));
    });
}

dmk_status dmk_fit_trace(const dmk_fit* fit, char** trace_json) {
    return guarded([&] {
        need(fit, "fit");
        need(trace_json, "trace_json");
        *trace_json = dup(dmk::io::trace_to_json(fit->result.trace).dump());
    });
}

dmk_status dmk_fit_copy(const dmk_fit* fit, const char* name, double* out, size_t len) {
    return guarded([&] {
        need(fit, "fit");
        need(name, "name");
        need(out, "out");
        const auto& r = fit->result;
        const std::string n = name;
        if (n == "depth_a") return copy_channels({&r.depth_a}, out, len);
        if (n == "depth_b") return copy_channels({&r.depth_b}, out, len);
        if (n == "t_obj_ab") return copy3(r.t_obj_ab, out, len);
        if (n == "t_obj_ba") return copy3(r.t_obj_ba, out, len);
        throw dmk::InputError("unknown map \"" + n + "\"", "name");
    });
}

void dmk_fit_free(dmk_fit* fit) { delete fit; }

dmk_status dmk_eval(const dmk_fit* fit, const dmk_scene* scene, int median_scale, char** metrics_json) {
    return guarded([&] {
        need(fit, "fit");
        need(scene, "scene");
        need(metrics_json, "metrics_json");
        if (!scene->has_truth) throw dmk::InputError("scene has no ground truth", "scene");
        const auto& s = scene->sample;
        const auto& r = fit->result;
        if (!r.depth_a.same_shape(s.depth_a)) throw dmk::DimensionError("fit and scene resolutions differ");
        dmk::fit::Alignment al{r.depth_a, 1.0};
        if (median_scale) al = dmk::fit::scale_align(r.depth_a, s.depth_a, s.valid_a);
        const dmk::metrics::DepthMetrics dm = dmk::metrics::depth_metrics(al.pred, s.depth_a, s.valid_a);
        // Translations share the depth scale ambiguity.
        dmk::Field3 t = r.t_obj_ab;
        for (auto& c : t)
            for (double& x : c.data) x *= al.scale;
        dmk::Vec3 ego = r.ego_ab.translation;
        for (double& x : ego) x *= al.scale;
        const dmk::metrics::MotionMetrics mm =
            dmk::metrics::motion_metrics(t, s.t_obj_ab, s.object_mask_a, ego, s.ego_ab.translation, s.valid_a);
        json j = dmk::io::metrics_to_json(dm, mm);
        j["depth_scale"] = al.scale;
        *metrics_json = dup(j.dump(2));
    });
}

dmk_status dmk_gradcheck(const char* loss, int rows, int cols, uint64_t seed, char** report_json, int* passed) {
    return guarded([&] {
        need(loss, "loss");
        const dmk::ad::GradReport rep = dmk::loss::grad_suite_check(loss, rows, cols, seed);
        const double tol = dmk::loss::grad_suite_tolerance(loss);
        const bool ok = rep.max_rel_error < tol;
        if (passed) *passed = ok ? 1 : 0;
        if (report_json) {
            json leaves = json::array();
            for (const auto& l : rep.leaves)
                leaves.push_back({{"name", l.name},
                                  {"max_rel_error", l.max_rel_error},
                                  {"worst_index", l.worst_index},
                                  {"analytic", l.analytic},
                                  {"numeric", l.numeric},
                                  {"checked", l.checked},
                                  {"skipped", l.skipped}});
            const json j = {{"loss", loss},           {"rows", rows},
                            {"cols", cols},           {"seed", seed},
                            {"tolerance", tol},       {"max_rel_error", rep.max_rel_error},
                            {"worst_leaf", rep.worst_leaf}, {"worst_index", rep.worst_index},
                            {"passed", ok},           {"leaves", leaves}};
            *report_json = dup(j.dump(2));
        }
    });
}

dmk_status dmk_render(const dmk_fit* fit, const char* dir, char** artifacts_json) {
    return guarded([&] {
        need(fit, "fit");
        const fs::path d = directory(dir);
        dmk::io::write_ppm(d / "disparity.ppm", dmk::render::disparity_image(fit->result.depth_a));
        dmk::io::write_ppm(d / "motion.ppm", dmk::render::motion_image(fit->result.t_obj_ab));
        if (artifacts_json) *artifacts_json = dup(json::array({"disparity.ppm", "motion.ppm"}).dump());
    });
}

}  // extern "C"
