// dmk: synthesise scenes, fit depth and motion, evaluate, check gradients and
// render. Exit codes: 0 success, 2 input or contract error, 3 numerical
// divergence, 4 assertion failure.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmk/dmk.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitAssert = 4;

enum class Level { error = 0, info = 1, debug = 2 };

Level log_level() {
    const char* env = std::getenv("DMK_LOG");
    if (!env) return Level::info;
    const std::string s = env;
    if (s == "error") return Level::error;
    if (s == "debug") return Level::debug;
    return Level::info;
}

void log(Level level, const std::string& msg) {
    static const Level threshold = log_level();
    if (level > threshold) return;
    static const char* names[] = {"error", "info", "debug"};
    std::cerr << "[dmk " << names[int(level)] << "] " << msg << "\n";
}

// Thrown to unwind a command with a given exit code.
struct Exit {
    int code;
};

int exit_code(dmk_status s) {
    switch (s) {
        case DMK_OK: return kExitOk;
        case DMK_ERR_DIVERGED:
        case DMK_ERR_NUMERIC: return kExitDiverged;
        case DMK_ERR_ASSERT: return kExitAssert;
        default: return kExitInput;
    }
}

void check(dmk_status s) {
    if (s == DMK_OK) return;
    log(Level::error, dmk_last_error());
    throw Exit{exit_code(s)};
}

[[noreturn]] void fail_input(const std::string& msg) {
    log(Level::error, msg);
    throw Exit{kExitInput};
}

// Owns a string returned by the library.
struct Text {
    char* p = nullptr;
    ~Text() { dmk_string_free(p); }
    std::string str() const { return p ? p : ""; }
    json parse() const { return json::parse(str()); }
};

using Scene = std::unique_ptr<dmk_scene, decltype(&dmk_scene_free)>;
using Fit = std::unique_ptr<dmk_fit, decltype(&dmk_fit_free)>;

Scene load_scene(const std::string& dir) {
    dmk_scene* s = nullptr;
    check(dmk_scene_load(dir.c_str(), &s));
    return {s, dmk_scene_free};
}

Fit load_fit(const std::string& dir) {
    dmk_fit* f = nullptr;
    check(dmk_fit_load(dir.c_str(), &f));
    return {f, dmk_fit_free};
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_input(path + ": cannot open for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail_input(path.string() + ": cannot open for writing");
    out << text;
}

void make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail_input(dir + ": " + ec.message());
}

std::string fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    std::string config;
    std::uint64_t seed = 0;
    json artifacts = json::array();
    json extra = json::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& dir) {
        artifacts.push_back("manifest.json");
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        json j = {{"schema", "dmk.manifest/1"},
                  {"command", command},
                  {"argv", argv},
                  {"config_hash", "fnv1a64:" + fnv1a(config)},
                  {"seed", seed},
                  {"artifacts", artifacts},
                  {"wall_clock_seconds", secs},
                  {"version", dmk_version()}};
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        write_text(dir / "manifest.json", j.dump(2) + "\n");
    }
};

void append(json& list, const Text& t) {
    for (const auto& a : t.parse()) list.push_back(a);
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
    std::string spec, demo, out;
    std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
    std::string spec;
    if (!a.spec.empty()) {
        spec = read_text(a.spec);
    } else {
        Text t;
        check(dmk_demo_spec(a.demo.empty() ? "dynamic" : a.demo.c_str(), 1, &t.p));
        spec = t.str();
    }
    dmk_scene* raw = nullptr;
    check(dmk_scene_render(spec.c_str(), a.seed, &raw));
    Scene scene(raw, dmk_scene_free);
    make_dir(a.out);

    Manifest m{"synth", argv, json::parse(spec).dump(), a.seed};
    Text files;
    check(dmk_scene_save(scene.get(), a.out.c_str(), &files.p));
    append(m.artifacts, files);
    write_text(fs::path(a.out) / "spec.json", json::parse(spec).dump(2) + "\n");
    m.artifacts.push_back("spec.json");

    double residual = 0.0;
    const dmk_status st = dmk_scene_self_check(scene.get(), &residual);
    m.extra["self_check_residual"] = residual;
    m.extra["self_check_passed"] = st == DMK_OK;
    m.write(a.out);
    log(Level::info, "self-check residual " + std::to_string(residual));
    check(st);
    return kExitOk;
}

// ---- fit -------------------------------------------------------------------

struct FitArgs {
    std::vector<std::string> scenes;
    std::string config, out;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    bool learn_intrinsics = false;
    int jobs = 1;
};

void progress(int step, double total, void*) {
    log(Level::debug, "step " + std::to_string(step) + " total " + std::to_string(total));
}

json resolve_config(const FitArgs& a) {
    json cfg;
    if (!a.config.empty()) {
        try {
            cfg = json::parse(read_text(a.config));
        } catch (const json::parse_error& e) {
            fail_input(a.config + ": invalid JSON: " + e.what());
        }
    } else {
        Text t;
        check(dmk_default_config(&t.p));
        cfg = t.parse();
    }
    if (!cfg.is_object()) fail_input("config: expected an object");
    if (a.steps) cfg["steps"] = *a.steps;
    if (a.seed) cfg["seed"] = *a.seed;
    if (a.learn_intrinsics) cfg["learn_intrinsics"] = true;
    return cfg;
}

int fit_one(const std::string& scene_dir, const json& cfg, const std::string& out,
            const std::vector<std::string>& argv) {
    Scene scene = load_scene(scene_dir);
    make_dir(out);
    Manifest m{"fit", argv, cfg.dump(), cfg.value("seed", std::uint64_t{0})};
    m.extra["scene"] = scene_dir;
    const std::string text = cfg.dump();
    log(Level::info, "fitting " + scene_dir + " -> " + out);
    dmk_fit* raw = nullptr;
    check(dmk_fit_run(scene.get(), text.c_str(), progress, nullptr, &raw));
    Fit fit(raw, dmk_fit_free);
    Text files;
    check(dmk_fit_save(fit.get(), out.c_str(), &files.p));
    append(m.artifacts, files);
    write_text(fs::path(out) / "config.json", cfg.dump(2) + "\n");
    m.artifacts.push_back("config.json");
    Text info;
    check(dmk_fit_info(fit.get(), &info.p));
    const json j = info.parse();
    m.extra["converged"] = j["converged"];
    m.extra["no_parallax"] = j["no_parallax"];
    if (j["no_parallax"].get<bool>()) log(Level::info, "no parallax between the frames, depth is unconstrained");
    m.write(out);
    return kExitOk;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const Exit& e) {
        return e.code;
    }
}

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv) {
    const json cfg = resolve_config(a);
    if (a.scenes.size() == 1) return fit_one(a.scenes[0], cfg, a.out, argv);

    // One output subdirectory per scene, fitted in up to `jobs` child processes.
    make_dir(a.out);
    std::vector<std::string> outs;
    for (const auto& s : a.scenes) outs.push_back((fs::path(a.out) / fs::path(s).filename()).string());
    int worst = kExitOk;
    auto merge = [&](int code) { worst = std::max(worst, code); };
    const int jobs = std::max(1, a.jobs);
    int running = 0;
    auto reap = [&] {
        int status = 0;
        if (::wait(&status) > 0) {
            --running;
            merge(WIFEXITED(status) ? WEXITSTATUS(status) : kExitInput);
        }
    };
    for (std::size_t i = 0; i < a.scenes.size(); ++i) {
        if (jobs == 1) {
            merge(run_guarded([&] { return fit_one(a.scenes[i], cfg, outs[i], argv); }));
            continue;
        }
        while (running >= jobs) reap();
        std::cout.flush();
        const pid_t pid = ::fork();
        if (pid < 0) fail_input("fork failed");
        if (pid == 0) std::_Exit(run_guarded([&] { return fit_one(a.scenes[i], cfg, outs[i], argv); }));
        ++running;
    }
    while (running > 0) reap();
    return worst;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string fit, scene, out;
    std::vector<std::string> asserts;
    bool oracle = false;
    bool no_scale = false;
};

struct Assertion {
    std::string key;
    char op;
    double bound;
};

Assertion parse_assertion(const std::string& s) {
    const auto pos = s.find_first_of("<>");
    if (pos == std::string::npos || pos == 0) fail_input("--assert: expected key<value or key>value, got \"" + s + "\"");
    Assertion a{s.substr(0, pos), s[pos], 0.0};
    try {
        std::size_t used = 0;
        a.bound = std::stod(s.substr(pos + 1), &used);
        if (used != s.size() - pos - 1) throw std::invalid_argument(s);
    } catch (const std::exception&) {
        fail_input("--assert: bad number in \"" + s + "\"");
    }
    return a;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
    std::vector<Assertion> checks;
    for (const auto& s : a.asserts) checks.push_back(parse_assertion(s));
    Scene scene = load_scene(a.scene);
    Fit fit(nullptr, dmk_fit_free);
    dmk_fit* raw = nullptr;
    if (a.oracle)
        check(dmk_fit_oracle(scene.get(), &raw));
    else if (a.fit.empty())
        fail_input("--fit is required unless --oracle is given");
    else
        check(dmk_fit_load(a.fit.c_str(), &raw));
    fit.reset(raw);

    Text metrics;
    check(dmk_eval(fit.get(), scene.get(), a.no_scale ? 0 : 1, &metrics.p));
    const json j = metrics.parse();
    std::cout << j.dump(2) << "\n";

    if (!a.out.empty()) {
        make_dir(a.out);
        Manifest m{"eval", argv, "", 0};
        m.extra["fit"] = a.oracle ? "oracle" : a.fit;
        m.extra["scene"] = a.scene;
        write_text(fs::path(a.out) / "metrics.json", j.dump(2) + "\n");
        std::string header, row;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (it.key() == "schema") continue;
            header += (header.empty() ? "" : ",") + it.key();
            row += (row.empty() ? "" : ",") + it.value().dump();
        }
        write_text(fs::path(a.out) / "metrics.csv", header + "\n" + row + "\n");
        m.artifacts = {"metrics.json", "metrics.csv"};
        m.write(a.out);
    }

    int code = kExitOk;
    for (const auto& c : checks) {
        if (!j.contains(c.key) || !j[c.key].is_number()) fail_input("--assert: unknown metric \"" + c.key + "\"");
        const double v = j[c.key].get<double>();
        const bool ok = c.op == '<' ? v < c.bound : v > c.bound;
        if (!ok) {
            log(Level::error, "assertion failed: " + c.key + " = " + std::to_string(v) + ", required " + c.op +
                                  std::to_string(c.bound));
            code = kExitAssert;
        }
    }
    return code;
}

// ---- gradcheck -------------------------------------------------------------

struct GradArgs {
    std::string loss, size = "8x8";
    std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradArgs& a) {
    int rows = 0, cols = 0;
    char sep = 0, extra = 0;
    if (std::sscanf(a.size.c_str(), "%d%c%d%c", &rows, &sep, &cols, &extra) != 3 || (sep != 'x' && sep != 'X'))
        fail_input("--size: expected HxW, got \"" + a.size + "\"");
    Text report;
    int passed = 0;
    check(dmk_gradcheck(a.loss.c_str(), rows, cols, a.seed, &report.p, &passed));
    const json j = report.parse();
    std::cout << j.dump(2) << "\n";
    log(Level::info, a.loss + ": worst relative error " + std::to_string(j["max_rel_error"].get<double>()));
    return passed ? kExitOk : kExitAssert;
}

// ---- render ----------------------------------------------------------------

struct RenderArgs {
    std::string fit, out;
};

int cmd_render(const RenderArgs& a, const std::vector<std::string>& argv) {
    Fit fit = load_fit(a.fit);
    make_dir(a.out);
    Manifest m{"render", argv, "", 0};
    m.extra["fit"] = a.fit;
    Text files;
    check(dmk_render(fit.get(), a.out.c_str(), &files.p));
    append(m.artifacts, files);
    m.write(a.out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Depth, ego-motion and object-motion fitting on frame pairs"};
    app.set_version_flag("--version", std::string(dmk_version()));
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "render a synthetic frame pair with ground truth");
    auto* spec_opt = synth->add_option("--spec", sa.spec, "scene spec JSON")->check(CLI::ExistingFile);
    synth->add_option("--demo", sa.demo, "built-in scene instead of --spec")
        ->check(CLI::IsMember({"static", "ego", "dynamic"}))
        ->excludes(spec_opt);
    synth->add_option("--seed", sa.seed, "render seed");
    synth->add_option("--out", sa.out, "output directory")->required();

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit depth, motion and optionally intrinsics to a scene directory");
    fit->add_option("--scene", fa.scenes, "scene directory (repeatable)")->required();
    fit->add_option("--config", fa.config, "fit config JSON")->check(CLI::ExistingFile);
    fit->add_option("--out", fa.out, "output directory")->required();
    fit->add_option("--steps", fa.steps, "override the step count")->check(CLI::PositiveNumber);
    fit->add_option("--seed", fa.seed, "seed recorded with the run");
    fit->add_flag("--learn-intrinsics", fa.learn_intrinsics, "optimise fx, fy, cx, cy");
    fit->add_option("--jobs", fa.jobs, "parallel processes when fitting several scenes")->check(CLI::PositiveNumber);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score a fit against scene ground truth");
    eval->add_option("--fit", ea.fit, "fit directory");
    eval->add_option("--scene", ea.scene, "scene directory")->required();
    eval->add_option("--out", ea.out, "write metrics.json, metrics.csv and a manifest here");
    eval->add_option("--assert", ea.asserts, "threshold such as abs_rel<0.15 (repeatable)");
    eval->add_flag("--oracle", ea.oracle, "evaluate the ground truth itself");
    eval->add_flag("--no-scale", ea.no_scale, "skip median scaling of the predicted depth");

    GradArgs ga;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of one loss");
    grad->add_option("--loss", ga.loss, "group_smooth, sparsity, depth_smooth, cycle, photometric, pair_total")
        ->required();
    grad->add_option("--size", ga.size, "resolution HxW");
    grad->add_option("--seed", ga.seed, "input seed");

    RenderArgs ra;
    auto* render = app.add_subcommand("render", "colour-map disparity and motion magnitude of a fit");
    render->add_option("--fit", ra.fit, "fit directory")->required();
    render->add_option("--out", ra.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    const std::vector<std::string> args(argv, argv + argc);
    try {
        if (*synth) return cmd_synth(sa, args);
        if (*fit) return cmd_fit(fa, args);
        if (*eval) return cmd_eval(ea, args);
        if (*grad) return cmd_gradcheck(ga);
        if (*render) return cmd_render(ra, args);
    } catch (const Exit& e) {
        return e.code;
    } catch (const std::exception& e) {
        log(Level::error, e.what());
        return kExitInput;
    }
    return kExitInput;
}
