#pragma once

// JSON encodings of the user-facing documents. Each document type carries a
// versioned "schema" string; readers reject unknown keys and report the
// offending field path through InputError.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "camera.hpp"
#include "fitting.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "scene_synth.hpp"

namespace dmk::io {

inline constexpr const char* kSceneSpecSchema = "dmk.scene_spec/1";
inline constexpr const char* kFitConfigSchema = "dmk.fit_config/1";
inline constexpr const char* kHyperParamsSchema = "dmk.hyperparams/1";
inline constexpr const char* kLossTraceSchema = "dmk.loss_trace/1";
inline constexpr const char* kMotionSchema = "dmk.motion/1";
inline constexpr const char* kMetricsSchema = "dmk.metrics/1";

using nlohmann::json;

json to_json(const geom::Intrinsics& k);
geom::Intrinsics intrinsics_from_json(const json& j, const std::string& path = "");

json to_json(const geom::RigidMotion& m);
geom::RigidMotion motion_from_json(const json& j, const std::string& path = "");

json to_json(const loss::HyperParams& h);
loss::HyperParams hyper_from_json(const json& j, const std::string& path = "");

json to_json(const fit::FitConfig& c);
fit::FitConfig fit_config_from_json(const json& j);

json to_json(const synth::SceneSpec& s);
synth::SceneSpec scene_spec_from_json(const json& j);

json trace_to_json(const std::vector<fit::TraceEntry>& trace);
std::vector<fit::TraceEntry> trace_from_json(const json& j);

// Flat metrics document: depth keys followed by motion keys.
json metrics_to_json(const metrics::DepthMetrics& d, const metrics::MotionMetrics& m);
// One header line and one value row, keys in metrics_to_json order.
std::string metrics_csv(const json& flat);

json parse_json(const std::string& text, const std::string& origin);
json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

}  // namespace dmk::io
