// Copyright 2026 The ionreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ionreadout/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ionreadout/error.hpp"

namespace ionreadout::config {

using nlohmann::json;

namespace {

template <typename E>
struct EnumNames {
    std::vector<std::pair<E, const char*>> names;

    const char* name(E v) const {
        for (const auto& [e, n] : names)
            if (e == v) return n;
        return "?";
    }
    E parse(const std::string& s, const std::string& key) const {
        for (const auto& [e, n] : names)
            if (s == n) return e;
        throw ConfigError(key + ": unknown value '" + s + "'");
    }
};

const EnumNames<sim::AfterpulseDirection> kDirections{{{sim::AfterpulseDirection::Neighbor, "neighbor"},
                                                       {sim::AfterpulseDirection::Left, "left"},
                                                       {sim::AfterpulseDirection::Right, "right"}}};
const EnumNames<sim::InitialState> kInitial{{{sim::InitialState::Stationary, "stationary"},
                                             {sim::InitialState::Bright, "bright"},
                                             {sim::InitialState::Dark, "dark"}}};
const EnumNames<discriminator::ThresholdRounding> kRounding{{{discriminator::ThresholdRounding::Floor, "floor"},
                                                             {discriminator::ThresholdRounding::HalfUp, "half_up"}}};

// One table of (key, reader, writer) per section keeps parse and dump in sync.
struct Field {
    std::function<void(const json&, const std::string&)> read;
    std::function<json()> write;
};
using Section = std::vector<std::pair<const char*, Field>>;

template <typename T>
Field num(T& ref) {
    return {[&ref](const json& j, const std::string& key) {
                if (!j.is_number()) throw ConfigError(key + ": expected a number");
                if constexpr (std::is_integral_v<T>) {
                    if (!j.is_number_integer()) throw ConfigError(key + ": expected an integer");
                    if constexpr (std::is_unsigned_v<T>) {
                        if (j.is_number_unsigned()) {
                            ref = j.get<T>();
                            return;
                        }
                        if (j.get<long long>() < 0) throw ConfigError(key + ": must be >= 0");
                    }
                }
                ref = j.get<T>();
            },
            [&ref] { return json(ref); }};
}

Field boolean(bool& ref) {
    return {[&ref](const json& j, const std::string& key) {
                if (!j.is_boolean()) throw ConfigError(key + ": expected true or false");
                ref = j.get<bool>();
            },
            [&ref] { return json(ref); }};
}

// Stored in one unit, exposed in another (ms keys for seconds fields).
Field scaled(double& ref, double factor) {
    return {[&ref, factor](const json& j, const std::string& key) {
                if (!j.is_number()) throw ConfigError(key + ": expected a number");
                ref = j.get<double>() / factor;
            },
            [&ref, factor] { return json(ref * factor); }};
}

template <typename E>
Field enumeration(E& ref, const EnumNames<E>& names) {
    return {[&ref, &names](const json& j, const std::string& key) {
                if (!j.is_string()) throw ConfigError(key + ": expected a string");
                ref = names.parse(j.get<std::string>(), key);
            },
            [&ref, &names] { return json(names.name(ref)); }};
}

Field number_list(std::vector<double>& ref) {
    return {[&ref](const json& j, const std::string& key) {
                if (!j.is_array() || j.empty()) throw ConfigError(key + ": expected a non-empty list of numbers");
                std::vector<double> v;
                for (const auto& e : j) {
                    if (!e.is_number()) throw ConfigError(key + ": expected a non-empty list of numbers");
                    v.push_back(e.get<double>());
                }
                ref = std::move(v);
            },
            [&ref] { return json(ref); }};
}

std::vector<std::pair<const char*, Section>> schema(RunConfig& c) {
    auto& ch = c.chain;
    auto& cam = c.camera;
    auto& seg = c.segmenter;
    auto& an = c.analysis;
    return {
        {"chain",
         {{"n_ions", num(ch.n_ions)},
          {"ion_spacing_px", num(ch.ion_spacing_px)},
          {"psf_sigma_px", num(ch.psf_sigma_px)},
          {"roi_half_px", num(ch.roi_half_px)},
          {"rate_bright_per_s", num(ch.rate_bright)},
          {"rate_dark_bg_per_s", num(ch.rate_dark_bg)},
          {"crosstalk_left", num(ch.crosstalk_left)},
          {"crosstalk_right", num(ch.crosstalk_right)},
          {"jump_rate_bd_per_s", num(ch.jump_rate_bd)},
          {"jump_rate_db_per_s", num(ch.jump_rate_db)},
          {"tau_decay_s", num(ch.tau_decay)},
          {"afterpulse_prob", num(ch.afterpulse_prob)},
          {"afterpulse_jitter_sigma_ns", num(ch.afterpulse_jitter_sigma_ns)},
          {"afterpulse_displacement_px", num(ch.afterpulse_displacement_px)},
          {"afterpulse_direction", enumeration(ch.afterpulse_direction, kDirections)},
          {"initial_state", enumeration(ch.initial_state, kInitial)},
          {"duration_s", num(ch.duration)},
          {"seed", num(ch.seed)}}},
        {"camera",
         {{"mean_cluster_size_px", num(cam.mean_cluster_size_px)},
          {"tot_amplitude_min", num(cam.tot_amplitude_min)},
          {"tot_amplitude_max", num(cam.tot_amplitude_max)},
          {"tot_threshold", num(cam.tot_threshold)},
          {"toa_jitter_sigma_ns", num(cam.toa_jitter_sigma_ns)},
          {"timewalk_a", num(cam.timewalk_a)},
          {"timewalk_b", num(cam.timewalk_b)},
          {"dead_time_ns", num(cam.dead_time_ns)},
          {"cluster_window_ns", num(c.cluster_window_ns)}}},
        {"segmenter",
         {{"t_low_ms", scaled(seg.t_low, 1e3)},
          {"t_high_ms", scaled(seg.t_high, 1e3)},
          {"confirm_photons", num(seg.confirm_photons)},
          {"roi_half_px", num(seg.roi_half)}}},
        {"analysis",
         {{"t_int_ms", number_list(an.t_int_ms)},
          {"report_t_int_ms", num(an.report_t_int_ms)},
          {"min_windows", num(an.min_windows)},
          {"veto", boolean(an.veto)},
          {"veto_window_ns", num(an.veto_window_ns)},
          {"require_neighbors_bright", boolean(an.require_neighbors_bright)},
          {"threshold_rounding", enumeration(an.threshold_rounding, kRounding)}}},
    };
}

} // namespace

void RunConfig::validate() const {
    chain.validate();
    camera.validate();
    segmenter.validate();
    if (!(cluster_window_ns >= 0.0)) throw ConfigError("camera.cluster_window_ns must be >= 0");
    if (analysis.t_int_ms.empty()) throw ConfigError("analysis.t_int_ms must not be empty");
    for (double t : analysis.t_int_ms)
        if (!(t > 0.0)) throw ConfigError("analysis.t_int_ms entries must be > 0");
    if (!(analysis.report_t_int_ms > 0.0)) throw ConfigError("analysis.report_t_int_ms must be > 0");
    if (!(analysis.veto_window_ns >= 0.0)) throw ConfigError("analysis.veto_window_ns must be >= 0");
    if (!(analysis.report_t_int_ms * 1e-3 < chain.tau_decay))
        throw ConfigError("analysis.report_t_int_ms must be shorter than chain.tau_decay_s");
}

void RunConfig::set_seed(std::uint64_t seed) {
    chain.seed = seed;
    camera.seed = seed;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source + ": invalid JSON: " + e.what(), e.byte);
    }
    if (!doc.is_object()) throw ConfigError(source + ": top level must be an object");
    RunConfig cfg;
    auto sch = schema(cfg);
    for (const auto& [name, value] : doc.items()) {
        auto sec = std::find_if(sch.begin(), sch.end(), [&](const auto& s) { return name == s.first; });
        if (sec == sch.end()) throw ConfigError(source + ": unknown section '" + name + "'");
        if (!value.is_object()) throw ConfigError(source + ": section '" + name + "' must be an object");
        for (const auto& [key, v] : value.items()) {
            const std::string path = name + "." + key;
            auto f = std::find_if(sec->second.begin(), sec->second.end(), [&](const auto& e) { return key == e.first; });
            if (f == sec->second.end()) throw ConfigError(source + ": unknown key '" + path + "'");
            try {
                f->second.read(v, path);
            } catch (const json::exception& e) {
                throw ConfigError(source + ": " + path + ": " + e.what());
            }
        }
    }
    cfg.camera.seed = cfg.chain.seed;
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string dump_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    json doc = json::object();
    for (const auto& [name, fields] : schema(copy)) {
        json sec = json::object();
        for (const auto& [key, f] : fields) sec[key] = f.write();
        doc[name] = sec;
    }
    return doc.dump(2) + "\n";
}

} // namespace ionreadout::config
