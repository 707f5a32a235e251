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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ionreadout/discriminator.hpp"
#include "ionreadout/pixel.hpp"
#include "ionreadout/segmenter.hpp"
#include "ionreadout/sim.hpp"

namespace ionreadout::config {

struct AnalysisConfig {
    /// Integration times for the error-vs-t_int table.
    std::vector<double> t_int_ms{2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0};
    /// Integration time of the per-ion report and histograms.
    double report_t_int_ms = 30.0;
    std::uint64_t min_windows = discriminator::kDefaultMinWindows;
    bool veto = true;
    double veto_window_ns = 50.0;
    bool require_neighbors_bright = true;
    discriminator::ThresholdRounding threshold_rounding = discriminator::ThresholdRounding::Floor;
};

struct RunConfig {
    sim::ChainConfig chain;
    pixel::RasterConfig camera;
    double cluster_window_ns = 300.0;
    segmenter::SegmenterConfig segmenter;
    AnalysisConfig analysis;

    /// Throws ConfigError.
    void validate() const;
    /// Seed for every random stage.
    void set_seed(std::uint64_t seed);
    ticks_t cluster_window_ticks() const { return ns_to_ticks(cluster_window_ns); }
};

/// JSON with sections chain, camera, segmenter, analysis. Missing keys keep their defaults;
/// unknown keys and wrong types are ConfigErrors.
RunConfig parse_config(const std::string& text, const std::string& source = "<string>");
RunConfig load_config(const std::filesystem::path& path);

/// Full JSON document with every key.
std::string dump_config(const RunConfig& cfg);

} // namespace ionreadout::config
