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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ionreadout/config.hpp"
#include "ionreadout/discriminator.hpp"
#include "ionreadout/segmenter.hpp"
#include "ionreadout/sim.hpp"

namespace ionreadout::analysis {

struct IonTint {
    int ion = 0;
    std::uint64_t n_dark = 0;
    std::uint64_t n_bright = 0;
    bool low_statistics = true;
    std::optional<discriminator::RateEstimate> dark_fit;
    std::optional<discriminator::RateEstimate> bright_fit;
    std::optional<discriminator::DiscriminationResult> result;
};

struct TintResult {
    double t_int_s = 0.0;
    std::vector<IonTint> ions;
};

struct AnalysisResult {
    int n_ions = 0;
    std::vector<std::vector<segmenter::StateInterval>> intervals;
    std::vector<std::uint64_t> photons_per_ion;
    std::vector<std::uint64_t> veto_removed;
    /// Ascending t_int.
    std::vector<TintResult> tints;
    std::size_t report_index = 0;
    std::vector<discriminator::IonHistograms> report_histograms;
    /// Over the ions that have a result at the report integration time.
    std::optional<discriminator::ChainReport> chain;
    /// Present when truth trajectories were supplied.
    std::vector<segmenter::LabelScore> label_scores;
    std::vector<std::uint64_t> report_windows;
    std::vector<std::uint64_t> report_straddles;
};

/// Removes from each ion's stream the events within window/2 of an event in a neighboring ROI.
std::vector<std::vector<ticks_t>> apply_veto(const std::vector<std::vector<ticks_t>>& times, double window_ns,
                                             std::vector<std::uint64_t>* removed = nullptr);

/// Veto (if enabled), segmentation, windowing and discrimination over per-ion ROI times.
AnalysisResult analyze_times(const config::RunConfig& cfg, std::vector<std::vector<ticks_t>> times,
                             const sim::Trajectories* truth = nullptr);

AnalysisResult analyze_photons(const config::RunConfig& cfg, const std::vector<sim::PhotonEvent>& photons,
                               const sim::Trajectories* truth = nullptr);

/// intervals.csv, histograms.csv, discrimination.csv, chain_report.csv, error_vs_tint.csv,
/// summary.txt. Byte-identical for identical inputs.
void write_analysis(const AnalysisResult& result, const std::filesystem::path& dir);

/// Truth trajectories as CSV (ion,t_start_s,t_end_s,state).
void write_trajectories(const std::filesystem::path& path, const sim::Trajectories& trajectories);
sim::Trajectories read_trajectories(const std::filesystem::path& path);

} // namespace ionreadout::analysis
