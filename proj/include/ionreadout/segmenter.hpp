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
#include <vector>

#include "ionreadout/sim.hpp"
#include "ionreadout/units.hpp"

namespace ionreadout::segmenter {

struct SegmenterConfig {
    /// Delays below t_low are bright evidence, above t_high dark evidence (s).
    double t_low = 0.5e-3;
    double t_high = 5.0e-3;
    int confirm_photons = 3;
    int roi_half = 4;

    void validate() const;
};

enum class Label : std::uint8_t { Bright = 0, Dark = 1, Excluded = 2 };

const char* to_string(Label label);

struct StateInterval {
    int ion_id = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    Label label = Label::Excluded;

    double length() const { return t_end - t_start; }
};

inline constexpr std::uint8_t kLeftNeighborBright = 1;
inline constexpr std::uint8_t kRightNeighborBright = 2;

struct CountWindow {
    int ion_id = 0;
    double t0 = 0.0;
    double t_int = 0.0;
    std::int64_t n = 0;
    Label label = Label::Excluded;
    /// Bit set when that neighbor is Bright over the whole window.
    std::uint8_t neighbors_bright = 0;
};

/// Per-ion photon times (ticks, ascending). A photon goes to the ROI that contains it; where
/// ROIs overlap, to the nearest center (lowest index on ties).
std::vector<std::vector<ticks_t>> assign_to_roi(const std::vector<sim::PhotonEvent>& photons,
                                                const std::vector<sim::Site>& sites, int roi_half);

/// Index of the ROI a position belongs to, or -1.
int roi_of(double x, double y, const std::vector<sim::Site>& sites, int roi_half);

/// Per-delay evidence: delay k is times[k+1] - times[k].
enum class Evidence : std::uint8_t { Bright, Dark, Gap };

std::vector<Evidence> classify_delays(const std::vector<ticks_t>& times, const SegmenterConfig& cfg);

std::vector<StateInterval> segment_states(int ion_id, const std::vector<ticks_t>& times, const SegmenterConfig& cfg);

/// Truth segments as labeled intervals.
std::vector<StateInterval> intervals_from_trajectory(const sim::Trajectory& trajectory);

/// Label covering the whole of [t0, t1], Excluded if none does.
Label label_over(const std::vector<StateInterval>& intervals, double t0, double t1);

/// Tiles every labeled interval that holds at least two windows of t_int; the count is taken over
/// (t0, t0 + t_int]. `neighbor_labels` (per ion) decides the neighbor mask; pass the segmented
/// intervals or truth.
std::vector<CountWindow> slice_windows(const std::vector<std::vector<StateInterval>>& intervals,
                                       const std::vector<std::vector<ticks_t>>& times, double t_int,
                                       const std::vector<std::vector<StateInterval>>& neighbor_labels,
                                       bool require_neighbors_bright);

struct LabelScore {
    double labeled_time = 0.0;
    double correct_time = 0.0;
    double accuracy() const { return labeled_time > 0.0 ? correct_time / labeled_time : 1.0; }
};

/// Time-weighted agreement of non-Excluded labels with the truth trajectory.
LabelScore score_labels(const std::vector<StateInterval>& intervals, const sim::Trajectory& truth);

/// True if a truth transition of the window's ion falls strictly inside the window.
bool window_straddles(const CountWindow& w, const sim::Trajectory& truth);

} // namespace ionreadout::segmenter
