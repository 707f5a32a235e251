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

#include "ionreadout/segmenter.hpp"
#include "ionreadout/units.hpp"

namespace ionreadout::crosstalk {

struct CoincidenceHistogram {
    double bin_width_ns = kTickNs;
    double range_ns = 50.0;
    /// bins[k + half_bins] counts pairs with round(dt / bin_width) == k.
    std::int64_t half_bins = 0;
    std::vector<std::uint64_t> bins;
    std::uint64_t n_pairs_total = 0;
    std::uint64_t n_photons_a = 0;
    std::uint64_t n_photons_b = 0;

    double bin_center_ns(std::int64_t k) const { return static_cast<double>(k) * bin_width_ns; }
    std::uint64_t at(std::int64_t k) const { return bins[static_cast<std::size_t>(k + half_bins)]; }
};

/// Histogram of t_b - t_a over all pairs with |dt| <= range_ns (two-pointer sweep). range_ns must
/// be an integer multiple of bin_width_ns.
CoincidenceHistogram coincidence_histogram(const std::vector<ticks_t>& times_a, const std::vector<ticks_t>& times_b,
                                           double range_ns = 50.0, double bin_width_ns = kTickNs);

enum class FitStatus { Ok, NoPeak, Failed };

const char* to_string(FitStatus s);

struct PeakFit {
    FitStatus status = FitStatus::Failed;
    double amplitude = 0.0;  // counts at the peak above baseline
    double sigma_ns = 0.0;
    double center_ns = 0.0;
    double baseline = 0.0;  // counts per bin
    double amplitude_err = 0.0;
    double sigma_err = 0.0;
    double center_err = 0.0;
    double baseline_err = 0.0;
    double chi2_reduced = 0.0;
    int iterations = 0;
};

/// Gaussian plus constant, weighted least squares (Levenberg-Marquardt). Needs at least 5 populated
/// bins (StatisticsError otherwise). A peak smaller than 3 baseline standard deviations is NoPeak.
PeakFit fit_peak(const CoincidenceHistogram& hist);

struct AfterpulseEstimate {
    double probability = 0.0;
    /// 3-sigma upper bound on the probability.
    double upper_bound = 0.0;
    double peak_counts = 0.0;
    double baseline_counts = 0.0;
};

/// (counts within +-5 sigma of the peak - baseline under it) / n_photons_source.
AfterpulseEstimate afterpulse_probability(const CoincidenceHistogram& hist, const PeakFit& fit,
                                          std::uint64_t n_photons_source);

struct VetoResult {
    std::vector<ticks_t> kept;
    std::uint64_t removed = 0;
};

inline constexpr double kDefaultVetoWindowNs = 50.0;

/// Mask of dark events farther than window/2 from every bright event.
std::vector<bool> veto_keep_mask(const std::vector<ticks_t>& dark, const std::vector<ticks_t>& bright,
                                 double window_ns = kDefaultVetoWindowNs);

VetoResult veto_filter(const std::vector<ticks_t>& dark, const std::vector<ticks_t>& bright,
                       double window_ns = kDefaultVetoWindowNs);

struct CrosstalkMatrix {
    int n = 0;
    /// value[i * n + j]: ROI j rate over ROI i rate while only ion i is bright (background included).
    std::vector<double> value;
    std::vector<bool> defined;
    /// Seconds with only ion i bright.
    std::vector<double> exposure_s;
    /// Seconds with every ion dark.
    double dark_exposure_s = 0.0;
    /// Per-ROI rate (counts/s) with every ion dark; 0 without such periods.
    std::vector<double> background_per_s;

    double at(int i, int j) const { return value[static_cast<std::size_t>(i * n + j)]; }
    bool is_defined(int i, int j) const { return defined[static_cast<std::size_t>(i * n + j)]; }
};

CrosstalkMatrix optical_crosstalk_matrix(const std::vector<std::vector<ticks_t>>& times,
                                         const std::vector<std::vector<segmenter::StateInterval>>& labels);

} // namespace ionreadout::crosstalk
