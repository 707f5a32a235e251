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
#include <utility>
#include <vector>

#include "ionreadout/sim.hpp"
#include "ionreadout/units.hpp"

namespace ionreadout::pixel {

struct PixelHit {
    ticks_t toa_ticks = 0;
    std::uint16_t col = 0;
    std::uint16_t row = 0;
    std::uint16_t tot = 0;

    bool operator==(const PixelHit&) const = default;
};

/// Canonical hit order: (toa, col, row, tot).
bool hit_less(const PixelHit& a, const PixelHit& b);

/// Correction in ticks as a function of ToT: either a monotone table (piecewise linear) or
/// a / (tot + b). Outside its domain the nearest entry is used and the lookup is flagged.
class TimewalkCalibration {
public:
    static TimewalkCalibration identity();
    static TimewalkCalibration hyperbolic(double a, double b, int tot_min = 1, int tot_max = 65535);
    /// Entries (tot, correction ticks) with strictly increasing tot and non-increasing correction.
    static TimewalkCalibration table(std::vector<std::pair<int, double>> entries);

    double correction(int tot, bool* extrapolated = nullptr) const;
    ticks_t correction_ticks(int tot, bool* extrapolated = nullptr) const;

    int tot_min() const { return tot_min_; }
    int tot_max() const { return tot_max_; }

private:
    enum class Kind { Hyperbolic, Table };
    Kind kind_ = Kind::Hyperbolic;
    double a_ = 0.0;
    double b_ = 1.0;
    int tot_min_ = 0;
    int tot_max_ = 65535;
    std::vector<std::pair<int, double>> table_;
};

struct RasterConfig {
    /// Mean number of pixels per photon footprint.
    double mean_cluster_size_px = 4.0;
    /// Total ToT deposited by one flash, uniform in [min, max] (25 ns units).
    int tot_amplitude_min = 1000;
    int tot_amplitude_max = 2000;
    /// Pixels receiving less than this are not read out.
    int tot_threshold = 100;
    double toa_jitter_sigma_ns = 1.0;
    double timewalk_a = 16000.0;
    double timewalk_b = 4.0;
    double dead_time_ns = 475.0;
    std::uint64_t seed = 1;

    void validate() const;
    TimewalkCalibration calibration() const { return TimewalkCalibration::hyperbolic(timewalk_a, timewalk_b); }
};

struct RasterDiagnostics {
    std::uint64_t photons = 0;
    std::uint64_t out_of_bounds = 0;
    /// Pixel contributions lost to a busy pixel.
    std::uint64_t dead_time_drops = 0;
    /// In-bounds photons that produced no hit at all.
    std::uint64_t photons_without_hits = 0;
};

struct RasterResult {
    std::vector<PixelHit> hits;  // canonical order
    RasterDiagnostics diagnostics;
    /// Index of the producing photon for every hit (only when requested).
    std::vector<std::uint32_t> hit_photon;
};

RasterResult rasterize_photons(const std::vector<sim::PhotonEvent>& photons, const RasterConfig& cfg,
                               bool record_provenance = false);

struct Cluster {
    std::vector<PixelHit> hits;  // canonical order, first = seed
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    /// ToA of the max-ToT pixel.
    ticks_t toa_ticks = 0;
    ticks_t corrected_toa_ticks = 0;
    std::uint16_t max_tot = 0;
};

inline constexpr ticks_t kDefaultClusterWindowTicks = 192;  // 300 ns

/// Groups of indices into `hits`, one per cluster, in output order.
std::vector<std::vector<std::uint32_t>> cluster_hit_indices(const std::vector<PixelHit>& hits,
                                                            ticks_t window_ticks = kDefaultClusterWindowTicks);

/// Clusters with centroids; corrected_toa_ticks is left equal to toa_ticks.
std::vector<Cluster> cluster_hits(const std::vector<PixelHit>& hits, ticks_t window_ticks = kDefaultClusterWindowTicks);

/// Same result as cluster_hits, computed over time chunks split at quiet gaps, in parallel.
std::vector<Cluster> cluster_hits_chunked(const std::vector<PixelHit>& hits, std::size_t n_chunks,
                                          unsigned n_threads, ticks_t window_ticks = kDefaultClusterWindowTicks);

/// Fills centroid, toa_ticks and max_tot from the hits.
void centroid_cluster(Cluster& cluster);

struct TimewalkDiagnostics {
    std::uint64_t clamped = 0;
    std::uint64_t extrapolated = 0;
};

ticks_t timewalk_correct(const Cluster& cluster, const TimewalkCalibration& cal, TimewalkDiagnostics* diag = nullptr);

/// Centroided, corrected photons in time order (no truth).
std::vector<sim::PhotonEvent> clusters_to_photons(std::vector<Cluster>& clusters, const TimewalkCalibration& cal,
                                                  TimewalkDiagnostics* diag = nullptr);

} // namespace ionreadout::pixel
