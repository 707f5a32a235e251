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
#include <optional>
#include <random>
#include <vector>

#include "ionreadout/units.hpp"

namespace ionreadout::sim {

enum class IonState : std::uint8_t { Dark = 0, Bright = 1 };

enum class InitialState { Stationary, Bright, Dark };

/// Where an afterpulse lands relative to its parent photon.
enum class AfterpulseDirection { Neighbor, Left, Right };

enum class PhotonKind : std::uint8_t { Fluor = 1, Crosstalk = 2, Background = 3, Afterpulse = 4 };

const char* to_string(PhotonKind kind);

struct ChainConfig {
    int n_ions = 4;
    int ion_spacing_px = 10;
    double psf_sigma_px = 1.0;
    /// Half width of the square ROI the simulator fills (9x9 for 4).
    int roi_half_px = 4;
    /// Detected photons/s from a bright ion inside its own ROI.
    double rate_bright = 2000.0;
    /// Background counts/s inside each ROI.
    double rate_dark_bg = 1.0;
    /// Fraction of the left (right) neighbor's fluorescence landing in this ion's ROI.
    double crosstalk_left = 0.055;
    double crosstalk_right = 0.055;
    /// Stimulated jump rates in 1/s.
    double jump_rate_bd = 1.0;
    double jump_rate_db = 1.0;
    /// Spontaneous dark-state lifetime in s.
    double tau_decay = 31.2;
    double afterpulse_prob = 0.0015;
    double afterpulse_jitter_sigma_ns = 4.2;
    double afterpulse_displacement_px = 10.0;
    AfterpulseDirection afterpulse_direction = AfterpulseDirection::Neighbor;
    InitialState initial_state = InitialState::Stationary;
    /// Simulated span in s.
    double duration = 100.0;
    std::uint64_t seed = 1;

    /// Throws ConfigError on the first violated invariant.
    void validate() const;

    double rate_dark_exit() const { return jump_rate_db + 1.0 / tau_decay; }
};

struct Site {
    int col;
    int row;
};

/// Ion image centers: a horizontal chain centered on the sensor.
std::vector<Site> ion_sites(const ChainConfig& cfg);

struct PhotonTruth {
    std::int16_t source_ion;
    PhotonKind kind;

    bool operator==(const PhotonTruth&) const = default;
};

struct PhotonEvent {
    ticks_t t_ticks = 0;
    float x = 0.0F;
    float y = 0.0F;
    std::optional<PhotonTruth> truth;

    bool operator==(const PhotonEvent&) const = default;
};

struct StateSegment {
    int ion_id;
    double t_start;
    double t_end;
    IonState state;
};

using Trajectory = std::vector<StateSegment>;
using Trajectories = std::vector<Trajectory>;

/// Alternating bright/dark segments covering [0, duration] for every ion.
Trajectories simulate_trajectories(const ChainConfig& cfg);

/// State of a trajectory at time t (last segment for t >= duration).
IonState state_at(const Trajectory& trajectory, double t);

/// SplitMix64-derived subseed, so per-ion and per-source streams are independent of each other.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

/// Draws afterpulses for a time-ordered stream of parents. One instance per stream; the
/// random sequence depends only on the parent order.
class AfterpulseInjector {
public:
    explicit AfterpulseInjector(const ChainConfig& cfg);

    std::optional<PhotonEvent> process(const PhotonEvent& parent);

    /// Afterpulse time offsets are truncated to this many ticks (1 ms).
    static constexpr ticks_t kMaxJitterTicks = 640'000;

private:
    const ChainConfig cfg_;
    std::vector<Site> sites_;
    std::mt19937_64 rng_;
};

/// Incremental photon stream generation. Successive next_block() calls return a stream that is
/// identical to a single call covering the whole run, so long runs can be processed in bounded
/// memory.
class PhotonStreamGenerator {
public:
    PhotonStreamGenerator(const ChainConfig& cfg, const Trajectories& trajectories, bool with_afterpulses);
    ~PhotonStreamGenerator();
    PhotonStreamGenerator(const PhotonStreamGenerator&) = delete;
    PhotonStreamGenerator& operator=(const PhotonStreamGenerator&) = delete;

    /// Events that are final once everything before t_end (s) has been generated, time-ordered.
    /// Passing t_end >= duration flushes the remainder.
    std::vector<PhotonEvent> next_block(double t_end);

    bool done() const { return done_; }

private:
    struct Source;
    struct Pending;

    ChainConfig cfg_;
    const Trajectories* trajectories_;
    std::vector<Source> sources_;
    std::optional<AfterpulseInjector> injector_;
    std::vector<Pending> pending_;
    std::uint64_t primary_seq_ = 0;
    std::uint64_t afterpulse_seq_ = 0;
    bool done_ = false;
};

/// Primary photons (fluorescence, crosstalk, background) for the whole run.
std::vector<PhotonEvent> generate_photon_stream(const ChainConfig& cfg, const Trajectories& trajectories);

/// Adds one afterpulse per parent with probability afterpulse_prob; output re-sorted.
std::vector<PhotonEvent> inject_afterpulses(const std::vector<PhotonEvent>& stream, const ChainConfig& cfg);

} // namespace ionreadout::sim
