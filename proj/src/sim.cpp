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

#include "ionreadout/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ionreadout/error.hpp"

namespace ionreadout::sim {

namespace {

constexpr int kChainRow = kSensorSize / 2;
constexpr int kChainCenterCol = kSensorSize / 2;

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double exp_dwell(std::mt19937_64& rng, double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return std::exponential_distribution<double>(rate)(rng);
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("chain config: " + msg);
}

bool in_roi(float x, float y, const Site& s, int half) {
    return std::abs(pixel_of(x) - s.col) <= half && std::abs(pixel_of(y) - s.row) <= half;
}

// Canonical ordering: time, then primaries before afterpulses, then generation sequence.
bool canonical_less(ticks_t ta, int ca, std::uint64_t sa, ticks_t tb, int cb, std::uint64_t sb) {
    if (ta != tb) return ta < tb;
    if (ca != cb) return ca < cb;
    return sa < sb;
}

} // namespace

const char* to_string(PhotonKind kind) {
    switch (kind) {
    case PhotonKind::Fluor: return "fluor";
    case PhotonKind::Crosstalk: return "crosstalk";
    case PhotonKind::Background: return "background";
    case PhotonKind::Afterpulse: return "afterpulse";
    }
    return "unknown";
}

void ChainConfig::validate() const {
    require(n_ions >= 1, "n_ions must be >= 1");
    require(ion_spacing_px >= 1, "ion_spacing_px must be >= 1");
    require(psf_sigma_px > 0.0 && std::isfinite(psf_sigma_px), "psf_sigma_px must be > 0");
    require(roi_half_px >= 0, "roi_half_px must be >= 0");
    require(rate_bright >= 0.0 && std::isfinite(rate_bright), "rate_bright must be >= 0");
    require(rate_dark_bg >= 0.0 && std::isfinite(rate_dark_bg), "rate_dark_bg must be >= 0");
    require(crosstalk_left >= 0.0 && crosstalk_left < 1.0, "crosstalk_left must be in [0,1)");
    require(crosstalk_right >= 0.0 && crosstalk_right < 1.0, "crosstalk_right must be in [0,1)");
    require(jump_rate_bd >= 0.0 && std::isfinite(jump_rate_bd), "jump_rate_bd must be >= 0");
    require(jump_rate_db >= 0.0 && std::isfinite(jump_rate_db), "jump_rate_db must be >= 0");
    require(tau_decay > 0.0, "tau_decay must be > 0");
    require(afterpulse_prob >= 0.0 && afterpulse_prob < 1.0, "afterpulse_prob must be in [0,1)");
    require(afterpulse_jitter_sigma_ns >= 0.0 && std::isfinite(afterpulse_jitter_sigma_ns),
            "afterpulse_jitter_sigma must be >= 0");
    require(std::isfinite(afterpulse_displacement_px), "afterpulse_displacement_px must be finite");
    require(duration > 0.0 && std::isfinite(duration), "duration must be > 0");
    const long long span = static_cast<long long>(n_ions - 1) * ion_spacing_px;
    const long long first = kChainCenterCol - span / 2;
    const long long last = first + span;
    require(first - roi_half_px >= 0 && last + roi_half_px < kSensorSize &&
                kChainRow - roi_half_px >= 0 && kChainRow + roi_half_px < kSensorSize,
            "chain ROIs do not fit on the sensor");
}

std::vector<Site> ion_sites(const ChainConfig& cfg) {
    cfg.validate();
    std::vector<Site> sites;
    sites.reserve(static_cast<std::size_t>(cfg.n_ions));
    const int first = kChainCenterCol - ((cfg.n_ions - 1) * cfg.ion_spacing_px) / 2;
    for (int i = 0; i < cfg.n_ions; ++i) sites.push_back({first + i * cfg.ion_spacing_px, kChainRow});
    return sites;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64(s);
    s = h ^ (a * 0xd1b54a32d192ed03ULL);
    h = splitmix64(s);
    s = h ^ (b * 0x8cb92ba72f3d8dd7ULL);
    return splitmix64(s);
}

Trajectories simulate_trajectories(const ChainConfig& cfg) {
    cfg.validate();
    Trajectories out(static_cast<std::size_t>(cfg.n_ions));
    const double exit_dark = cfg.rate_dark_exit();
    for (int ion = 0; ion < cfg.n_ions; ++ion) {
        std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(ion), 0x7472616aULL));
        IonState state = IonState::Bright;
        switch (cfg.initial_state) {
        case InitialState::Bright: state = IonState::Bright; break;
        case InitialState::Dark: state = IonState::Dark; break;
        case InitialState::Stationary: {
            const double p_bright = exit_dark / (cfg.jump_rate_bd + exit_dark);
            state = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_bright ? IonState::Bright
                                                                                    : IonState::Dark;
            break;
        }
        }
        auto& traj = out[static_cast<std::size_t>(ion)];
        double t = 0.0;
        while (t < cfg.duration) {
            const double dwell = exp_dwell(rng, state == IonState::Bright ? cfg.jump_rate_bd : exit_dark);
            double end = t + dwell;
            if (!(end < cfg.duration)) end = cfg.duration;
            if (end > t) traj.push_back({ion, t, end, state});
            t = end;
            state = state == IonState::Bright ? IonState::Dark : IonState::Bright;
        }
    }
    return out;
}

IonState state_at(const Trajectory& trajectory, double t) {
    if (trajectory.empty()) throw DomainError("state_at: empty trajectory");
    auto it = std::upper_bound(trajectory.begin(), trajectory.end(), t,
                               [](double v, const StateSegment& s) { return v < s.t_start; });
    if (it == trajectory.begin()) return trajectory.front().state;
    return std::prev(it)->state;
}

// ---------------------------------------------------------------------------

AfterpulseInjector::AfterpulseInjector(const ChainConfig& cfg)
    : cfg_(cfg), sites_(ion_sites(cfg)), rng_(derive_seed(cfg.seed, 0xa7e2ULL, 0x5eedULL)) {}

std::optional<PhotonEvent> AfterpulseInjector::process(const PhotonEvent& parent) {
    if (cfg_.afterpulse_prob <= 0.0) return std::nullopt;
    if (!(std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < cfg_.afterpulse_prob)) return std::nullopt;

    double dir = 1.0;
    switch (cfg_.afterpulse_direction) {
    case AfterpulseDirection::Left: dir = -1.0; break;
    case AfterpulseDirection::Right: dir = 1.0; break;
    case AfterpulseDirection::Neighbor: {
        std::size_t k = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < sites_.size(); ++i) {
            const double d = std::abs(static_cast<double>(parent.x) - sites_[i].col);
            if (d < best) {
                best = d;
                k = i;
            }
        }
        const bool has_left = k > 0;
        const bool has_right = k + 1 < sites_.size();
        if (has_left && has_right)
            dir = std::uniform_int_distribution<int>(0, 1)(rng_) == 0 ? -1.0 : 1.0;
        else
            dir = has_left ? -1.0 : 1.0;
        break;
    }
    }

    ticks_t offset = 0;
    if (cfg_.afterpulse_jitter_sigma_ns > 0.0) {
        std::normal_distribution<double> jitter(0.0, cfg_.afterpulse_jitter_sigma_ns);
        do {
            offset = ns_to_ticks(jitter(rng_));
        } while (offset > kMaxJitterTicks || offset < -kMaxJitterTicks);
    }

    PhotonEvent ap;
    ap.t_ticks = std::max<ticks_t>(0, parent.t_ticks + offset);
    ap.x = static_cast<float>(static_cast<double>(parent.x) + dir * cfg_.afterpulse_displacement_px);
    ap.y = parent.y;
    if (parent.truth) ap.truth = PhotonTruth{parent.truth->source_ion, PhotonKind::Afterpulse};
    return ap;
}

// ---------------------------------------------------------------------------

struct PhotonStreamGenerator::Source {
    enum class Shape { Gaussian, Uniform };

    int receiver;       // ROI the photons land in
    int emitter;        // ion whose bright state gates the source, -1 = always on
    PhotonKind kind;
    double rate;
    Shape shape;
    double cx, cy;
    std::mt19937_64 rng;
    double next_t = 0.0;
    std::size_t cursor = 0;  // segment index into the emitter trajectory

    void advance() { next_t += exp_dwell(rng, rate); }
};

struct PhotonStreamGenerator::Pending {
    PhotonEvent ev;
    int cls;  // 0 primary, 1 afterpulse
    std::uint64_t seq;
};

PhotonStreamGenerator::PhotonStreamGenerator(const ChainConfig& cfg, const Trajectories& trajectories,
                                             bool with_afterpulses)
    : cfg_(cfg), trajectories_(&trajectories) {
    const auto sites = ion_sites(cfg_);
    if (trajectories.size() != sites.size())
        throw ConfigError("photon stream: trajectory count does not match n_ions");
    const double half_shift = cfg_.roi_half_px / 2.0;
    for (int i = 0; i < cfg_.n_ions; ++i) {
        const auto& s = sites[static_cast<std::size_t>(i)];
        const auto seed = [&](std::uint64_t k) { return derive_seed(cfg_.seed, static_cast<std::uint64_t>(i) + 1, k); };
        sources_.push_back({i, i, PhotonKind::Fluor, cfg_.rate_bright, Source::Shape::Gaussian,
                            static_cast<double>(s.col), static_cast<double>(s.row), std::mt19937_64(seed(1))});
        if (i > 0)
            sources_.push_back({i, i - 1, PhotonKind::Crosstalk, cfg_.crosstalk_left * cfg_.rate_bright,
                                Source::Shape::Gaussian, s.col - half_shift, static_cast<double>(s.row),
                                std::mt19937_64(seed(2))});
        if (i + 1 < cfg_.n_ions)
            sources_.push_back({i, i + 1, PhotonKind::Crosstalk, cfg_.crosstalk_right * cfg_.rate_bright,
                                Source::Shape::Gaussian, s.col + half_shift, static_cast<double>(s.row),
                                std::mt19937_64(seed(3))});
        sources_.push_back({i, -1, PhotonKind::Background, cfg_.rate_dark_bg, Source::Shape::Uniform,
                            static_cast<double>(s.col), static_cast<double>(s.row), std::mt19937_64(seed(4))});
    }
    for (auto& src : sources_) src.advance();
    if (with_afterpulses && cfg_.afterpulse_prob > 0.0) injector_.emplace(cfg_);
}

PhotonStreamGenerator::~PhotonStreamGenerator() = default;

std::vector<PhotonEvent> PhotonStreamGenerator::next_block(double t_end) {
    if (done_) return {};
    const bool flush = !(t_end < cfg_.duration);
    const ticks_t until = flush ? std::numeric_limits<ticks_t>::max() : seconds_to_ticks(t_end);
    const auto sites = ion_sites(cfg_);
    const int half = cfg_.roi_half_px;

    std::vector<PhotonEvent> primaries;
    for (auto& src : sources_) {
        const Site& site = sites[static_cast<std::size_t>(src.receiver)];
        const Trajectory* traj =
            src.emitter >= 0 ? &(*trajectories_)[static_cast<std::size_t>(src.emitter)] : nullptr;
        while (src.next_t < cfg_.duration) {
            const ticks_t tick = seconds_to_ticks(src.next_t);
            if (tick >= until) break;
            bool on = true;
            if (traj) {
                while (src.cursor + 1 < traj->size() && (*traj)[src.cursor].t_end <= src.next_t) ++src.cursor;
                on = (*traj)[src.cursor].state == IonState::Bright;
            }
            if (on) {
                PhotonEvent ev;
                ev.t_ticks = tick;
                if (src.shape == Source::Shape::Gaussian) {
                    std::normal_distribution<double> g(0.0, cfg_.psf_sigma_px);
                    do {
                        ev.x = static_cast<float>(src.cx + g(src.rng));
                        ev.y = static_cast<float>(src.cy + g(src.rng));
                    } while (!in_roi(ev.x, ev.y, site, half));
                } else {
                    std::uniform_real_distribution<double> ux(src.cx - half - 0.5, src.cx + half + 0.5);
                    std::uniform_real_distribution<double> uy(src.cy - half - 0.5, src.cy + half + 0.5);
                    do {
                        ev.x = static_cast<float>(ux(src.rng));
                        ev.y = static_cast<float>(uy(src.rng));
                    } while (!in_roi(ev.x, ev.y, site, half));
                }
                const int owner = src.emitter >= 0 ? src.emitter : src.receiver;
                ev.truth = PhotonTruth{static_cast<std::int16_t>(owner), src.kind};
                primaries.push_back(ev);
            }
            src.advance();
        }
    }
    std::stable_sort(primaries.begin(), primaries.end(),
                     [](const PhotonEvent& a, const PhotonEvent& b) { return a.t_ticks < b.t_ticks; });

    if (!injector_) {
        if (flush) done_ = true;
        return primaries;
    }

    for (const auto& p : primaries) {
        pending_.push_back({p, 0, primary_seq_++});
        if (auto ap = injector_->process(p)) pending_.push_back({*ap, 1, afterpulse_seq_++});
    }
    std::sort(pending_.begin(), pending_.end(), [](const Pending& a, const Pending& b) {
        return canonical_less(a.ev.t_ticks, a.cls, a.seq, b.ev.t_ticks, b.cls, b.seq);
    });
    std::size_t n_ready = pending_.size();
    if (!flush) {
        // Later afterpulses can still land up to kMaxJitterTicks before `until`.
        const ticks_t safe = until - AfterpulseInjector::kMaxJitterTicks;
        n_ready = static_cast<std::size_t>(
            std::partition_point(pending_.begin(), pending_.end(),
                                 [safe](const Pending& p) { return p.ev.t_ticks < safe; }) -
            pending_.begin());
    } else {
        done_ = true;
    }
    std::vector<PhotonEvent> out;
    out.reserve(n_ready);
    for (std::size_t i = 0; i < n_ready; ++i) out.push_back(pending_[i].ev);
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n_ready));
    return out;
}

std::vector<PhotonEvent> generate_photon_stream(const ChainConfig& cfg, const Trajectories& trajectories) {
    PhotonStreamGenerator gen(cfg, trajectories, false);
    return gen.next_block(std::numeric_limits<double>::infinity());
}

std::vector<PhotonEvent> inject_afterpulses(const std::vector<PhotonEvent>& stream, const ChainConfig& cfg) {
    cfg.validate();
    if (cfg.afterpulse_prob <= 0.0) return stream;
    AfterpulseInjector inj(cfg);
    std::vector<PhotonEvent> out(stream);
    for (const auto& p : stream)
        if (auto ap = inj.process(p)) out.push_back(*ap);
    // stable: ties keep primaries first, then afterpulses in parent order
    std::stable_sort(out.begin(), out.end(),
                     [](const PhotonEvent& a, const PhotonEvent& b) { return a.t_ticks < b.t_ticks; });
    return out;
}

} // namespace ionreadout::sim
