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

#include "ionreadout/pixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "ionreadout/error.hpp"

namespace ionreadout::pixel {

bool hit_less(const PixelHit& a, const PixelHit& b) {
    if (a.toa_ticks != b.toa_ticks) return a.toa_ticks < b.toa_ticks;
    if (a.col != b.col) return a.col < b.col;
    if (a.row != b.row) return a.row < b.row;
    return a.tot < b.tot;
}

// --- calibration -----------------------------------------------------------

TimewalkCalibration TimewalkCalibration::identity() {
    TimewalkCalibration c;
    c.kind_ = Kind::Table;
    c.table_ = {{0, 0.0}};
    c.tot_min_ = 0;
    c.tot_max_ = 65535;
    return c;
}

TimewalkCalibration TimewalkCalibration::hyperbolic(double a, double b, int tot_min, int tot_max) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("timewalk: a must be >= 0");
    if (tot_min < 0 || tot_max < tot_min) throw ConfigError("timewalk: bad ToT domain");
    if (!(tot_min + b > 0.0)) throw ConfigError("timewalk: tot + b must be positive on the domain");
    TimewalkCalibration c;
    c.kind_ = Kind::Hyperbolic;
    c.a_ = a;
    c.b_ = b;
    c.tot_min_ = tot_min;
    c.tot_max_ = tot_max;
    return c;
}

TimewalkCalibration TimewalkCalibration::table(std::vector<std::pair<int, double>> entries) {
    if (entries.empty()) throw ConfigError("timewalk: empty table");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!(entries[i].second >= 0.0)) throw ConfigError("timewalk: corrections must be >= 0");
        if (i > 0 && entries[i].first <= entries[i - 1].first)
            throw ConfigError("timewalk: table ToT must be strictly increasing");
        if (i > 0 && entries[i].second > entries[i - 1].second)
            throw ConfigError("timewalk: corrections must be non-increasing in ToT");
    }
    TimewalkCalibration c;
    c.kind_ = Kind::Table;
    c.tot_min_ = entries.front().first;
    c.tot_max_ = entries.back().first;
    c.table_ = std::move(entries);
    return c;
}

double TimewalkCalibration::correction(int tot, bool* extrapolated) const {
    const bool outside = tot < tot_min_ || tot > tot_max_;
    if (extrapolated) *extrapolated = outside;
    const int t = std::clamp(tot, tot_min_, tot_max_);
    if (kind_ == Kind::Hyperbolic) return a_ / (t + b_);
    if (table_.size() == 1) return table_.front().second;
    auto it = std::lower_bound(table_.begin(), table_.end(), t,
                               [](const std::pair<int, double>& e, int v) { return e.first < v; });
    if (it->first == t) return it->second;
    const auto& hi = *it;
    const auto& lo = *std::prev(it);
    const double f = static_cast<double>(t - lo.first) / (hi.first - lo.first);
    return lo.second + f * (hi.second - lo.second);
}

ticks_t TimewalkCalibration::correction_ticks(int tot, bool* extrapolated) const {
    return std::llround(correction(tot, extrapolated));
}

// --- rasterization ---------------------------------------------------------

void RasterConfig::validate() const {
    if (!(mean_cluster_size_px >= 1.0) || !std::isfinite(mean_cluster_size_px))
        throw ConfigError("camera: mean_cluster_size_px must be >= 1");
    if (tot_amplitude_min < 1 || tot_amplitude_max < tot_amplitude_min || tot_amplitude_max > 65535)
        throw ConfigError("camera: need 1 <= tot_amplitude_min <= tot_amplitude_max <= 65535");
    if (tot_threshold < 1) throw ConfigError("camera: tot_threshold must be >= 1");
    if (!(toa_jitter_sigma_ns >= 0.0)) throw ConfigError("camera: toa_jitter_sigma_ns must be >= 0");
    if (!(dead_time_ns >= 0.0)) throw ConfigError("camera: dead_time_ns must be >= 0");
    (void)calibration();
}

RasterResult rasterize_photons(const std::vector<sim::PhotonEvent>& photons, const RasterConfig& cfg,
                               bool record_provenance) {
    cfg.validate();
    const TimewalkCalibration cal = cfg.calibration();
    std::mt19937_64 rng(sim::derive_seed(cfg.seed, 0x72617374ULL));
    std::uniform_int_distribution<int> amplitude(cfg.tot_amplitude_min, cfg.tot_amplitude_max);
    std::normal_distribution<double> jitter(0.0, cfg.toa_jitter_sigma_ns > 0.0 ? cfg.toa_jitter_sigma_ns : 1.0);
    const ticks_t dead_ticks = ns_to_ticks(cfg.dead_time_ns);
    const ticks_t tot_unit_ticks = ns_to_ticks(kTotUnitNs);
    const double w = std::sqrt(cfg.mean_cluster_size_px) - 1.0;

    std::vector<ticks_t> busy_until(static_cast<std::size_t>(kSensorSize) * kSensorSize,
                                    std::numeric_limits<ticks_t>::min());
    RasterResult res;
    std::vector<std::uint32_t> prov;
    res.diagnostics.photons = photons.size();

    for (std::size_t pi = 0; pi < photons.size(); ++pi) {
        const auto& ph = photons[pi];
        const double x = ph.x;
        const double y = ph.y;
        if (!(x >= -0.5 && x < kSensorSize - 0.5 && y >= -0.5 && y < kSensorSize - 0.5)) {
            ++res.diagnostics.out_of_bounds;
            continue;
        }
        const int amp = amplitude(rng);
        const double x0 = x - w / 2, x1 = x + w / 2, y0 = y - w / 2, y1 = y + w / 2;
        const int c0 = std::max(0, pixel_of(x0)), c1 = std::min(kSensorSize - 1, pixel_of(x1));
        const int r0 = std::max(0, pixel_of(y0)), r1 = std::min(kSensorSize - 1, pixel_of(y1));
        const double area = w > 0.0 ? w * w : 1.0;
        bool any = false;
        for (int r = r0; r <= r1; ++r) {
            const double oy = w > 0.0 ? std::min(y1, r + 0.5) - std::max(y0, r - 0.5) : 1.0;
            if (oy <= 0.0) continue;
            for (int c = c0; c <= c1; ++c) {
                const double ox = w > 0.0 ? std::min(x1, c + 0.5) - std::max(x0, c - 0.5) : 1.0;
                if (ox <= 0.0) continue;
                const long tot = std::lround(amp * ox * oy / area);
                if (tot < cfg.tot_threshold) continue;
                const int t16 = static_cast<int>(std::min<long>(tot, 65535));
                ticks_t toa = ph.t_ticks + cal.correction_ticks(t16);
                if (cfg.toa_jitter_sigma_ns > 0.0) toa += ns_to_ticks(jitter(rng));
                toa = std::max<ticks_t>(0, toa);
                auto& busy = busy_until[static_cast<std::size_t>(r) * kSensorSize + c];
                if (toa < busy) {
                    ++res.diagnostics.dead_time_drops;
                    continue;
                }
                busy = toa + dead_ticks + static_cast<ticks_t>(t16) * tot_unit_ticks;
                res.hits.push_back({toa, static_cast<std::uint16_t>(c), static_cast<std::uint16_t>(r),
                                    static_cast<std::uint16_t>(t16)});
                prov.push_back(static_cast<std::uint32_t>(pi));
                any = true;
            }
        }
        if (!any) ++res.diagnostics.photons_without_hits;
    }

    std::vector<std::uint32_t> order(res.hits.size());
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return hit_less(res.hits[a], res.hits[b]); });
    std::vector<PixelHit> sorted(res.hits.size());
    for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = res.hits[order[i]];
    res.hits = std::move(sorted);
    if (record_provenance) {
        res.hit_photon.resize(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) res.hit_photon[i] = prov[order[i]];
    }
    return res;
}

// --- clustering --------------------------------------------------------------

namespace {

bool adjacent(const PixelHit& a, const PixelHit& b) {
    return std::abs(static_cast<int>(a.col) - static_cast<int>(b.col)) <= 1 &&
           std::abs(static_cast<int>(a.row) - static_cast<int>(b.row)) <= 1;
}

// Clusters hits already in canonical order; groups hold positions into `sorted`.
std::vector<std::vector<std::uint32_t>> cluster_sorted(const std::vector<PixelHit>& sorted, std::size_t begin,
                                                       std::size_t end, ticks_t window) {
    std::vector<std::vector<std::uint32_t>> groups;
    std::vector<char> taken(end - begin, 0);
    std::size_t win_end = begin;
    std::vector<std::uint32_t> queue;
    for (std::size_t s = begin; s < end; ++s) {
        if (taken[s - begin]) continue;
        const ticks_t limit = sorted[s].toa_ticks + window;
        if (win_end < s) win_end = s;
        while (win_end < end && sorted[win_end].toa_ticks <= limit) ++win_end;
        taken[s - begin] = 1;
        queue.assign(1, static_cast<std::uint32_t>(s));
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const PixelHit& q = sorted[queue[qi]];
            for (std::size_t r = s + 1; r < win_end; ++r) {
                if (taken[r - begin] || !adjacent(q, sorted[r])) continue;
                taken[r - begin] = 1;
                queue.push_back(static_cast<std::uint32_t>(r));
            }
        }
        std::sort(queue.begin(), queue.end());
        groups.push_back(queue);
    }
    return groups;
}

Cluster make_cluster(const std::vector<PixelHit>& sorted, const std::vector<std::uint32_t>& group) {
    Cluster c;
    c.hits.reserve(group.size());
    for (auto i : group) c.hits.push_back(sorted[i]);
    centroid_cluster(c);
    return c;
}

void order_clusters(std::vector<Cluster>& clusters) {
    std::stable_sort(clusters.begin(), clusters.end(),
                     [](const Cluster& a, const Cluster& b) { return a.toa_ticks < b.toa_ticks; });
}

std::vector<std::uint32_t> canonical_order(const std::vector<PixelHit>& hits) {
    std::vector<std::uint32_t> order(hits.size());
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return hit_less(hits[a], hits[b]); });
    return order;
}

void check_window(ticks_t window) {
    if (window < 0) throw DomainError("cluster window must be >= 0");
}

} // namespace

std::vector<std::vector<std::uint32_t>> cluster_hit_indices(const std::vector<PixelHit>& hits, ticks_t window_ticks) {
    check_window(window_ticks);
    const auto order = canonical_order(hits);
    std::vector<PixelHit> sorted(hits.size());
    for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = hits[order[i]];
    auto groups = cluster_sorted(sorted, 0, sorted.size(), window_ticks);

    std::vector<std::pair<ticks_t, std::size_t>> key;
    key.reserve(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) key.push_back({make_cluster(sorted, groups[g]).toa_ticks, g});
    std::stable_sort(key.begin(), key.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<std::vector<std::uint32_t>> out;
    out.reserve(groups.size());
    for (const auto& [t, g] : key) {
        std::vector<std::uint32_t> idx;
        for (auto p : groups[g]) idx.push_back(order[p]);
        out.push_back(std::move(idx));
    }
    return out;
}

std::vector<Cluster> cluster_hits(const std::vector<PixelHit>& hits, ticks_t window_ticks) {
    check_window(window_ticks);
    std::vector<PixelHit> sorted(hits);
    std::sort(sorted.begin(), sorted.end(), hit_less);
    const auto groups = cluster_sorted(sorted, 0, sorted.size(), window_ticks);
    std::vector<Cluster> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(make_cluster(sorted, g));
    order_clusters(out);
    return out;
}

std::vector<Cluster> cluster_hits_chunked(const std::vector<PixelHit>& hits, std::size_t n_chunks, unsigned n_threads,
                                          ticks_t window_ticks) {
    check_window(window_ticks);
    std::vector<PixelHit> sorted(hits);
    std::sort(sorted.begin(), sorted.end(), hit_less);
    const std::size_t n = sorted.size();
    n_chunks = std::max<std::size_t>(1, n_chunks);

    // A cluster never spans a ToA gap wider than the window, so chunks split there are independent.
    std::vector<std::size_t> bounds{0};
    for (std::size_t k = 1; k < n_chunks; ++k) {
        std::size_t b = std::max(bounds.back() + 1, n * k / n_chunks);
        while (b < n && sorted[b].toa_ticks - sorted[b - 1].toa_ticks <= window_ticks) ++b;
        if (b >= n) break;
        bounds.push_back(b);
    }
    bounds.push_back(n);
    const std::size_t chunks = bounds.size() - 1;

    std::vector<std::vector<Cluster>> parts(chunks);
    auto work = [&](std::size_t c) {
        const auto groups = cluster_sorted(sorted, bounds[c], bounds[c + 1], window_ticks);
        auto& out = parts[c];
        out.reserve(groups.size());
        for (const auto& g : groups) out.push_back(make_cluster(sorted, g));
        order_clusters(out);
    };
    const unsigned threads = std::max(1U, std::min<unsigned>(n_threads, static_cast<unsigned>(chunks)));
    if (threads == 1) {
        for (std::size_t c = 0; c < chunks; ++c) work(c);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t c = t; c < chunks; c += threads) work(c);
            });
        for (auto& th : pool) th.join();
    }
    std::vector<Cluster> out;
    for (auto& p : parts)
        for (auto& c : p) out.push_back(std::move(c));
    return out;
}

void centroid_cluster(Cluster& cluster) {
    if (cluster.hits.empty()) throw DomainError("centroid of an empty cluster");
    double sw = 0.0, sx = 0.0, sy = 0.0;
    const PixelHit* best = &cluster.hits.front();
    for (const auto& h : cluster.hits) {
        sw += h.tot;
        sx += static_cast<double>(h.tot) * h.col;
        sy += static_cast<double>(h.tot) * h.row;
        const bool better =
            h.tot > best->tot ||
            (h.tot == best->tot &&
             (h.toa_ticks < best->toa_ticks ||
              (h.toa_ticks == best->toa_ticks && (h.row < best->row || (h.row == best->row && h.col < best->col)))));
        if (better) best = &h;
    }
    if (sw > 0.0) {
        cluster.centroid_x = sx / sw;
        cluster.centroid_y = sy / sw;
    } else {
        cluster.centroid_x = best->col;
        cluster.centroid_y = best->row;
    }
    cluster.toa_ticks = best->toa_ticks;
    cluster.corrected_toa_ticks = best->toa_ticks;
    cluster.max_tot = best->tot;
}

ticks_t timewalk_correct(const Cluster& cluster, const TimewalkCalibration& cal, TimewalkDiagnostics* diag) {
    bool extrapolated = false;
    const ticks_t corr = cal.correction_ticks(cluster.max_tot, &extrapolated);
    ticks_t t = cluster.toa_ticks - corr;
    if (diag && extrapolated) ++diag->extrapolated;
    if (t < 0) {
        t = 0;
        if (diag) ++diag->clamped;
    }
    return t;
}

std::vector<sim::PhotonEvent> clusters_to_photons(std::vector<Cluster>& clusters, const TimewalkCalibration& cal,
                                                  TimewalkDiagnostics* diag) {
    std::vector<sim::PhotonEvent> out;
    out.reserve(clusters.size());
    for (auto& c : clusters) {
        c.corrected_toa_ticks = timewalk_correct(c, cal, diag);
        sim::PhotonEvent ev;
        ev.t_ticks = c.corrected_toa_ticks;
        ev.x = static_cast<float>(c.centroid_x);
        ev.y = static_cast<float>(c.centroid_y);
        out.push_back(ev);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const sim::PhotonEvent& a, const sim::PhotonEvent& b) { return a.t_ticks < b.t_ticks; });
    return out;
}

} // namespace ionreadout::pixel
