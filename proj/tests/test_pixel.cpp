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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "ionreadout/error.hpp"
#include "ionreadout/pixel.hpp"
#include "oracles.hpp"

using namespace ionreadout;
using pixel::PixelHit;

namespace {

sim::PhotonEvent photon(ticks_t t, double x, double y) {
    sim::PhotonEvent p;
    p.t_ticks = t;
    p.x = static_cast<float>(x);
    p.y = static_cast<float>(y);
    return p;
}

std::vector<std::vector<PixelHit>> as_groups(const std::vector<pixel::Cluster>& cs) {
    std::vector<std::vector<PixelHit>> g;
    for (const auto& c : cs) {
        auto h = c.hits;
        std::sort(h.begin(), h.end(), pixel::hit_less);
        g.push_back(std::move(h));
    }
    std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return pixel::hit_less(a.front(), b.front()); });
    return g;
}

std::vector<PixelHit> footprint(ticks_t t, int c, int r) {
    return {{t, static_cast<std::uint16_t>(c), static_cast<std::uint16_t>(r), 300},
            {t + 2, static_cast<std::uint16_t>(c + 1), static_cast<std::uint16_t>(r), 200},
            {t + 3, static_cast<std::uint16_t>(c), static_cast<std::uint16_t>(r + 1), 150},
            {t + 5, static_cast<std::uint16_t>(c + 1), static_cast<std::uint16_t>(r + 1), 100}};
}

} // namespace

TEST(Timewalk, HyperbolicDefaultExample) {
    const auto cal = pixel::TimewalkCalibration::hyperbolic(16000.0, 4.0);
    EXPECT_DOUBLE_EQ(cal.correction(96), 160.0);
    EXPECT_EQ(cal.correction_ticks(96), 160);
}

TEST(Timewalk, IdentityCorrectsNothing) {
    const auto cal = pixel::TimewalkCalibration::identity();
    pixel::Cluster c;
    c.hits = {{1234, 5, 6, 77}};
    pixel::centroid_cluster(c);
    EXPECT_EQ(pixel::timewalk_correct(c, cal), 1234);
}

TEST(Timewalk, TableInterpolatesAndFlagsExtrapolation) {
    const auto cal = pixel::TimewalkCalibration::table({{10, 100.0}, {20, 50.0}, {40, 10.0}});
    bool ext = true;
    EXPECT_DOUBLE_EQ(cal.correction(15, &ext), 75.0);
    EXPECT_FALSE(ext);
    EXPECT_DOUBLE_EQ(cal.correction(30, &ext), 30.0);
    EXPECT_DOUBLE_EQ(cal.correction(5, &ext), 100.0);
    EXPECT_TRUE(ext);
    EXPECT_DOUBLE_EQ(cal.correction(400, &ext), 10.0);
    EXPECT_TRUE(ext);

    pixel::Cluster c;
    c.hits = {{500, 1, 1, 400}};
    pixel::centroid_cluster(c);
    pixel::TimewalkDiagnostics d;
    EXPECT_EQ(pixel::timewalk_correct(c, cal, &d), 490);
    EXPECT_EQ(d.extrapolated, 1U);
}

TEST(Timewalk, RejectsNonMonotoneOrNegativeTables) {
    EXPECT_THROW(pixel::TimewalkCalibration::table({}), ConfigError);
    EXPECT_THROW(pixel::TimewalkCalibration::table({{10, 5.0}, {20, 6.0}}), ConfigError);
    EXPECT_THROW(pixel::TimewalkCalibration::table({{10, 5.0}, {10, 4.0}}), ConfigError);
    EXPECT_THROW(pixel::TimewalkCalibration::table({{10, -1.0}}), ConfigError);
    EXPECT_THROW(pixel::TimewalkCalibration::hyperbolic(-1.0, 4.0), ConfigError);
}

TEST(Timewalk, MonotoneNonIncreasingProperty) {
    const auto cal = pixel::TimewalkCalibration::hyperbolic(16000.0, 4.0);
    double prev = cal.correction(1);
    for (int tot = 2; tot < 5000; ++tot) {
        const double v = cal.correction(tot);
        ASSERT_LE(v, prev);
        ASSERT_GE(v, 0.0);
        prev = v;
    }
}

TEST(Timewalk, ClampsAtZeroAndCounts) {
    const auto cal = pixel::TimewalkCalibration::hyperbolic(16000.0, 4.0);
    pixel::Cluster c;
    c.hits = {{50, 3, 3, 96}};
    pixel::centroid_cluster(c);
    pixel::TimewalkDiagnostics d;
    EXPECT_EQ(pixel::timewalk_correct(c, cal, &d), 0);
    EXPECT_EQ(d.clamped, 1U);
}

TEST(Rasterize, EmptyInputGivesNoHits) {
    const auto r = pixel::rasterize_photons({}, pixel::RasterConfig{});
    EXPECT_TRUE(r.hits.empty());
    EXPECT_EQ(r.diagnostics.photons, 0U);
}

TEST(Rasterize, OnePhotonGivesFourConnectedHitsInOneWindow) {
    const auto r = pixel::rasterize_photons({photon(10000, 100.4, 50.6)}, pixel::RasterConfig{});
    ASSERT_EQ(r.hits.size(), 4U);
    ticks_t lo = r.hits.front().toa_ticks, hi = lo;
    for (const auto& h : r.hits) {
        lo = std::min(lo, h.toa_ticks);
        hi = std::max(hi, h.toa_ticks);
        EXPECT_GE(h.col, 100);
        EXPECT_LE(h.col, 101);
        EXPECT_GE(h.row, 50);
        EXPECT_LE(h.row, 51);
    }
    EXPECT_LE(hi - lo, pixel::kDefaultClusterWindowTicks);
    EXPECT_EQ(pixel::cluster_hits(r.hits).size(), 1U);
}

TEST(Rasterize, DeadTimeBlocksSecondPhotonOnSamePixel) {
    pixel::RasterConfig cfg;
    cfg.mean_cluster_size_px = 1.0;  // single pixel footprint
    cfg.tot_amplitude_min = cfg.tot_amplitude_max = 20;  // 20 x 25 ns = 500 ns
    cfg.tot_threshold = 1;
    cfg.toa_jitter_sigma_ns = 0.0;
    cfg.timewalk_a = 0.0;
    const ticks_t gap = ns_to_ticks(100.0);
    const auto r = pixel::rasterize_photons({photon(1000, 20.0, 20.0), photon(1000 + gap, 20.0, 20.0)}, cfg);
    ASSERT_EQ(r.hits.size(), 1U);
    EXPECT_EQ(r.hits[0].toa_ticks, 1000);
    EXPECT_EQ(r.hits[0].tot, 20);
    EXPECT_EQ(r.diagnostics.dead_time_drops, 1U);
    EXPECT_EQ(r.diagnostics.photons_without_hits, 1U);

    // 475 ns + 500 ns later the pixel is live again.
    const ticks_t live = ns_to_ticks(975.0);
    const auto r2 = pixel::rasterize_photons({photon(1000, 20.0, 20.0), photon(1000 + live, 20.0, 20.0)}, cfg);
    EXPECT_EQ(r2.hits.size(), 2U);
    const auto r3 = pixel::rasterize_photons({photon(1000, 20.0, 20.0), photon(1000 + live - 1, 20.0, 20.0)}, cfg);
    EXPECT_EQ(r3.hits.size(), 1U);
}

TEST(Rasterize, OutOfBoundsPhotonsAreCounted) {
    const auto r = pixel::rasterize_photons({photon(5, -3.0, 10.0), photon(6, 10.0, 300.0), photon(7, 10.0, 10.0)},
                                            pixel::RasterConfig{});
    EXPECT_EQ(r.diagnostics.out_of_bounds, 2U);
    EXPECT_FALSE(r.hits.empty());
}

TEST(Rasterize, HitsCarryTimewalkOfTheirOwnToT) {
    pixel::RasterConfig cfg;
    cfg.toa_jitter_sigma_ns = 0.0;
    const auto cal = cfg.calibration();
    const auto r = pixel::rasterize_photons({photon(50000, 60.3, 70.8)}, cfg);
    for (const auto& h : r.hits) EXPECT_EQ(h.toa_ticks, 50000 + cal.correction_ticks(h.tot));
}

TEST(Cluster, SeparatedFootprintsGiveTwoClusters) {
    auto hits = footprint(100, 10, 10);
    const auto b = footprint(100, 20, 10);
    hits.insert(hits.end(), b.begin(), b.end());
    const auto cs = pixel::cluster_hits(hits);
    ASSERT_EQ(cs.size(), 2U);
    EXPECT_EQ(cs[0].hits.size(), 4U);
    EXPECT_EQ(cs[1].hits.size(), 4U);
}

TEST(Cluster, OverlappingFootprintsOneMicrosecondApartSplit) {
    auto hits = footprint(100, 10, 10);
    const auto b = footprint(100 + ns_to_ticks(1000.0), 10, 10);
    hits.insert(hits.end(), b.begin(), b.end());
    EXPECT_EQ(pixel::cluster_hits(hits).size(), 2U);
}

TEST(Cluster, WindowAnchoredAtSeed) {
    // A chain of adjacent hits spaced 100 ticks: a rolling window would join them all.
    std::vector<PixelHit> hits;
    for (int k = 0; k < 5; ++k) hits.push_back({100 * k, static_cast<std::uint16_t>(10 + k), 10, 100});
    const auto cs = pixel::cluster_hits(hits, 192);
    ASSERT_EQ(cs.size(), 3U);
    EXPECT_EQ(cs[0].hits.size(), 2U);
    EXPECT_EQ(cs[1].hits.size(), 2U);
    EXPECT_EQ(cs[2].hits.size(), 1U);
    EXPECT_THROW(pixel::cluster_hits(hits, -1), DomainError);
}

TEST(Cluster, DiagonalNeighborsJoin) {
    const std::vector<PixelHit> hits{{0, 5, 5, 10}, {1, 6, 6, 10}, {2, 8, 8, 10}};
    EXPECT_EQ(pixel::cluster_hits(hits).size(), 2U);
}

TEST(Centroid, SingleHitIsExact) {
    pixel::Cluster c;
    c.hits = {{7, 10, 20, 55}};
    pixel::centroid_cluster(c);
    EXPECT_EQ(c.centroid_x, 10.0);
    EXPECT_EQ(c.centroid_y, 20.0);
    EXPECT_EQ(c.toa_ticks, 7);
}

TEST(Centroid, WeightedMean) {
    pixel::Cluster c;
    c.hits = {{7, 10, 20, 100}, {9, 11, 20, 300}};
    pixel::centroid_cluster(c);
    EXPECT_DOUBLE_EQ(c.centroid_x, 10.75);
    EXPECT_DOUBLE_EQ(c.centroid_y, 20.0);
    EXPECT_EQ(c.toa_ticks, 9);
    EXPECT_EQ(c.max_tot, 300);
}

TEST(Centroid, TiesBrokenByToaThenRowThenCol) {
    pixel::Cluster c;
    c.hits = {{9, 10, 20, 200}, {8, 11, 21, 200}, {8, 12, 20, 200}};
    pixel::centroid_cluster(c);
    EXPECT_EQ(c.toa_ticks, 8);
    pixel::Cluster d;
    d.hits = {{8, 11, 21, 200}, {8, 12, 20, 200}, {8, 10, 20, 200}};
    pixel::centroid_cluster(d);
    // lower row first (20), then lower col (10)
    EXPECT_EQ(d.toa_ticks, 8);
    pixel::Cluster e;
    e.hits = {{8, 12, 20, 200}, {9, 10, 20, 200}};
    pixel::centroid_cluster(e);
    EXPECT_EQ(e.toa_ticks, 8);
    pixel::Cluster f;
    f.hits = {{5, 12, 21, 200}, {5, 13, 20, 200}};
    pixel::centroid_cluster(f);
    EXPECT_EQ(f.max_tot, 200);
    EXPECT_THROW(
        [] {
            pixel::Cluster empty;
            pixel::centroid_cluster(empty);
        }(),
        DomainError);
}

TEST(ClusterProperties, MatchesDefinitionOracle) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const auto hits = oracle::random_hits(300, seed, 4000, 24);
        const auto got = as_groups(pixel::cluster_hits(hits));
        auto want = oracle::naive_clusters(hits, pixel::kDefaultClusterWindowTicks);
        std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) { return pixel::hit_less(a.front(), b.front()); });
        ASSERT_EQ(got, want) << "seed " << seed;
    }
}

TEST(ClusterProperties, PartitionOrderIndependenceAndChunking) {
    std::mt19937_64 rng(99);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto hits = oracle::random_hits(20000, seed, 2'000'000, 48);
        const auto base = pixel::cluster_hits(hits);

        // partition: multiset preserved
        std::vector<PixelHit> all;
        for (const auto& c : base) {
            ASSERT_FALSE(c.hits.empty());
            all.insert(all.end(), c.hits.begin(), c.hits.end());
            ticks_t lo = c.hits.front().toa_ticks, hi = lo;
            int c0 = 1 << 20, c1 = -1, r0 = 1 << 20, r1 = -1;
            for (const auto& h : c.hits) {
                lo = std::min(lo, h.toa_ticks);
                hi = std::max(hi, h.toa_ticks);
                c0 = std::min<int>(c0, h.col);
                c1 = std::max<int>(c1, h.col);
                r0 = std::min<int>(r0, h.row);
                r1 = std::max<int>(r1, h.row);
            }
            ASSERT_LE(hi - lo, pixel::kDefaultClusterWindowTicks);
            ASSERT_GE(c.centroid_x, c0);
            ASSERT_LE(c.centroid_x, c1);
            ASSERT_GE(c.centroid_y, r0);
            ASSERT_LE(c.centroid_y, r1);
        }
        auto a = all, b = hits;
        std::sort(a.begin(), a.end(), pixel::hit_less);
        std::sort(b.begin(), b.end(), pixel::hit_less);
        ASSERT_EQ(a, b);
        for (std::size_t i = 1; i < base.size(); ++i) ASSERT_LE(base[i - 1].toa_ticks, base[i].toa_ticks);

        // order independence
        std::shuffle(hits.begin(), hits.end(), rng);
        ASSERT_EQ(as_groups(pixel::cluster_hits(hits)), as_groups(base));

        // chunked, threaded: identical sequence
        for (std::size_t chunks : {2U, 7U, 64U}) {
            const auto ch = pixel::cluster_hits_chunked(hits, chunks, 4);
            ASSERT_EQ(ch.size(), base.size());
            for (std::size_t i = 0; i < ch.size(); ++i) {
                ASSERT_EQ(ch[i].hits, base[i].hits);
                ASSERT_EQ(ch[i].toa_ticks, base[i].toa_ticks);
                ASSERT_EQ(ch[i].centroid_x, base[i].centroid_x);
            }
        }
    }
}

TEST(ClusterProperties, IndicesCoverEveryHitOnce) {
    const auto hits = oracle::random_hits(5000, 4, 300000, 32);
    const auto groups = pixel::cluster_hit_indices(hits);
    std::vector<int> seen(hits.size(), 0);
    for (const auto& g : groups)
        for (auto i : g) ++seen[i];
    for (int s : seen) ASSERT_EQ(s, 1);
    EXPECT_EQ(groups.size(), pixel::cluster_hits(hits).size());
}

namespace {

struct RoundTrip {
    std::size_t photons = 0;
    std::size_t clusters = 0;
    std::size_t merged = 0;   // clusters holding hits of more than one photon
    std::size_t lost = 0;     // photons with no hit at all
    std::size_t split = 0;    // extra clusters from a photon spread over several
    double rms = 0.0;
    double var_raw = 0.0;
    double var_corr = 0.0;
};

RoundTrip round_trip(std::uint64_t seed, double rate_per_s, double duration) {
    sim::ChainConfig c;
    c.duration = duration;
    c.seed = seed;
    c.rate_bright = rate_per_s;
    c.afterpulse_prob = 0.0;
    const auto photons = sim::generate_photon_stream(c, oracle::fixed_states(std::vector<sim::IonState>(4, sim::IonState::Bright), duration));
    pixel::RasterConfig rc;
    rc.seed = seed;
    const auto ras = pixel::rasterize_photons(photons, rc, true);
    const auto groups = pixel::cluster_hit_indices(ras.hits);
    const auto cal = rc.calibration();

    RoundTrip out;
    out.photons = photons.size();
    out.clusters = groups.size();
    out.lost = ras.diagnostics.photons_without_hits;
    std::map<std::uint32_t, int> clusters_per_photon;
    double se = 0.0, s_raw = 0.0, s2_raw = 0.0, s_c = 0.0, s2_c = 0.0;
    std::size_t n_pos = 0;
    for (const auto& g : groups) {
        std::set<std::uint32_t> src;
        pixel::Cluster cl;
        for (auto i : g) {
            src.insert(ras.hit_photon[i]);
            cl.hits.push_back(ras.hits[i]);
        }
        if (src.size() > 1) {
            ++out.merged;
            continue;
        }
        const auto pi = *src.begin();
        if (++clusters_per_photon[pi] > 1) ++out.split;
        pixel::centroid_cluster(cl);
        const auto& p = photons[pi];
        se += std::pow(cl.centroid_x - p.x, 2) + std::pow(cl.centroid_y - p.y, 2);
        ++n_pos;
        const double raw = static_cast<double>(cl.toa_ticks - p.t_ticks);
        const double cor = static_cast<double>(pixel::timewalk_correct(cl, cal) - p.t_ticks);
        s_raw += raw;
        s2_raw += raw * raw;
        s_c += cor;
        s2_c += cor * cor;
    }
    const double n = static_cast<double>(n_pos);
    out.rms = std::sqrt(se / n);
    out.var_raw = s2_raw / n - std::pow(s_raw / n, 2);
    out.var_corr = s2_c / n - std::pow(s_c / n, 2);
    return out;
}

} // namespace

TEST(RoundTrip, CountBookkeepingCentroidAndTimewalk) {
    const auto r = round_trip(17, 2000.0, 20.0);
    ASSERT_GT(r.photons, 100000U);
    // Every photon becomes one cluster unless it lost all its pixels, merged with another or split.
    std::size_t merged_photons_upper = 2 * r.merged;
    EXPECT_LE(r.clusters + r.lost, r.photons + r.split + r.merged);
    EXPECT_GE(r.clusters + r.lost + merged_photons_upper, r.photons);
    EXPECT_LT(static_cast<double>(r.merged + r.lost + r.split), 0.01 * static_cast<double>(r.photons));
    EXPECT_LE(r.rms, 0.1);
    EXPECT_LT(r.var_corr, r.var_raw);
}
