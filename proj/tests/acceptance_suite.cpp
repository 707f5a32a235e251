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

// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "ionreadout/analysis.hpp"
#include "ionreadout/config.hpp"
#include "ionreadout/crosstalk.hpp"
#include "ionreadout/discriminator.hpp"
#include "ionreadout/pixel.hpp"
#include "ionreadout/poisson.hpp"
#include "ionreadout/segmenter.hpp"
#include "ionreadout/sim.hpp"
#include "oracles.hpp"

using namespace ionreadout;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_s;  // <= 0: none
    std::function<Outcome()> run;
};

double rel(double a, double b) { return b == 0.0 ? std::abs(a) : std::abs(a - b) / std::abs(b); }

std::string g(double v) { return fmt::format("{:.4g}", v); }

// ---------------------------------------------------------------------------------------------

Outcome c1_normalization() {
    const double tau = 31.2;
    double worst = 0.0;
    int tuples = 0;
    for (double nd : {0.5, 2.0, 5.0, 8.6, 12.0, 19.5})
        for (double nb : {20.0, 60.0, 120.0, 200.0})
            for (double t_ms : {1.0, 10.0, 30.0, 50.0}) {
                double s = 0.0;
                const auto n_max = static_cast<std::int64_t>(nb + 20.0 * std::sqrt(nb) + 50.0);
                for (std::int64_t n = 0; n <= n_max; ++n) s += discriminator::decay_pdf(n, nd, nb, t_ms * 1e-3, tau);
                worst = std::max(worst, std::abs(s - 1.0));
                ++tuples;
            }
    return {tuples >= 50 && worst <= 1e-9, fmt::format("{} tuples, max |sum-1| = {}", tuples, g(worst))};
}

Outcome c2_mixture_mc() {
    const double nd = 8.6, nb = 60.0, t = 0.030, tau = 31.2;
    const std::uint64_t trials = 10'000'000;
    const auto hist = oracle::mixture_mc(nd, nb, t, tau, trials, 1);
    // Bins with expected count below 25 are pooled into the two tails.
    std::vector<double> expected(hist.size() + 200);
    for (std::size_t n = 0; n < expected.size(); ++n)
        expected[n] = static_cast<double>(trials) * discriminator::decay_pdf(static_cast<std::int64_t>(n), nd, nb, t, tau);
    auto observed = [&](std::size_t n) { return n < hist.size() ? static_cast<double>(hist[n]) : 0.0; };
    std::size_t lo = 0, hi = expected.size() - 1;
    while (expected[lo] < 25.0) ++lo;
    while (expected[hi] < 25.0 || hi > lo + 1000) --hi;
    struct Bin {
        double obs, exp;
    };
    std::vector<Bin> bins;
    Bin left{0, 0}, right{0, 0};
    for (std::size_t n = 0; n < expected.size(); ++n) {
        Bin& b = n < lo ? left : (n > hi ? right : bins.emplace_back(Bin{0, 0}));
        b.obs += observed(n);
        b.exp += expected[n];
    }
    bins.push_back(left);
    bins.push_back(right);
    double worst = 0.0;
    for (const auto& b : bins) {
        const double p = b.exp / static_cast<double>(trials);
        const double sd = std::sqrt(static_cast<double>(trials) * p * (1.0 - p));
        if (sd > 0) worst = std::max(worst, std::abs(b.obs - b.exp) / sd);
    }
    return {worst <= 3.0, fmt::format("{} trials, {} bins, max |z| = {}", trials, bins.size(), g(worst))};
}

Outcome c3_decay_probability() {
    const int n_tr = discriminator::optimal_threshold(8.6, 60.0);
    const auto d = discriminator::decay_error(n_tr, 8.6, 60.0, 0.030, 31.2);
    const bool ok = std::llround(d.decay_probability * 1e5) == 96;
    return {ok, fmt::format("decay probability = {:.6g} (2 s.f. {:.1e})", d.decay_probability, d.decay_probability)};
}

Outcome c4_threshold_optimality() {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int failures = 0;
    const int pairs = 200;
    for (int k = 0; k < pairs; ++k) {
        const double ld = 0.1 + 30.0 * u(rng);
        const double lb = ld + 1.0 + 200.0 * u(rng);
        const int n = discriminator::optimal_threshold(ld, lb);
        const double best = discriminator::discrimination_error(ld, lb, n).eps_disc;
        double scan = best;
        for (int m = 0; m <= static_cast<int>(3 * lb + 50); ++m)
            scan = std::min(scan, discriminator::discrimination_error(ld, lb, m).eps_disc);
        if (best > scan * (1.0 + 1e-12)) ++failures;
    }
    return {failures == 0, fmt::format("{} pairs, {} not minimal", pairs, failures)};
}

Outcome c5_tail_sum_oracle() {
    double worst = 0.0;
    int points = 0;
    for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b) {
            const double ld = 0.5 + 19.0 * a / 9.0;
            const double lb = 20.0 + 180.0 * b / 9.0;
            const int n = discriminator::optimal_threshold(ld, lb);
            const auto e = discriminator::discrimination_error(ld, lb, n);
            const auto d = oracle::mp_poisson_split(ld, n, 1500);
            const auto br = oracle::mp_poisson_split(lb, n, 1500);
            worst = std::max({worst, rel(e.eps_d, d.second), rel(e.eps_b, br.first),
                              rel(e.eps_disc, 0.5 * (d.second + br.first))});
            ++points;
        }
    return {points == 100 && worst <= 1e-10, fmt::format("{} points, max relative error = {}", points, g(worst))};
}

Outcome c6_chain() {
    discriminator::DiscriminationResult r;
    r.eps_total = 4.2e-6;
    const auto c = discriminator::build_chain_report({r, r, r, r});
    const bool three_sf = std::llround(c.eps_chain * 1e7) == 168;
    const bool within = std::abs(c.eps_chain - 17e-6) <= 2e-6;
    return {three_sf && within, fmt::format("eps_chain = {:.6g}", c.eps_chain)};
}

// ---------------------------------------------------------------------------------------------

std::vector<std::vector<ticks_t>> stream_roi_times(const sim::ChainConfig& c, const sim::Trajectories& traj,
                                                    bool afterpulses, std::uint64_t* n_photons = nullptr) {
    const auto sites = sim::ion_sites(c);
    std::vector<std::vector<ticks_t>> times(static_cast<std::size_t>(c.n_ions));
    sim::PhotonStreamGenerator gen(c, traj, afterpulses);
    std::uint64_t n = 0;
    for (double t = 50.0; !gen.done(); t += 50.0) {
        for (const auto& p : gen.next_block(std::min(t, c.duration))) {
            ++n;
            const int roi = segmenter::roi_of(p.x, p.y, sites, c.roi_half_px);
            if (roi >= 0) times[static_cast<std::size_t>(roi)].push_back(p.t_ticks);
        }
    }
    if (n_photons) *n_photons = n;
    return times;
}

Outcome c7_end_to_end() {
    config::RunConfig cfg;
    cfg.chain.n_ions = 4;
    cfg.chain.duration = 2e4;
    cfg.chain.afterpulse_prob = 0.0;
    cfg.set_seed(7);
    const auto& c = cfg.chain;
    const auto traj = sim::simulate_trajectories(c);
    std::uint64_t n_photons = 0;
    auto times = stream_roi_times(c, traj, false, &n_photons);
    const auto res = analysis::analyze_times(cfg, std::move(times));

    bool a_ok = true, b_ok = true, c_ok = true, d_ok = true;
    std::string detail = fmt::format("{} photons;", n_photons);
    const auto& rep = res.tints[res.report_index];
    const double t = rep.t_int_s;
    for (int i = 0; i < c.n_ions; ++i) {
        const auto& it = rep.ions[static_cast<std::size_t>(i)];
        const bool inner = i > 0 && i + 1 < c.n_ions;
        if (inner && (it.n_dark < 50'000 || it.n_bright < 50'000)) a_ok = false;
        const double xt = (i > 0 ? c.crosstalk_left : 0.0) + (i + 1 < c.n_ions ? c.crosstalk_right : 0.0);
        const double want_d = t * (c.rate_dark_bg + xt * c.rate_bright);
        const double want_b = want_d + t * c.rate_bright;
        detail += fmt::format(" ion{}: windows {}/{}", i, it.n_dark, it.n_bright);
        if (!it.result) {
            b_ok = c_ok = false;
            detail += " no fit;";
            continue;
        }
        const auto& r = *it.result;
        const double zd = (r.lambda_d - want_d) / std::sqrt(want_d / static_cast<double>(it.n_dark));
        const double zb = (r.lambda_b - want_b) / std::sqrt(want_b / static_cast<double>(it.n_bright));
        if (std::abs(zd) > 3.0 || std::abs(zb) > 3.0) b_ok = false;
        const double analytic = oracle::analytic_eps_disc(r.lambda_d, r.lambda_b, r.n_tr) +
                                oracle::analytic_eps_decay(r.lambda_d, r.lambda_b, r.n_tr, t, c.tau_decay);
        const double ratio = r.eps_total / analytic;
        if (!(ratio >= 1.0 / 3.0 && ratio <= 3.0)) c_ok = false;
        detail += fmt::format(" lambda_d {} (z {:.2f}) lambda_b {} (z {:.2f}) eps_total {} ratio {:.4f};", g(r.lambda_d),
                              zd, g(r.lambda_b), zb, g(r.eps_total), ratio);
    }

    // Error vs integration time, per ion.
    double worst_ratio = 2.0;
    for (int i = 0; i < c.n_ions; ++i) {
        std::map<long, discriminator::DiscriminationResult> by_ms;
        for (const auto& tr : res.tints) {
            const auto& it = tr.ions[static_cast<std::size_t>(i)];
            if (!it.result) {
                d_ok = false;
                continue;
            }
            by_ms[std::lround(tr.t_int_s * 1e3)] = *it.result;
        }
        double prev = 2.0;
        for (const auto& [ms, r] : by_ms) {
            if (!(r.eps_disc < prev)) d_ok = false;
            prev = r.eps_disc;
        }
        for (const auto& [ms, r] : by_ms) {
            if (ms < 10 || !by_ms.count(2 * ms)) continue;
            const double q = by_ms.at(2 * ms).eps_decay / r.eps_decay;
            if (std::abs(q - 2.0) > std::abs(worst_ratio - 2.0)) worst_ratio = q;
            if (std::abs(q - 2.0) > 0.1) d_ok = false;
        }
    }
    detail += fmt::format(" worst eps_decay doubling ratio {:.4f};", worst_ratio);
    detail += fmt::format(" (a) {} (b) {} (c) {} (d) {}", a_ok ? "ok" : "fail", b_ok ? "ok" : "fail",
                          c_ok ? "ok" : "fail", d_ok ? "ok" : "fail");
    return {a_ok && b_ok && c_ok && d_ok, detail};
}

Outcome c8_segmentation() {
    config::RunConfig cfg;
    cfg.chain.duration = 1000.0;
    cfg.set_seed(8);
    const auto traj = sim::simulate_trajectories(cfg.chain);
    const auto photons = sim::inject_afterpulses(sim::generate_photon_stream(cfg.chain, traj), cfg.chain);
    const auto res = analysis::analyze_photons(cfg, photons, &traj);
    double labeled = 0, correct = 0, worst_ion = 1.0;
    for (const auto& s : res.label_scores) {
        labeled += s.labeled_time;
        correct += s.correct_time;
        worst_ion = std::min(worst_ion, s.accuracy());
    }
    std::uint64_t windows = 0, straddles = 0;
    for (std::size_t i = 0; i < res.report_windows.size(); ++i) {
        windows += res.report_windows[i];
        straddles += res.report_straddles[i];
    }
    const double acc = correct / labeled;
    const double straddle = static_cast<double>(straddles) / static_cast<double>(windows);
    return {acc >= 0.999 && straddle < 1e-3,
            fmt::format("accuracy {:.6f} (worst ion {:.6f}), labeled {:.1f} s of {:.0f} s, straddles {}/{} = {}", acc,
                        worst_ion, labeled, cfg.chain.duration * cfg.chain.n_ions, straddles, windows, g(straddle))};
}

sim::Trajectories all_bright(int n, double duration) {
    sim::Trajectories t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)].push_back({i, 0.0, duration, sim::IonState::Bright});
    return t;
}

Outcome c9_afterpulse() {
    sim::ChainConfig c;
    c.n_ions = 2;
    c.duration = 237.0;  // about 1e6 photons
    c.seed = 9;
    const double p_in = c.afterpulse_prob, s_in = c.afterpulse_jitter_sigma_ns;
    const auto photons = sim::inject_afterpulses(sim::generate_photon_stream(c, all_bright(2, c.duration)), c);
    const auto roi = segmenter::assign_to_roi(photons, sim::ion_sites(c), c.roi_half_px);
    const auto h = crosstalk::coincidence_histogram(roi[0], roi[1]);
    const auto f = crosstalk::fit_peak(h);
    const auto a = crosstalk::afterpulse_probability(h, f, roi[0].size() + roi[1].size());
    const bool ok = f.status == crosstalk::FitStatus::Ok && std::abs(a.probability / p_in - 1.0) <= 0.10 &&
                    std::abs(f.sigma_ns / s_in - 1.0) <= 0.20;
    return {ok, fmt::format("{} photons, fit {}, probability {} (injected {}), sigma {} ns (injected {})", photons.size(),
                            crosstalk::to_string(f.status), g(a.probability), g(p_in), g(f.sigma_ns), g(s_in))};
}

crosstalk::CrosstalkMatrix crosstalk_run(double left, double right, std::uint64_t seed) {
    config::RunConfig cfg;
    cfg.chain.n_ions = 3;
    cfg.chain.duration = 2000.0;
    cfg.chain.crosstalk_left = left;
    cfg.chain.crosstalk_right = right;
    cfg.set_seed(seed);
    const auto traj = sim::simulate_trajectories(cfg.chain);
    const auto times = stream_roi_times(cfg.chain, traj, true);
    const auto res = analysis::analyze_times(cfg, times);
    const auto vetoed = analysis::apply_veto(times, cfg.analysis.veto_window_ns);
    return crosstalk::optical_crosstalk_matrix(vetoed, res.intervals);
}

Outcome c10_crosstalk() {
    // m(i, j): ROI j while only ion i is bright. Left-neighbor ROIs see crosstalk_right, right ones crosstalk_left.
    const auto sym = crosstalk_run(0.055, 0.055, 10);
    bool ok = true;
    std::string detail = "symmetric:";
    for (int i = 0; i < 3; ++i)
        for (int j : {i - 1, i + 1}) {
            if (j < 0 || j > 2) continue;
            const bool def = sym.is_defined(i, j);
            const double v = def ? sym.at(i, j) : NAN;
            if (!def || std::abs(v / 0.055 - 1.0) > 0.05) ok = false;
            detail += fmt::format(" m({},{})={:.5f}", i, j, v);
        }
    const auto asym = crosstalk_run(0.04, 0.07, 11);
    detail += "; asymmetric 0.04/0.07:";
    double max_left = 0.0, min_right = 1.0;
    for (int i = 0; i < 3; ++i) {
        if (i + 1 < 3) {  // ion i's light in ROI i+1: crosstalk_left of ion i+1
            const double v = asym.is_defined(i, i + 1) ? asym.at(i, i + 1) : NAN;
            max_left = std::max(max_left, std::isnan(v) ? 1.0 : v);
            detail += fmt::format(" m({},{})={:.5f}", i, i + 1, v);
        }
        if (i > 0) {
            const double v = asym.is_defined(i, i - 1) ? asym.at(i, i - 1) : NAN;
            min_right = std::min(min_right, std::isnan(v) ? 0.0 : v);
            detail += fmt::format(" m({},{})={:.5f}", i, i - 1, v);
        }
    }
    if (!(max_left < min_right)) ok = false;
    return {ok, detail};
}

// ---------------------------------------------------------------------------------------------

std::vector<std::vector<pixel::PixelHit>> groups_of(const std::vector<pixel::Cluster>& cs) {
    std::vector<std::vector<pixel::PixelHit>> out;
    for (const auto& c : cs) {
        auto h = c.hits;
        std::sort(h.begin(), h.end(), pixel::hit_less);
        out.push_back(std::move(h));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return pixel::hit_less(a.front(), b.front()); });
    return out;
}

Outcome c11_pipeline() {
    std::string detail;
    bool ok = true;

    // Properties on 1e5 randomized hits.
    auto hits = oracle::random_hits(100'000, 11, 4'000'000, 48);
    const auto base = pixel::cluster_hits(hits);
    std::vector<pixel::PixelHit> all;
    bool partition = true;
    for (const auto& c : base) {
        if (c.hits.empty()) partition = false;
        all.insert(all.end(), c.hits.begin(), c.hits.end());
        for (const auto& h : c.hits)
            if (h.toa_ticks - c.hits.front().toa_ticks > pixel::kDefaultClusterWindowTicks) partition = false;
    }
    auto sorted_in = hits;
    std::sort(all.begin(), all.end(), pixel::hit_less);
    std::sort(sorted_in.begin(), sorted_in.end(), pixel::hit_less);
    partition = partition && all == sorted_in;
    std::mt19937_64 rng(11);
    std::shuffle(hits.begin(), hits.end(), rng);
    const auto base_groups = groups_of(base);
    const bool order = groups_of(pixel::cluster_hits(hits)) == base_groups;
    bool chunks = true;
    for (std::size_t k : {2U, 7U, 64U}) {
        const auto ch = pixel::cluster_hits_chunked(hits, k, 4);
        if (ch.size() != base.size()) {
            chunks = false;
            continue;
        }
        for (std::size_t i = 0; i < ch.size(); ++i)
            if (ch[i].hits != base[i].hits || ch[i].centroid_x != base[i].centroid_x) chunks = false;
    }
    ok = ok && partition && order && chunks;
    detail += fmt::format("1e5 hits -> {} clusters: partition {}, order {}, chunks {};", base.size(), partition, order, chunks);

    // Centroid and time-walk residuals on a simulated, rasterized photon stream.
    sim::ChainConfig c;
    c.duration = 20.0;
    c.afterpulse_prob = 0.0;
    c.seed = 11;
    const auto photons = sim::generate_photon_stream(c, all_bright(4, c.duration));
    pixel::RasterConfig rc;
    rc.seed = 11;
    const auto ras = pixel::rasterize_photons(photons, rc, true);
    const auto cal = rc.calibration();
    double se = 0, s_raw = 0, s2_raw = 0, s_c = 0, s2_c = 0, n = 0;
    for (const auto& grp : pixel::cluster_hit_indices(ras.hits)) {
        std::set<std::uint32_t> src;
        pixel::Cluster cl;
        for (auto i : grp) {
            src.insert(ras.hit_photon[i]);
            cl.hits.push_back(ras.hits[i]);
        }
        if (src.size() != 1) continue;
        pixel::centroid_cluster(cl);
        const auto& p = photons[*src.begin()];
        se += std::pow(cl.centroid_x - p.x, 2) + std::pow(cl.centroid_y - p.y, 2);
        const double raw = static_cast<double>(cl.toa_ticks - p.t_ticks);
        const double cor = static_cast<double>(pixel::timewalk_correct(cl, cal) - p.t_ticks);
        s_raw += raw;
        s2_raw += raw * raw;
        s_c += cor;
        s2_c += cor * cor;
        n += 1;
    }
    const double rms = std::sqrt(se / n);
    const double var_raw = s2_raw / n - std::pow(s_raw / n, 2);
    const double var_corr = s2_c / n - std::pow(s_c / n, 2);
    ok = ok && rms <= 0.1 && var_corr < var_raw;
    detail += fmt::format(" centroid rms {:.4f} px over {:.0f} clusters; ToA variance {} -> {} ticks^2;", rms, n,
                          g(var_raw), g(var_corr));

    // Throughput: clustering, centroiding and time-walk correction of 1e7 time-sorted hits.
    auto big = oracle::random_hits(10'000'000, 12, 6'400'000'000LL, 256);
    std::sort(big.begin(), big.end(), pixel::hit_less);
    const auto t0 = std::chrono::steady_clock::now();
    auto clusters = pixel::cluster_hits(big);
    const auto out = pixel::clusters_to_photons(clusters, cal);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double rate = static_cast<double>(big.size()) / secs;
    ok = ok && rate >= 1e6;
    detail += fmt::format(" throughput {} hits/s ({} photons in {:.2f} s)", g(rate), out.size(), secs);
    return {ok, detail};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {1, "decay-pdf normalization", 1.0, c1_normalization},
        {2, "decay-pdf vs mixture Monte Carlo", 60.0, c2_mixture_mc},
        {3, "decay probability", 1.0, c3_decay_probability},
        {4, "threshold optimality", 10.0, c4_threshold_optimality},
        {5, "discrimination error vs tail-sum oracle", 10.0, c5_tail_sum_oracle},
        {6, "chain composition", 1.0, c6_chain},
        {7, "end-to-end reproduction", 600.0, c7_end_to_end},
        {8, "segmentation accuracy", 120.0, c8_segmentation},
        {9, "afterpulse characterization", 60.0, c9_afterpulse},
        {10, "optical crosstalk matrix", 60.0, c10_crosstalk},
        {11, "pipeline mechanics", 0.0, c11_pipeline},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string timing = fmt::format("{:.2f} s", secs);
        if (c.time_limit_s > 0.0) {
            timing += fmt::format(" (limit {:.0f} s)", c.time_limit_s);
            if (secs >= c.time_limit_s) {
                o.pass = false;
                timing += " over time";
            }
        }
        if (!o.pass) ++failed;
        std::cout << fmt::format("Criterion {:2d} {} [{}]: {} [{}]", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail,
                                 timing)
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
