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

#include "ionreadout/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ionreadout/crosstalk.hpp"
#include "ionreadout/error.hpp"
#include "ionreadout/event_io.hpp"

namespace ionreadout::analysis {

namespace {

std::vector<double> integration_times(const config::AnalysisConfig& a) {
    std::vector<double> t;
    for (double ms : a.t_int_ms) t.push_back(ms * 1e-3);
    t.push_back(a.report_t_int_ms * 1e-3);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }), t.end());
    return t;
}

std::string g(double v) { return fmt::format("{:.10g}", v); }

} // namespace

std::vector<std::vector<ticks_t>> apply_veto(const std::vector<std::vector<ticks_t>>& times, double window_ns,
                                             std::vector<std::uint64_t>* removed) {
    std::vector<std::vector<ticks_t>> out(times.size());
    if (removed) removed->assign(times.size(), 0);
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<ticks_t> nb;
        if (i > 0) nb = times[i - 1];
        if (i + 1 < times.size()) {
            std::vector<ticks_t> merged;
            merged.reserve(nb.size() + times[i + 1].size());
            std::merge(nb.begin(), nb.end(), times[i + 1].begin(), times[i + 1].end(), std::back_inserter(merged));
            nb = std::move(merged);
        }
        auto r = crosstalk::veto_filter(times[i], nb, window_ns);
        out[i] = std::move(r.kept);
        if (removed) (*removed)[i] = r.removed;
    }
    return out;
}

AnalysisResult analyze_times(const config::RunConfig& cfg, std::vector<std::vector<ticks_t>> times,
                             const sim::Trajectories* truth) {
    cfg.validate();
    AnalysisResult res;
    res.n_ions = static_cast<int>(times.size());
    const auto n = times.size();
    if (truth && truth->size() != n) throw DomainError("analysis: truth trajectories do not match the ion count");
    if (cfg.analysis.veto) times = apply_veto(times, cfg.analysis.veto_window_ns, &res.veto_removed);
    else res.veto_removed.assign(n, 0);
    for (const auto& t : times) res.photons_per_ion.push_back(t.size());

    res.intervals.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.intervals[i] = segmenter::segment_states(static_cast<int>(i), times[i], cfg.segmenter);

    const auto tints = integration_times(cfg.analysis);
    const double report_t = cfg.analysis.report_t_int_ms * 1e-3;
    for (std::size_t k = 0; k < tints.size(); ++k) {
        const double t = tints[k];
        const bool is_report = std::abs(t - report_t) < 1e-12;
        const auto windows =
            segmenter::slice_windows(res.intervals, times, t, res.intervals, cfg.analysis.require_neighbors_bright);
        auto hists = discriminator::build_histograms(windows, res.n_ions, cfg.analysis.min_windows);
        TintResult tr;
        tr.t_int_s = t;
        for (std::size_t i = 0; i < n; ++i) {
            IonTint it;
            it.ion = static_cast<int>(i);
            const auto& h = hists[i];
            it.n_dark = h.dark ? h.dark->total : 0;
            it.n_bright = h.bright ? h.bright->total : 0;
            it.low_statistics = !h.dark || !h.bright || h.dark->low_statistics || h.bright->low_statistics;
            if (h.dark) it.dark_fit = discriminator::estimate_rate(*h.dark);
            if (h.bright) it.bright_fit = discriminator::estimate_rate(*h.bright);
            if (it.dark_fit && it.bright_fit && it.dark_fit->lambda > 0.0 &&
                it.bright_fit->lambda > it.dark_fit->lambda && t < cfg.chain.tau_decay)
                it.result = discriminator::evaluate(it.dark_fit->lambda, it.bright_fit->lambda, t, cfg.chain.tau_decay,
                                                    cfg.analysis.threshold_rounding);
            tr.ions.push_back(it);
        }
        if (is_report) {
            res.report_index = k;
            res.report_histograms = std::move(hists);
            res.report_windows.assign(n, 0);
            res.report_straddles.assign(n, 0);
            for (const auto& w : windows) {
                ++res.report_windows[static_cast<std::size_t>(w.ion_id)];
                if (truth && segmenter::window_straddles(w, (*truth)[static_cast<std::size_t>(w.ion_id)]))
                    ++res.report_straddles[static_cast<std::size_t>(w.ion_id)];
            }
        }
        res.tints.push_back(std::move(tr));
    }

    std::vector<discriminator::DiscriminationResult> ok;
    for (const auto& it : res.tints[res.report_index].ions)
        if (it.result) ok.push_back(*it.result);
    if (!ok.empty()) res.chain = discriminator::build_chain_report(ok);

    if (truth)
        for (std::size_t i = 0; i < n; ++i) res.label_scores.push_back(segmenter::score_labels(res.intervals[i], (*truth)[i]));
    return res;
}

AnalysisResult analyze_photons(const config::RunConfig& cfg, const std::vector<sim::PhotonEvent>& photons,
                               const sim::Trajectories* truth) {
    const auto sites = sim::ion_sites(cfg.chain);
    return analyze_times(cfg, segmenter::assign_to_roi(photons, sites, cfg.segmenter.roi_half), truth);
}

void write_analysis(const AnalysisResult& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string());

    std::string iv = "ion,t_start_s,t_end_s,label\n";
    for (const auto& ion : r.intervals)
        for (const auto& s : ion)
            iv += fmt::format("{},{:.12g},{:.12g},{}\n", s.ion_id, s.t_start, s.t_end, segmenter::to_string(s.label));
    io::write_text_atomic(dir / "intervals.csv", iv);

    const auto& rep = r.tints[r.report_index];
    std::string hist = "ion,state,t_int_ms,n,count\n";
    for (std::size_t i = 0; i < r.report_histograms.size(); ++i) {
        const auto& h = r.report_histograms[i];
        for (const auto& [name, opt] : {std::pair{"dark", &h.dark}, std::pair{"bright", &h.bright}})
            if (*opt)
                for (const auto& [cnt, occ] : (*opt)->counts)
                    hist += fmt::format("{},{},{},{},{}\n", i, name, g(rep.t_int_s * 1e3), cnt, occ);
    }
    io::write_text_atomic(dir / "histograms.csv", hist);

    std::string disc =
        "ion,t_int_ms,n_windows_dark,n_windows_bright,low_statistics,lambda_d,lambda_b,chi2_p_dark,chi2_p_bright,"
        "n_tr,eps_d,eps_b,eps_disc,eps_disc_lo,eps_disc_hi,eps_decay,decay_probability,eps_total\n";
    for (const auto& it : rep.ions) {
        disc += fmt::format("{},{},{},{},{}", it.ion, g(rep.t_int_s * 1e3), it.n_dark, it.n_bright,
                            it.low_statistics ? 1 : 0);
        if (it.result) {
            const auto& d = *it.result;
            disc += fmt::format(",{},{},{},{},{},{},{},{},{},{},{},{},{}\n", g(d.lambda_d), g(d.lambda_b),
                                g(it.dark_fit->p_value), g(it.bright_fit->p_value), d.n_tr, g(d.eps_d), g(d.eps_b),
                                g(d.eps_disc), g(d.eps_disc_lo), g(d.eps_disc_hi), g(d.eps_decay),
                                g(d.decay_probability), g(d.eps_total));
        } else {
            disc += ",,,,,,,,,,,,,\n";
        }
    }
    io::write_text_atomic(dir / "discrimination.csv", disc);

    std::string chain = "n_ions_reported,n_ions_total,fidelity_chain,eps_chain\n";
    if (r.chain)
        chain += fmt::format("{},{},{},{}\n", r.chain->ions.size(), r.n_ions, g(r.chain->fidelity_chain),
                             g(r.chain->eps_chain));
    else
        chain += fmt::format("0,{},,\n", r.n_ions);
    io::write_text_atomic(dir / "chain_report.csv", chain);

    std::string evt = "t_int_ms,ion,n_windows_dark,n_windows_bright,lambda_d,lambda_b,n_tr,eps_disc,eps_decay,eps_total\n";
    for (const auto& tr : r.tints)
        for (const auto& it : tr.ions) {
            evt += fmt::format("{},{},{},{}", g(tr.t_int_s * 1e3), it.ion, it.n_dark, it.n_bright);
            if (it.result)
                evt += fmt::format(",{},{},{},{},{},{}\n", g(it.result->lambda_d), g(it.result->lambda_b),
                                   it.result->n_tr, g(it.result->eps_disc), g(it.result->eps_decay),
                                   g(it.result->eps_total));
            else
                evt += ",,,,,,\n";
        }
    io::write_text_atomic(dir / "error_vs_tint.csv", evt);

    std::string sum;
    sum += fmt::format("n_ions = {}\n", r.n_ions);
    sum += fmt::format("report_t_int_ms = {}\n", g(rep.t_int_s * 1e3));
    for (int i = 0; i < r.n_ions; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        sum += fmt::format("ion{}.photons = {}\n", i, r.photons_per_ion[ui]);
        sum += fmt::format("ion{}.veto_removed = {}\n", i, r.veto_removed[ui]);
        const auto& it = rep.ions[ui];
        sum += fmt::format("ion{}.windows_dark = {}\n", i, it.n_dark);
        sum += fmt::format("ion{}.windows_bright = {}\n", i, it.n_bright);
        sum += fmt::format("ion{}.low_statistics = {}\n", i, it.low_statistics ? "yes" : "no");
        if (it.result) {
            const auto& d = *it.result;
            sum += fmt::format("ion{}.lambda_d = {}\n", i, g(d.lambda_d));
            sum += fmt::format("ion{}.lambda_b = {}\n", i, g(d.lambda_b));
            sum += fmt::format("ion{}.n_tr = {}\n", i, d.n_tr);
            sum += fmt::format("ion{}.eps_d = {}\n", i, g(d.eps_d));
            sum += fmt::format("ion{}.eps_b = {}\n", i, g(d.eps_b));
            sum += fmt::format("ion{}.eps_disc = {}\n", i, g(d.eps_disc));
            sum += fmt::format("ion{}.eps_disc_lo = {}\n", i, g(d.eps_disc_lo));
            sum += fmt::format("ion{}.eps_disc_hi = {}\n", i, g(d.eps_disc_hi));
            sum += fmt::format("ion{}.eps_decay = {}\n", i, g(d.eps_decay));
            sum += fmt::format("ion{}.decay_probability = {}\n", i, g(d.decay_probability));
            sum += fmt::format("ion{}.eps_total = {}\n", i, g(d.eps_total));
        }
        if (!r.label_scores.empty()) {
            sum += fmt::format("ion{}.label_accuracy = {}\n", i, g(r.label_scores[ui].accuracy()));
            sum += fmt::format("ion{}.window_straddles = {}\n", i, r.report_straddles[ui]);
        }
    }
    if (r.chain) {
        sum += fmt::format("chain.fidelity = {}\n", g(r.chain->fidelity_chain));
        sum += fmt::format("chain.eps = {}\n", g(r.chain->eps_chain));
    }
    io::write_text_atomic(dir / "summary.txt", sum);
}

void write_trajectories(const std::filesystem::path& path, const sim::Trajectories& trajectories) {
    std::string s = "ion,t_start_s,t_end_s,state\n";
    for (const auto& tr : trajectories)
        for (const auto& seg : tr)
            s += fmt::format("{},{:.17g},{:.17g},{}\n", seg.ion_id, seg.t_start, seg.t_end,
                             seg.state == sim::IonState::Bright ? "bright" : "dark");
    io::write_text_atomic(path, s);
}

sim::Trajectories read_trajectories(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(f, line);
    if (line != "ion,t_start_s,t_end_s,state") throw ParseError("bad trajectory CSV header", 1, "line");
    sim::Trajectories out;
    std::uint64_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string a, b, c, d;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',') || !std::getline(ss, d))
            throw ParseError("expected 4 fields", line_no, "line");
        sim::StateSegment s{};
        try {
            s.ion_id = std::stoi(a);
            s.t_start = std::stod(b);
            s.t_end = std::stod(c);
        } catch (const std::exception&) {
            throw ParseError("bad number", line_no, "line");
        }
        if (d == "bright") s.state = sim::IonState::Bright;
        else if (d == "dark") s.state = sim::IonState::Dark;
        else throw ParseError("bad state '" + d + "'", line_no, "line");
        if (s.ion_id < 0 || s.ion_id > 4096) throw ParseError("bad ion index", line_no, "line");
        if (static_cast<std::size_t>(s.ion_id) >= out.size()) out.resize(static_cast<std::size_t>(s.ion_id) + 1);
        out[static_cast<std::size_t>(s.ion_id)].push_back(s);
    }
    return out;
}

} // namespace ionreadout::analysis
