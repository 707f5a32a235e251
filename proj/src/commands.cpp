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

#include "ionreadout/commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ionreadout/analysis.hpp"
#include "ionreadout/crosstalk.hpp"
#include "ionreadout/error.hpp"

namespace ionreadout::cli {

namespace {

std::string g(double v) { return fmt::format("{:.10g}", v); }

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string());
}

std::vector<double> parse_ms_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--t-int: bad value '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("--t-int: empty list");
    return out;
}

} // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
    if (dynamic_cast<const ParseError*>(&e)) return kParse;
    if (dynamic_cast<const StatisticsError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kStatistics;
    if (dynamic_cast<const IoError*>(&e)) return kIo;
    return 1;
}

std::string data_file_name(const char* stem, io::FileFormat format) {
    return std::string(stem) + (format == io::FileFormat::Csv ? ".csv" : ".bin");
}

SimulateStats cmd_simulate(const config::RunConfig& cfg, const std::filesystem::path& out_dir, io::FileFormat format) {
    cfg.validate();
    ensure_dir(out_dir);
    const auto traj = sim::simulate_trajectories(cfg.chain);
    sim::PhotonStreamGenerator gen(cfg.chain, traj, true);
    const auto photons = gen.next_block(std::numeric_limits<double>::infinity());
    SimulateStats st;
    st.photons = photons.size();
    for (const auto& p : photons)
        if (p.truth && p.truth->kind == sim::PhotonKind::Afterpulse) ++st.afterpulses;
    io::write_photons(out_dir / data_file_name(kPhotonsStem, format), photons);
    analysis::write_trajectories(out_dir / kTruthSegments, traj);
    return st;
}

pixel::RasterDiagnostics cmd_rasterize(const config::RunConfig& cfg, const std::filesystem::path& in,
                                       const std::filesystem::path& out_dir, io::FileFormat format) {
    cfg.validate();
    const auto photons = io::read_photons(in);
    ensure_dir(out_dir);
    const auto res = pixel::rasterize_photons(photons, cfg.camera);
    io::write_hits(out_dir / data_file_name(kHitsStem, format), res.hits);
    const auto& d = res.diagnostics;
    io::write_text_atomic(out_dir / "rasterize_diagnostics.txt",
                          fmt::format("photons = {}\nout_of_bounds = {}\ndead_time_drops = {}\nphotons_without_hits = {}\nhits = {}\n",
                                      d.photons, d.out_of_bounds, d.dead_time_drops, d.photons_without_hits,
                                      res.hits.size()));
    return d;
}

pixel::TimewalkDiagnostics cmd_cluster(const config::RunConfig& cfg, const std::filesystem::path& in,
                                       const std::filesystem::path& out_dir, io::FileFormat format) {
    cfg.validate();
    const auto hits = io::read_hits(in);
    ensure_dir(out_dir);
    const unsigned threads = std::max(1U, std::thread::hardware_concurrency());
    auto clusters = pixel::cluster_hits_chunked(hits, threads * 4, threads, cfg.cluster_window_ticks());
    pixel::TimewalkDiagnostics diag;
    const auto photons = pixel::clusters_to_photons(clusters, cfg.camera.calibration(), &diag);
    io::write_photons(out_dir / data_file_name(kClusteredStem, format), photons);
    io::write_text_atomic(out_dir / "cluster_diagnostics.txt",
                          fmt::format("hits = {}\nclusters = {}\ntimewalk_clamped = {}\ntimewalk_extrapolated = {}\n",
                                      hits.size(), clusters.size(), diag.clamped, diag.extrapolated));
    return diag;
}

void cmd_analyze(const config::RunConfig& cfg, const std::filesystem::path& in, const std::filesystem::path& out_dir,
                 const std::optional<std::filesystem::path>& truth) {
    cfg.validate();
    const auto photons = io::read_photons(in);
    std::optional<sim::Trajectories> traj;
    if (truth) traj = analysis::read_trajectories(*truth);
    const auto res = analysis::analyze_photons(cfg, photons, traj ? &*traj : nullptr);
    analysis::write_analysis(res, out_dir);
}

void cmd_crosstalk(const config::RunConfig& cfg, const std::filesystem::path& in, const std::filesystem::path& out_dir) {
    cfg.validate();
    const auto photons = io::read_photons(in);
    ensure_dir(out_dir);
    const auto sites = sim::ion_sites(cfg.chain);
    const auto times = segmenter::assign_to_roi(photons, sites, cfg.segmenter.roi_half);
    const std::size_t n = times.size();

    std::string narrow = "pair,bin_center_ns,count\n";
    std::string wide = "pair,bin_center_ns,count\n";
    std::string ap = "pair,status,n_source,amplitude,amplitude_err,sigma_ns,sigma_err,center_ns,center_err,baseline,"
                     "chi2_reduced,probability,upper_bound\n";
    std::string sum;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto hn = crosstalk::coincidence_histogram(times[i], times[i + 1], 50.0, kTickNs);
        const auto hw = crosstalk::coincidence_histogram(times[i], times[i + 1], 2.0e5, 1000.0);
        for (std::int64_t k = -hn.half_bins; k <= hn.half_bins; ++k)
            narrow += fmt::format("{}-{},{},{}\n", i, i + 1, g(hn.bin_center_ns(k)), hn.at(k));
        for (std::int64_t k = -hw.half_bins; k <= hw.half_bins; ++k)
            wide += fmt::format("{}-{},{},{}\n", i, i + 1, g(hw.bin_center_ns(k)), hw.at(k));
        const std::uint64_t n_source = times[i].size() + times[i + 1].size();
        crosstalk::PeakFit fit;
        try {
            fit = crosstalk::fit_peak(hn);
        } catch (const StatisticsError&) {
            fit.status = crosstalk::FitStatus::Failed;
        }
        std::optional<crosstalk::AfterpulseEstimate> est;
        if (fit.status != crosstalk::FitStatus::Failed && n_source > 0)
            est = crosstalk::afterpulse_probability(hn, fit, n_source);
        ap += fmt::format("{}-{},{},{},{},{},{},{},{},{},{},{},{},{}\n", i, i + 1, crosstalk::to_string(fit.status),
                          n_source, g(fit.amplitude), g(fit.amplitude_err), g(fit.sigma_ns), g(fit.sigma_err),
                          g(fit.center_ns), g(fit.center_err), g(fit.baseline), g(fit.chi2_reduced),
                          est ? g(est->probability) : "", est ? g(est->upper_bound) : "");
        sum += fmt::format("pair{}-{}.fit_status = {}\n", i, i + 1, crosstalk::to_string(fit.status));
        sum += fmt::format("pair{}-{}.sigma_ns = {}\n", i, i + 1, g(fit.sigma_ns));
        if (est) {
            sum += fmt::format("pair{}-{}.afterpulse_probability = {}\n", i, i + 1, g(est->probability));
            // Fake-hit rate a bright neighbor injects at the configured bright rate.
            sum += fmt::format("pair{}-{}.afterpulse_rate_at_bright_per_s = {}\n", i, i + 1,
                               g(est->probability * cfg.chain.rate_bright));
        }
    }
    io::write_text_atomic(out_dir / "coincidence_narrow.csv", narrow);
    io::write_text_atomic(out_dir / "coincidence_wide.csv", wide);
    io::write_text_atomic(out_dir / "afterpulse.csv", ap);

    // Afterpulses would otherwise inflate the leakage into dark neighbors.
    const auto gated = cfg.analysis.veto ? analysis::apply_veto(times, cfg.analysis.veto_window_ns) : times;
    std::vector<std::vector<segmenter::StateInterval>> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = segmenter::segment_states(static_cast<int>(i), gated[i], cfg.segmenter);
    const auto m = crosstalk::optical_crosstalk_matrix(gated, labels);
    std::string mat = "source_ion,roi_ion,fraction,defined,exposure_s,roi_background_per_s\n";
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n; ++j) {
            mat += fmt::format("{},{},{},{},{},{}\n", i, j, m.is_defined(i, j) ? g(m.at(i, j)) : "",
                               m.is_defined(i, j) ? 1 : 0, g(m.exposure_s[static_cast<std::size_t>(i)]),
                               m.dark_exposure_s > 0.0 ? g(m.background_per_s[static_cast<std::size_t>(j)]) : "");
            if (i != j && std::abs(i - j) == 1 && m.is_defined(i, j))
                sum += fmt::format("crosstalk.{}->{} = {}\n", i, j, g(m.at(i, j)));
        }
    io::write_text_atomic(out_dir / "crosstalk_matrix.csv", mat);
    io::write_text_atomic(out_dir / "summary_crosstalk.txt", sum);
}

void cmd_report(const std::filesystem::path& dir, std::ostream& out) {
    bool any = false;
    for (const char* name : {"summary.txt", "summary_crosstalk.txt"}) {
        const auto p = dir / name;
        if (!std::filesystem::is_regular_file(p)) continue;
        std::ifstream f(p);
        if (!f) throw IoError("cannot open " + p.string());
        out << "# " << name << "\n" << f.rdbuf();
        any = true;
    }
    if (!any) throw IoError("no report summaries in " + dir.string());
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Trapped-ion readout simulator and photon-stream analysis"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string in_path;
    std::string truth_path;
    std::string format = "bin";
    std::string t_int;
    std::string veto;

    auto add_common = [&](CLI::App* sc, bool with_out) {
        sc->add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
        sc->add_option("--seed", seed, "Override the configured seed");
        if (with_out) sc->add_option("--out", out_dir, "Output directory")->required();
    };
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate trajectories and the photon stream");
    add_common(sim_cmd, true);
    auto* ras_cmd = app.add_subcommand("rasterize", "Photons to raw pixel hits");
    auto* clu_cmd = app.add_subcommand("cluster", "Pixel hits to centroided photons");
    auto* ana_cmd = app.add_subcommand("analyze", "Segmentation, histograms and error report");
    auto* xt_cmd = app.add_subcommand("crosstalk", "Afterpulse and optical crosstalk analysis");
    for (auto* sc : {ras_cmd, clu_cmd, ana_cmd, xt_cmd}) {
        add_common(sc, true);
        sc->add_option("--in", in_path, "Input event file")->required()->check(CLI::ExistingFile);
    }
    for (auto* sc : {sim_cmd, ras_cmd, clu_cmd})
        sc->add_option("--format", format, "Output format")->check(CLI::IsMember({"bin", "csv"}));
    ana_cmd->add_option("--truth", truth_path, "Truth segments CSV from simulate")->check(CLI::ExistingFile);
    ana_cmd->add_option("--t-int", t_int, "Comma-separated integration times in ms");
    ana_cmd->add_option("--veto", veto, "Afterpulse veto")->check(CLI::IsMember({"on", "off"}));
    auto* rep_cmd = app.add_subcommand("report", "Print the summaries of a report directory");
    rep_cmd->add_option("--in", in_path, "Report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, eo;
        const int rc = app.exit(e, o, eo);
        out << o.str();
        err << eo.str();
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (rep_cmd->parsed()) {
            cmd_report(in_path, out);
            return kOk;
        }
        config::RunConfig cfg = config_path.empty() ? config::RunConfig{} : config::load_config(config_path);
        if (config_path.empty()) cfg.camera.seed = cfg.chain.seed;
        if (seed) cfg.set_seed(*seed);
        if (!t_int.empty()) cfg.analysis.t_int_ms = parse_ms_list(t_int);
        if (!veto.empty()) cfg.analysis.veto = veto == "on";
        cfg.validate();
        const auto fmt_out = format == "csv" ? io::FileFormat::Csv : io::FileFormat::Binary;
        if (sim_cmd->parsed()) {
            const auto st = cmd_simulate(cfg, out_dir, fmt_out);
            out << fmt::format("simulated {} photons ({} afterpulses)\n", st.photons, st.afterpulses);
        } else if (ras_cmd->parsed()) {
            const auto d = cmd_rasterize(cfg, in_path, out_dir, fmt_out);
            out << fmt::format("rasterized {} photons ({} out of bounds, {} dead-time drops)\n", d.photons,
                               d.out_of_bounds, d.dead_time_drops);
        } else if (clu_cmd->parsed()) {
            const auto d = cmd_cluster(cfg, in_path, out_dir, fmt_out);
            out << fmt::format("clustered ({} time-walk clamps)\n", d.clamped);
        } else if (ana_cmd->parsed()) {
            cmd_analyze(cfg, in_path, out_dir,
                        truth_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(truth_path));
            out << "analysis written to " << out_dir << "\n";
        } else if (xt_cmd->parsed()) {
            cmd_crosstalk(cfg, in_path, out_dir);
            out << "crosstalk analysis written to " << out_dir << "\n";
        }
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

} // namespace ionreadout::cli
