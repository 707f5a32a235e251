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

#include "ionreadout/crosstalk.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "ionreadout/error.hpp"

namespace ionreadout::crosstalk {

CoincidenceHistogram coincidence_histogram(const std::vector<ticks_t>& times_a, const std::vector<ticks_t>& times_b,
                                           double range_ns, double bin_width_ns) {
    if (!(bin_width_ns > 0.0) || !(range_ns >= 0.0)) throw DomainError("coincidence: bad range or bin width");
    const double ratio = range_ns / bin_width_ns;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
        throw DomainError("coincidence: range must be a multiple of the bin width");
    if (!std::is_sorted(times_a.begin(), times_a.end()) || !std::is_sorted(times_b.begin(), times_b.end()))
        throw DomainError("coincidence: inputs must be sorted");

    CoincidenceHistogram h;
    h.bin_width_ns = bin_width_ns;
    h.range_ns = range_ns;
    h.half_bins = std::llround(ratio);
    h.bins.assign(static_cast<std::size_t>(2 * h.half_bins + 1), 0);
    h.n_photons_a = times_a.size();
    h.n_photons_b = times_b.size();

    const auto max_dt = static_cast<ticks_t>(std::floor(range_ns / kTickNs + 1e-9));
    std::size_t lo = 0;
    for (const ticks_t ta : times_a) {
        while (lo < times_b.size() && times_b[lo] < ta - max_dt) ++lo;
        for (std::size_t j = lo; j < times_b.size() && times_b[j] <= ta + max_dt; ++j) {
            const ticks_t dt = times_b[j] - ta;
            std::int64_t k = std::lround(ticks_to_ns(dt) / bin_width_ns);
            k = std::clamp(k, -h.half_bins, h.half_bins);
            ++h.bins[static_cast<std::size_t>(k + h.half_bins)];
            ++h.n_pairs_total;
        }
    }
    return h;
}

const char* to_string(FitStatus s) {
    switch (s) {
    case FitStatus::Ok: return "ok";
    case FitStatus::NoPeak: return "no_peak";
    case FitStatus::Failed: return "failed";
    }
    return "unknown";
}

namespace {

struct Model {
    // p = (amplitude, center, sigma, baseline)
    static double eval(const Eigen::Vector4d& p, double x) {
        const double z = (x - p[1]) / p[2];
        return p[3] + p[0] * std::exp(-0.5 * z * z);
    }
    static Eigen::Vector4d grad(const Eigen::Vector4d& p, double x) {
        const double z = (x - p[1]) / p[2];
        const double g = std::exp(-0.5 * z * z);
        return {g, p[0] * g * z / p[2], p[0] * g * z * z / p[2], 1.0};
    }
};

} // namespace

PeakFit fit_peak(const CoincidenceHistogram& hist) {
    const std::size_t m = hist.bins.size();
    std::size_t populated = 0;
    for (auto c : hist.bins) populated += c > 0 ? 1 : 0;
    if (populated < 5) throw StatisticsError("fit_peak: fewer than 5 populated bins");

    std::vector<double> x(m), y(m), w(m);
    for (std::size_t i = 0; i < m; ++i) {
        x[i] = hist.bin_center_ns(static_cast<std::int64_t>(i) - hist.half_bins);
        y[i] = static_cast<double>(hist.bins[i]);
        w[i] = 1.0 / std::max(y[i], 1.0);
    }
    std::vector<double> sorted(y);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m / 2), sorted.end());
    const double b0 = sorted[m / 2];
    const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    const double a0 = y[imax] - b0;

    PeakFit fit;
    fit.baseline = b0;
    if (a0 < 3.0 * std::sqrt(std::max(b0, 1.0))) {
        fit.status = FitStatus::NoPeak;
        return fit;
    }
    std::size_t above_half = 0;
    for (double v : y) above_half += (v - b0) >= 0.5 * a0 ? 1 : 0;
    const double s0 = std::max(hist.bin_width_ns, static_cast<double>(above_half) * hist.bin_width_ns / 2.3548);

    Eigen::Vector4d p(a0, x[imax], s0, b0);
    auto chi2_of = [&](const Eigen::Vector4d& q) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double r = y[i] - Model::eval(q, x[i]);
            s += w[i] * r * r;
        }
        return s;
    };
    double chi2 = chi2_of(p);
    double lambda = 1e-3;
    Eigen::Matrix4d jtj;
    int it = 0;
    for (; it < 500; ++it) {
        jtj.setZero();
        Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
        for (std::size_t i = 0; i < m; ++i) {
            const Eigen::Vector4d g = Model::grad(p, x[i]);
            jtj.noalias() += w[i] * g * g.transpose();
            jtr += w[i] * (y[i] - Model::eval(p, x[i])) * g;
        }
        bool accepted = false;
        while (lambda < 1e12) {
            Eigen::Matrix4d a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
            const Eigen::Vector4d step = a.ldlt().solve(jtr);
            Eigen::Vector4d q = p + step;
            q[2] = std::abs(q[2]);
            if (q[2] <= 0.0 || !q.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const double c = chi2_of(q);
            if (c <= chi2) {
                const double rel = (chi2 - c) / std::max(chi2, 1e-300);
                const double step_rel = step.cwiseAbs().maxCoeff() / std::max(1e-12, p.cwiseAbs().maxCoeff());
                p = q;
                chi2 = c;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (rel < 1e-13 || step_rel < 1e-13) lambda = 1e13;  // converged
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted || lambda >= 1e12) break;
    }
    fit.iterations = it + 1;
    if (!p.allFinite() || !(p[2] > 0.0)) {
        fit.status = FitStatus::Failed;
        return fit;
    }
    fit.amplitude = p[0];
    fit.center_ns = p[1];
    fit.sigma_ns = p[2];
    fit.baseline = p[3];
    const int dof = static_cast<int>(m) - 4;
    fit.chi2_reduced = dof > 0 ? chi2 / dof : 0.0;
    jtj.setZero();
    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::Vector4d g = Model::grad(p, x[i]);
        jtj.noalias() += w[i] * g * g.transpose();
    }
    Eigen::FullPivLU<Eigen::Matrix4d> lu(jtj);
    if (lu.isInvertible()) {
        const Eigen::Matrix4d cov = lu.inverse() * fit.chi2_reduced;
        fit.amplitude_err = std::sqrt(std::max(0.0, cov(0, 0)));
        fit.center_err = std::sqrt(std::max(0.0, cov(1, 1)));
        fit.sigma_err = std::sqrt(std::max(0.0, cov(2, 2)));
        fit.baseline_err = std::sqrt(std::max(0.0, cov(3, 3)));
    }
    fit.status = fit.amplitude < 3.0 * std::sqrt(std::max(fit.baseline, 1.0)) ? FitStatus::NoPeak : FitStatus::Ok;
    return fit;
}

AfterpulseEstimate afterpulse_probability(const CoincidenceHistogram& hist, const PeakFit& fit,
                                          std::uint64_t n_photons_source) {
    if (n_photons_source == 0) throw DomainError("afterpulse_probability: no source photons");
    if (fit.status == FitStatus::Failed) throw StatisticsError("afterpulse_probability: peak fit failed");
    const auto n = static_cast<double>(n_photons_source);
    AfterpulseEstimate e;
    double sum = 0.0;
    double nb = 0.0;
    for (std::int64_t k = -hist.half_bins; k <= hist.half_bins; ++k) {
        if (fit.status == FitStatus::Ok && std::abs(hist.bin_center_ns(k) - fit.center_ns) > 5.0 * fit.sigma_ns)
            continue;
        sum += static_cast<double>(hist.at(k));
        nb += 1.0;
    }
    e.peak_counts = sum;
    e.baseline_counts = fit.baseline * nb;
    const double excess = std::max(0.0, sum - e.baseline_counts);
    e.upper_bound = (excess + 3.0 * std::sqrt(std::max(sum, 1.0))) / n;
    e.probability = fit.status == FitStatus::Ok ? (sum - e.baseline_counts) / n : 0.0;
    return e;
}

std::vector<bool> veto_keep_mask(const std::vector<ticks_t>& dark, const std::vector<ticks_t>& bright,
                                 double window_ns) {
    if (!(window_ns >= 0.0)) throw DomainError("veto: window must be >= 0");
    const auto half = static_cast<ticks_t>(std::floor(window_ns / 2.0 / kTickNs + 1e-9));
    std::vector<bool> keep(dark.size(), true);
    std::size_t j = 0;
    for (std::size_t i = 0; i < dark.size(); ++i) {
        while (j < bright.size() && bright[j] < dark[i] - half) ++j;
        if (j < bright.size() && bright[j] <= dark[i] + half) keep[i] = false;
    }
    return keep;
}

VetoResult veto_filter(const std::vector<ticks_t>& dark, const std::vector<ticks_t>& bright, double window_ns) {
    const auto keep = veto_keep_mask(dark, bright, window_ns);
    VetoResult r;
    r.kept.reserve(dark.size());
    for (std::size_t i = 0; i < dark.size(); ++i) {
        if (keep[i]) r.kept.push_back(dark[i]);
        else ++r.removed;
    }
    return r;
}

CrosstalkMatrix optical_crosstalk_matrix(const std::vector<std::vector<ticks_t>>& times,
                                         const std::vector<std::vector<segmenter::StateInterval>>& labels) {
    using segmenter::Label;
    if (times.size() != labels.size()) throw DomainError("crosstalk matrix: per-ion inputs differ in size");
    const int n = static_cast<int>(times.size());
    const auto un = static_cast<std::size_t>(n);
    std::vector<std::vector<double>> ts(un);
    for (std::size_t i = 0; i < un; ++i)
        for (auto v : times[i]) ts[i].push_back(ticks_to_seconds(v));

    std::vector<double> edges;
    for (const auto& ivs : labels)
        for (const auto& iv : ivs) {
            edges.push_back(iv.t_start);
            edges.push_back(iv.t_end);
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    // Exposure and per-ROI counts for each observed set of bright ions.
    struct Config {
        double exposure = 0.0;
        std::vector<double> counts;
    };
    std::map<std::vector<bool>, Config> configs;
    std::vector<bool> bright(un);
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        const double a = edges[e];
        const double b = edges[e + 1];
        bool usable = true;
        for (std::size_t i = 0; i < un && usable; ++i) {
            const Label l = segmenter::label_over(labels[i], a, b);
            usable = l != Label::Excluded;
            bright[i] = l == Label::Bright;
        }
        if (!usable) continue;
        auto& c = configs[bright];
        if (c.counts.empty()) c.counts.assign(un, 0.0);
        c.exposure += b - a;
        // Open interval: label edges sit on photons picked with look-ahead, which would bias the rate up.
        for (std::size_t j = 0; j < un; ++j) {
            const auto lo = std::upper_bound(ts[j].begin(), ts[j].end(), a);
            const auto hi = std::lower_bound(lo, ts[j].end(), b);
            c.counts[j] += static_cast<double>(hi - lo);
        }
    }

    CrosstalkMatrix m;
    m.n = n;
    m.value.assign(un * un, 0.0);
    m.defined.assign(un * un, false);
    m.exposure_s.assign(un, 0.0);
    m.background_per_s.assign(un, 0.0);
    std::vector<bool> none(un, false);
    if (const auto it = configs.find(none); it != configs.end() && it->second.exposure > 0.0) {
        m.dark_exposure_s = it->second.exposure;
        for (std::size_t j = 0; j < un; ++j) m.background_per_s[j] = it->second.counts[j] / it->second.exposure;
    }

    for (std::size_t i = 0; i < un; ++i) {
        std::vector<bool> only(un, false);
        only[i] = true;
        const auto it = configs.find(only);
        if (it == configs.end() || !(it->second.exposure > 0.0)) continue;
        const auto& c = it->second;
        m.exposure_s[i] = c.exposure;
        if (!(c.counts[i] > 0.0)) continue;
        for (std::size_t j = 0; j < un; ++j) {
            m.value[i * un + j] = i == j ? 1.0 : c.counts[j] / c.counts[i];
            m.defined[i * un + j] = true;
        }
    }
    return m;
}

} // namespace ionreadout::crosstalk
