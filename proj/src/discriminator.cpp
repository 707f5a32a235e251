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

#include "ionreadout/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "ionreadout/error.hpp"
#include "ionreadout/poisson.hpp"

namespace ionreadout::discriminator {

void CountHistogram::add(std::int64_t n, std::uint64_t times) {
    if (n < 0) throw DomainError("histogram: negative count");
    counts[n] += times;
    total += times;
}

double CountHistogram::mean() const {
    if (total == 0) throw StatisticsError("histogram is empty");
    long double s = 0.0L;
    for (const auto& [n, c] : counts) s += static_cast<long double>(n) * static_cast<long double>(c);
    return static_cast<double>(s / static_cast<long double>(total));
}

std::vector<IonHistograms> build_histograms(const std::vector<segmenter::CountWindow>& windows, int n_ions,
                                            std::uint64_t min_windows) {
    if (n_ions < 0) throw DomainError("build_histograms: negative ion count");
    std::vector<IonHistograms> out(static_cast<std::size_t>(n_ions));
    for (const auto& w : windows) {
        if (w.ion_id < 0 || w.ion_id >= n_ions) throw DomainError("build_histograms: ion index out of range");
        auto& ih = out[static_cast<std::size_t>(w.ion_id)];
        std::optional<CountHistogram>* slot = nullptr;
        if (w.label == segmenter::Label::Dark) slot = &ih.dark;
        else if (w.label == segmenter::Label::Bright) slot = &ih.bright;
        else continue;
        if (!*slot) {
            *slot = CountHistogram{};
            (*slot)->t_int = w.t_int;
        }
        (*slot)->add(w.n);
    }
    for (auto& ih : out)
        for (auto* h : {&ih.dark, &ih.bright})
            if (*h) (*h)->low_statistics = (*h)->total < min_windows;
    return out;
}

RateEstimate estimate_rate(const CountHistogram& hist) {
    if (hist.total == 0) throw StatisticsError("estimate_rate: empty histogram");
    RateEstimate r;
    r.lambda = hist.mean();
    const auto N = static_cast<double>(hist.total);
    const std::int64_t n_max = hist.counts.rbegin()->first;

    struct Bin {
        double obs;
        double exp;
    };
    std::vector<Bin> bins;
    Bin cur{0.0, 0.0};
    for (std::int64_t n = 0; n <= n_max; ++n) {
        auto it = hist.counts.find(n);
        cur.obs += it == hist.counts.end() ? 0.0 : static_cast<double>(it->second);
        cur.exp += N * poisson::pmf(n, r.lambda);
        if (cur.exp >= 5.0) {
            bins.push_back(cur);
            cur = {0.0, 0.0};
        }
    }
    cur.exp += N * poisson::sf(n_max, r.lambda);
    if (cur.exp >= 5.0 || bins.empty()) {
        bins.push_back(cur);
    } else {
        bins.back().obs += cur.obs;
        bins.back().exp += cur.exp;
    }
    for (const auto& b : bins)
        if (b.exp > 0.0) r.chi2 += (b.obs - b.exp) * (b.obs - b.exp) / b.exp;
    r.bins = static_cast<int>(bins.size());
    r.dof = r.bins - 2;
    r.p_value = r.dof >= 1 ? boost::math::gamma_q(0.5 * r.dof, 0.5 * r.chi2) : std::numeric_limits<double>::quiet_NaN();
    return r;
}

double threshold_crossing(double lambda_d, double lambda_b) {
    if (!(lambda_d > 0.0) || !(lambda_b > lambda_d) || !std::isfinite(lambda_b))
        throw DomainError("threshold: degenerate separation, need 0 < lambda_d < lambda_b");
    return (lambda_b - lambda_d) / std::log(lambda_b / lambda_d);
}

int optimal_threshold(double lambda_d, double lambda_b, ThresholdRounding rounding) {
    const double x = threshold_crossing(lambda_d, lambda_b);
    return static_cast<int>(rounding == ThresholdRounding::Floor ? std::floor(x) : std::floor(x + 0.5));
}

DiscriminationErrors discrimination_error(double lambda_d, double lambda_b, std::int64_t n_tr) {
    if (n_tr < 0) throw DomainError("discrimination_error: n_tr must be >= 0");
    DiscriminationErrors e;
    e.eps_d = poisson::sf(n_tr, lambda_d);
    e.eps_b = poisson::cdf(n_tr, lambda_b);
    e.eps_disc = 0.5 * (e.eps_d + e.eps_b);
    return e;
}

namespace {

void check_decay_args(double nbar_d, double nbar_b, double t_int, double tau) {
    if (!(nbar_d >= 0.0) || !(nbar_b > nbar_d) || !std::isfinite(nbar_b))
        throw DomainError("decay: degenerate rates, need 0 <= nbar_d < nbar_b");
    if (!(tau > 0.0)) throw DomainError("decay: tau must be > 0");
    if (!(t_int >= 0.0) || !(t_int < tau)) throw DomainError("decay: need 0 <= t_int < tau");
}

// [P(X_b > n) - P(X_d > n)] / (nbar_b - nbar_d), taken from the smaller tails.
double mixture_term(std::int64_t n, double nbar_d, double nbar_b) {
    const double sb = poisson::sf(n, nbar_b);
    double diff = 0.0;
    if (sb <= 0.5) diff = sb - poisson::sf(n, nbar_d);
    else diff = poisson::cdf(n, nbar_d) - poisson::cdf(n, nbar_b);
    return std::max(0.0, diff) / (nbar_b - nbar_d);
}

} // namespace

double decay_pdf(std::int64_t n, double nbar_d, double nbar_b, double t_int, double tau) {
    check_decay_args(nbar_d, nbar_b, t_int, tau);
    if (n < 0) return 0.0;
    const double f = t_int / tau;
    return (1.0 - f) * poisson::pmf(n, nbar_d) + f * mixture_term(n, nbar_d, nbar_b);
}

DecayError decay_error(std::int64_t n_tr, double nbar_d, double nbar_b, double t_int, double tau) {
    check_decay_args(nbar_d, nbar_b, t_int, tau);
    if (n_tr < 0) throw DomainError("decay_error: n_tr must be >= 0");
    const double f = t_int / tau;
    const auto n_stop = static_cast<std::int64_t>(nbar_b + 50.0 * std::sqrt(nbar_b) + 100.0);
    double sum = 0.0;
    for (std::int64_t n = n_tr + 1; n <= std::max(n_stop, n_tr + 1); ++n) {
        const double term = mixture_term(n, nbar_d, nbar_b);
        sum += term;
        if (static_cast<double>(n) > nbar_b && term < sum * 1e-18) break;
    }
    return {0.5 * f * sum, f};
}

DiscriminationResult evaluate(double lambda_d, double lambda_b, double t_int, double tau, ThresholdRounding rounding) {
    DiscriminationResult r;
    r.lambda_d = lambda_d;
    r.lambda_b = lambda_b;
    r.n_tr = optimal_threshold(lambda_d, lambda_b, rounding);
    const auto e = discrimination_error(lambda_d, lambda_b, r.n_tr);
    r.eps_d = e.eps_d;
    r.eps_b = e.eps_b;
    r.eps_disc = e.eps_disc;
    r.eps_disc_lo = discrimination_error(lambda_d, lambda_b, std::max(0, r.n_tr - 1)).eps_disc;
    r.eps_disc_hi = discrimination_error(lambda_d, lambda_b, r.n_tr + 1).eps_disc;
    const auto d = decay_error(r.n_tr, lambda_d, lambda_b, t_int, tau);
    r.eps_decay = d.eps_decay;
    r.decay_probability = d.decay_probability;
    r.eps_total = r.eps_disc + r.eps_decay;
    return r;
}

namespace {

// Sum of log(1 - eps_i); keeps 1 - fidelity accurate for tiny errors.
double log_fidelity(const std::vector<double>& eps) {
    if (eps.empty()) throw DomainError("chain report: no ions");
    double s = 0.0;
    for (double e : eps) {
        if (!(e >= 0.0 && e <= 1.0)) throw DomainError("chain report: error probability outside [0,1]");
        s += std::log1p(-e);
    }
    return s;
}

} // namespace

double chain_fidelity(const std::vector<double>& eps) { return std::exp(log_fidelity(eps)); }

ChainReport build_chain_report(const std::vector<DiscriminationResult>& ions) {
    std::vector<double> eps;
    eps.reserve(ions.size());
    for (const auto& r : ions) eps.push_back(r.eps_total);
    const double lf = log_fidelity(eps);
    ChainReport c;
    c.ions = ions;
    c.fidelity_chain = std::exp(lf);
    c.eps_chain = -std::expm1(lf);
    return c;
}

} // namespace ionreadout::discriminator
