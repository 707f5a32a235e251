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
#include <map>
#include <optional>
#include <vector>

#include "ionreadout/segmenter.hpp"

namespace ionreadout::discriminator {

struct CountHistogram {
    std::map<std::int64_t, std::uint64_t> counts;
    std::uint64_t total = 0;
    double t_int = 0.0;
    /// Fewer occurrences than the requested minimum.
    bool low_statistics = false;

    void add(std::int64_t n, std::uint64_t times = 1);
    double mean() const;
};

struct IonHistograms {
    std::optional<CountHistogram> dark;
    std::optional<CountHistogram> bright;
};

inline constexpr std::uint64_t kDefaultMinWindows = 50'000;

/// Per-ion dark/bright histograms. A state without windows has no histogram.
std::vector<IonHistograms> build_histograms(const std::vector<segmenter::CountWindow>& windows, int n_ions,
                                            std::uint64_t min_windows = kDefaultMinWindows);

struct RateEstimate {
    double lambda = 0.0;
    /// Chi-square against the fitted Poisson pmf, bins pooled to expected >= 5.
    double chi2 = 0.0;
    int dof = 0;
    /// NaN when dof < 1.
    double p_value = 0.0;
    int bins = 0;
};

RateEstimate estimate_rate(const CountHistogram& hist);

enum class ThresholdRounding { Floor, HalfUp };

/// Real n where the two Poisson pmfs (continued in n) are equal.
double threshold_crossing(double lambda_d, double lambda_b);

/// Integer threshold from the crossing. Floor (the default) gives the integer that minimizes the
/// summed error; HalfUp rounds to nearest.
int optimal_threshold(double lambda_d, double lambda_b, ThresholdRounding rounding = ThresholdRounding::Floor);

struct DiscriminationErrors {
    double eps_d = 0.0;
    double eps_b = 0.0;
    double eps_disc = 0.0;
};

/// Counts above n_tr read as bright.
DiscriminationErrors discrimination_error(double lambda_d, double lambda_b, std::int64_t n_tr);

/// Dark-state count pmf when the ion may decay to bright at a uniform time inside the window.
double decay_pdf(std::int64_t n, double nbar_d, double nbar_b, double t_int, double tau);

struct DecayError {
    double eps_decay = 0.0;
    double decay_probability = 0.0;
};

DecayError decay_error(std::int64_t n_tr, double nbar_d, double nbar_b, double t_int, double tau);

struct DiscriminationResult {
    double lambda_d = 0.0;
    double lambda_b = 0.0;
    int n_tr = 0;
    double eps_d = 0.0;
    double eps_b = 0.0;
    double eps_disc = 0.0;
    double eps_disc_lo = 0.0;  // threshold n_tr - 1
    double eps_disc_hi = 0.0;  // threshold n_tr + 1
    double eps_decay = 0.0;
    double decay_probability = 0.0;
    double eps_total = 0.0;
};

DiscriminationResult evaluate(double lambda_d, double lambda_b, double t_int, double tau,
                              ThresholdRounding rounding = ThresholdRounding::Floor);

struct ChainReport {
    std::vector<DiscriminationResult> ions;
    double fidelity_chain = 1.0;
    double eps_chain = 0.0;
};

ChainReport build_chain_report(const std::vector<DiscriminationResult>& ions);

/// Product fidelity from per-ion errors.
double chain_fidelity(const std::vector<double>& eps);

} // namespace ionreadout::discriminator
