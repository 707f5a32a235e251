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

#include "ionreadout/poisson.hpp"

#include <cmath>
#include <limits>

#include "ionreadout/error.hpp"

namespace ionreadout::poisson {

namespace {

void check(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("poisson: lambda must be finite and >= 0");
}

// Sum_{k=0..n} P(k), walking down from k = n. Assumes n < lambda (terms shrink going down).
double lower_tail(std::int64_t n, double lambda) {
    double term = std::exp(log_pmf(n, lambda));
    double sum = 0.0;
    for (std::int64_t k = n; k >= 0; --k) {
        sum += term;
        if (term < sum * 1e-18) break;
        term *= static_cast<double>(k) / lambda;
    }
    return sum;
}

// Sum_{k>n} P(k), walking up from k = n + 1. Assumes n + 1 >= lambda.
double upper_tail(std::int64_t n, double lambda) {
    double term = std::exp(log_pmf(n + 1, lambda));
    double sum = 0.0;
    for (std::int64_t k = n + 1;; ++k) {
        sum += term;
        term *= lambda / static_cast<double>(k + 1);
        if (term < sum * 1e-18 || term == 0.0) break;
    }
    return sum;
}

} // namespace

double log_pmf(std::int64_t n, double lambda) {
    check(lambda);
    if (n < 0) return -std::numeric_limits<double>::infinity();
    if (lambda == 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    const auto dn = static_cast<double>(n);
    return dn * std::log(lambda) - lambda - std::lgamma(dn + 1.0);
}

double pmf(std::int64_t n, double lambda) { return std::exp(log_pmf(n, lambda)); }

double cdf(std::int64_t n, double lambda) {
    check(lambda);
    if (n < 0) return 0.0;
    if (lambda == 0.0) return 1.0;
    if (static_cast<double>(n) < lambda) return lower_tail(n, lambda);
    return 1.0 - upper_tail(n, lambda);
}

double sf(std::int64_t n, double lambda) {
    check(lambda);
    if (n < 0) return 1.0;
    if (lambda == 0.0) return 0.0;
    if (static_cast<double>(n) < lambda) return 1.0 - lower_tail(n, lambda);
    return upper_tail(n, lambda);
}

} // namespace ionreadout::poisson
