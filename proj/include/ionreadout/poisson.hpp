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

namespace ionreadout::poisson {

/// log P(X = n) for X ~ Poisson(lambda); -inf where the probability is zero.
double log_pmf(std::int64_t n, double lambda);
double pmf(std::int64_t n, double lambda);

/// P(X <= n) and P(X > n). Each is accumulated from whichever tail is smaller, by recurrence
/// from a single log-space term, so both keep full relative precision deep in the tails.
double cdf(std::int64_t n, double lambda);
double sf(std::int64_t n, double lambda);

} // namespace ionreadout::poisson
