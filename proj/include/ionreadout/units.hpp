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

#include <cmath>
#include <cstdint>

namespace ionreadout {

/// Camera time stamps are integer ticks of the 640 MHz clock.
using ticks_t = std::int64_t;

inline constexpr double kTickNs = 1.5625;
inline constexpr double kTickSeconds = kTickNs * 1e-9;

/// ToT counter unit of the pixel electronics.
inline constexpr double kTotUnitNs = 25.0;

inline constexpr int kSensorSize = 256;

inline constexpr double ticks_to_seconds(ticks_t t) { return static_cast<double>(t) * kTickSeconds; }
inline constexpr double ticks_to_ns(ticks_t t) { return static_cast<double>(t) * kTickNs; }

inline ticks_t seconds_to_ticks(double s) { return std::llround(s / kTickSeconds); }
inline ticks_t ns_to_ticks(double ns) { return std::llround(ns / kTickNs); }

/// Pixel whose center is nearest to a sub-pixel coordinate (pixel centers sit on integers).
inline int pixel_of(double coord) { return static_cast<int>(std::floor(coord + 0.5)); }

} // namespace ionreadout
