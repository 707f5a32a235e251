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
#include <filesystem>
#include <string>
#include <vector>

#include "ionreadout/pixel.hpp"
#include "ionreadout/sim.hpp"

namespace ionreadout::io {

/// Binary container: 16-byte header ("IONE", u16 version, u16 kind, f64 tick_ns), then fixed-width
/// little-endian records. CSV files (".csv") hold the same fields, one record per line.
enum class RecordKind : std::uint16_t { PixelHit = 0, Photon = 1 };

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::size_t kPixelHitBytes = 16;
inline constexpr std::size_t kPhotonBytes = 20;

enum class FileFormat { Binary, Csv };

/// Csv for a ".csv" extension, Binary otherwise.
FileFormat format_for_path(const std::filesystem::path& path);

/// Rejects records not sorted by time (DomainError). Writes atomically (temp file + rename).
void write_hits(const std::filesystem::path& path, const std::vector<pixel::PixelHit>& hits);
void write_photons(const std::filesystem::path& path, const std::vector<sim::PhotonEvent>& photons);

std::vector<pixel::PixelHit> read_hits(const std::filesystem::path& path);
std::vector<sim::PhotonEvent> read_photons(const std::filesystem::path& path);

/// Record kind stored in a file (header for binary, column row for CSV).
RecordKind peek_kind(const std::filesystem::path& path);

/// Writes text through a temp file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

/// In-memory encoders, used by the file functions.
std::string encode_hits_binary(const std::vector<pixel::PixelHit>& hits);
std::string encode_photons_binary(const std::vector<sim::PhotonEvent>& photons);
std::vector<pixel::PixelHit> decode_hits_binary(const std::string& bytes);
std::vector<sim::PhotonEvent> decode_photons_binary(const std::string& bytes);

} // namespace ionreadout::io
