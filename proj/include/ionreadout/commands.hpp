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

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ionreadout/config.hpp"
#include "ionreadout/event_io.hpp"

namespace ionreadout::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kConfig = 3, kParse = 4, kStatistics = 5, kIo = 6 };

/// Exit status for an exception escaping a command.
int exit_code_for(const std::exception& e);

struct SimulateStats {
    std::uint64_t photons = 0;
    std::uint64_t afterpulses = 0;
};

/// Every command writes fixed file names inside `out_dir`.
SimulateStats cmd_simulate(const config::RunConfig& cfg, const std::filesystem::path& out_dir, io::FileFormat format);
pixel::RasterDiagnostics cmd_rasterize(const config::RunConfig& cfg, const std::filesystem::path& in,
                                       const std::filesystem::path& out_dir, io::FileFormat format);
pixel::TimewalkDiagnostics cmd_cluster(const config::RunConfig& cfg, const std::filesystem::path& in,
                                       const std::filesystem::path& out_dir, io::FileFormat format);
void cmd_analyze(const config::RunConfig& cfg, const std::filesystem::path& in, const std::filesystem::path& out_dir,
                 const std::optional<std::filesystem::path>& truth);
void cmd_crosstalk(const config::RunConfig& cfg, const std::filesystem::path& in, const std::filesystem::path& out_dir);
/// Prints the summaries found in `dir`; fails if there are none.
void cmd_report(const std::filesystem::path& dir, std::ostream& out);

/// Output file names.
inline constexpr const char* kPhotonsStem = "photons";
inline constexpr const char* kHitsStem = "hits";
inline constexpr const char* kClusteredStem = "clustered";
inline constexpr const char* kTruthSegments = "truth_segments.csv";

std::string data_file_name(const char* stem, io::FileFormat format);

/// Parses arguments, runs the subcommand, reports errors on `err`; returns the exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace ionreadout::cli
