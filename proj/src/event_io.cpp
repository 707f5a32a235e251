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

#include "ionreadout/event_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <unistd.h>

#include "ionreadout/error.hpp"

namespace ionreadout::io {

namespace {

constexpr char kMagic[4] = {'I', 'O', 'N', 'E'};
constexpr const char* kHitColumns = "toa_ticks,col,row,tot";
constexpr const char* kPhotonColumns = "toa_ticks,x,y,truth_ion,truth_kind";

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t off) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_le(out, u);
}

float get_f32(const std::string& in, std::size_t off) {
    const auto u = get_le<std::uint32_t>(in, off);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

void put_header(std::string& out, RecordKind kind) {
    out.append(kMagic, 4);
    put_le(out, kFormatVersion);
    put_le(out, static_cast<std::uint16_t>(kind));
    double tick = kTickNs;
    std::uint64_t u;
    std::memcpy(&u, &tick, 8);
    put_le(out, u);
}

RecordKind check_header(const std::string& in) {
    if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) throw ParseError("bad magic, not an event file", 0);
    if (in.size() < kHeaderBytes) throw ParseError("truncated header", in.size());
    const auto version = get_le<std::uint16_t>(in, 4);
    if (version != kFormatVersion) throw ParseError(fmt::format("unsupported format version {}", version), 4);
    const auto kind = get_le<std::uint16_t>(in, 6);
    if (kind > 1) throw ParseError(fmt::format("unknown record kind {}", kind), 6);
    const auto u = get_le<std::uint64_t>(in, 8);
    double tick;
    std::memcpy(&tick, &u, 8);
    if (tick != kTickNs) throw ParseError(fmt::format("unsupported tick size {} ns", tick), 8);
    return static_cast<RecordKind>(kind);
}

template <typename T>
void require_sorted(const std::vector<T>& v, ticks_t (*time)(const T&)) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (time(v[i]) < 0) throw DomainError(fmt::format("record {} has a negative time", i));
        if (i > 0 && time(v[i]) < time(v[i - 1]))
            throw DomainError(fmt::format("records not sorted by time at index {}", i));
    }
}

ticks_t hit_time(const pixel::PixelHit& h) { return h.toa_ticks; }
ticks_t photon_time(const sim::PhotonEvent& p) { return p.t_ticks; }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) throw IoError("read failed: " + path.string());
    return std::move(ss).str();
}

std::string truth_kind_code(const std::optional<sim::PhotonTruth>& t) {
    return t ? std::to_string(static_cast<int>(t->kind)) : "0";
}

std::optional<sim::PhotonTruth> decode_truth(int ion, int kind, std::uint64_t where, const char* unit) {
    if (kind == 0) {
        if (ion != -1) throw ParseError("truth ion set without truth kind", where, unit);
        return std::nullopt;
    }
    if (kind < 1 || kind > 4) throw ParseError(fmt::format("bad truth kind {}", kind), where, unit);
    if (ion < 0) throw ParseError("truth kind set without truth ion", where, unit);
    return sim::PhotonTruth{static_cast<std::int16_t>(ion), static_cast<sim::PhotonKind>(kind)};
}

// --- CSV ---------------------------------------------------------------------

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto p = line.find(',', start);
        out.push_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
        if (p == std::string_view::npos) break;
        start = p + 1;
    }
    return out;
}

template <typename T>
T parse_num(std::string_view s, std::uint64_t line) {
    T v{};
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) throw ParseError(fmt::format("bad number '{}'", s), line, "line");
    return v;
}

struct CsvLines {
    std::string text;
    std::vector<std::string_view> lines;

    explicit CsvLines(std::string t) : text(std::move(t)) {
        std::string_view all(text);
        std::size_t start = 0;
        while (start < all.size()) {
            auto p = all.find('\n', start);
            if (p == std::string_view::npos) p = all.size();
            auto line = all.substr(start, p - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            start = p + 1;
        }
    }
};

RecordKind csv_kind(std::string_view header) {
    if (header == kHitColumns) return RecordKind::PixelHit;
    if (header == kPhotonColumns) return RecordKind::Photon;
    throw ParseError(fmt::format("unrecognized CSV header '{}'", header), 1, "line");
}

} // namespace

FileFormat format_for_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".csv" ? FileFormat::Csv : FileFormat::Binary;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += fmt::format(".tmp{}", static_cast<long>(::getpid()));
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        f.flush();
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

std::string encode_hits_binary(const std::vector<pixel::PixelHit>& hits) {
    require_sorted(hits, &hit_time);
    std::string out;
    out.reserve(kHeaderBytes + hits.size() * kPixelHitBytes);
    put_header(out, RecordKind::PixelHit);
    for (const auto& h : hits) {
        put_le(out, static_cast<std::uint64_t>(h.toa_ticks));
        put_le(out, h.col);
        put_le(out, h.row);
        put_le(out, h.tot);
        put_le(out, std::uint16_t{0});
    }
    return out;
}

std::string encode_photons_binary(const std::vector<sim::PhotonEvent>& photons) {
    require_sorted(photons, &photon_time);
    std::string out;
    out.reserve(kHeaderBytes + photons.size() * kPhotonBytes);
    put_header(out, RecordKind::Photon);
    for (const auto& p : photons) {
        put_le(out, static_cast<std::uint64_t>(p.t_ticks));
        put_f32(out, p.x);
        put_f32(out, p.y);
        put_le(out, static_cast<std::uint16_t>(p.truth ? p.truth->source_ion : std::int16_t{-1}));
        put_le(out, static_cast<std::uint8_t>(p.truth ? static_cast<std::uint8_t>(p.truth->kind) : 0));
        put_le(out, std::uint8_t{0});
    }
    return out;
}

std::vector<pixel::PixelHit> decode_hits_binary(const std::string& bytes) {
    if (check_header(bytes) != RecordKind::PixelHit) throw ParseError("file holds photons, expected pixel hits", 6);
    const std::size_t body = bytes.size() - kHeaderBytes;
    const std::size_t n = body / kPixelHitBytes;
    if (body % kPixelHitBytes != 0) throw ParseError("truncated record", kHeaderBytes + n * kPixelHitBytes);
    std::vector<pixel::PixelHit> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = kHeaderBytes + i * kPixelHitBytes;
        const auto toa = get_le<std::uint64_t>(bytes, off);
        pixel::PixelHit h{static_cast<ticks_t>(toa), get_le<std::uint16_t>(bytes, off + 8),
                          get_le<std::uint16_t>(bytes, off + 10), get_le<std::uint16_t>(bytes, off + 12)};
        if (toa > static_cast<std::uint64_t>(std::numeric_limits<ticks_t>::max()))
            throw ParseError("time stamp out of range", off);
        if (h.col >= kSensorSize || h.row >= kSensorSize) throw ParseError("pixel outside the sensor", off + 8);
        if (h.tot == 0) throw ParseError("zero ToT", off + 12);
        if (!out.empty() && h.toa_ticks < out.back().toa_ticks) throw ParseError("records not sorted by time", off);
        out.push_back(h);
    }
    return out;
}

std::vector<sim::PhotonEvent> decode_photons_binary(const std::string& bytes) {
    if (check_header(bytes) != RecordKind::Photon) throw ParseError("file holds pixel hits, expected photons", 6);
    const std::size_t body = bytes.size() - kHeaderBytes;
    const std::size_t n = body / kPhotonBytes;
    if (body % kPhotonBytes != 0) throw ParseError("truncated record", kHeaderBytes + n * kPhotonBytes);
    std::vector<sim::PhotonEvent> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = kHeaderBytes + i * kPhotonBytes;
        const auto toa = get_le<std::uint64_t>(bytes, off);
        if (toa > static_cast<std::uint64_t>(std::numeric_limits<ticks_t>::max()))
            throw ParseError("time stamp out of range", off);
        sim::PhotonEvent p;
        p.t_ticks = static_cast<ticks_t>(toa);
        p.x = get_f32(bytes, off + 8);
        p.y = get_f32(bytes, off + 12);
        const auto ion = static_cast<std::int16_t>(get_le<std::uint16_t>(bytes, off + 16));
        const auto kind = static_cast<unsigned char>(bytes[off + 18]);
        p.truth = decode_truth(ion, kind, off + 16, "byte offset");
        if (!out.empty() && p.t_ticks < out.back().t_ticks) throw ParseError("records not sorted by time", off);
        out.push_back(p);
    }
    return out;
}

void write_hits(const std::filesystem::path& path, const std::vector<pixel::PixelHit>& hits) {
    if (format_for_path(path) == FileFormat::Binary) {
        write_text_atomic(path, encode_hits_binary(hits));
        return;
    }
    require_sorted(hits, &hit_time);
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "{}\n", kHitColumns);
    for (const auto& h : hits) fmt::format_to(std::back_inserter(buf), "{},{},{},{}\n", h.toa_ticks, h.col, h.row, h.tot);
    write_text_atomic(path, fmt::to_string(buf));
}

void write_photons(const std::filesystem::path& path, const std::vector<sim::PhotonEvent>& photons) {
    if (format_for_path(path) == FileFormat::Binary) {
        write_text_atomic(path, encode_photons_binary(photons));
        return;
    }
    require_sorted(photons, &photon_time);
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "{}\n", kPhotonColumns);
    for (const auto& p : photons)
        fmt::format_to(std::back_inserter(buf), "{},{:.9g},{:.9g},{},{}\n", p.t_ticks, p.x, p.y,
                       p.truth ? p.truth->source_ion : -1, truth_kind_code(p.truth));
    write_text_atomic(path, fmt::to_string(buf));
}

std::vector<pixel::PixelHit> read_hits(const std::filesystem::path& path) {
    if (format_for_path(path) == FileFormat::Binary) return decode_hits_binary(read_file(path));
    const CsvLines csv(read_file(path));
    if (csv.lines.empty()) throw ParseError("empty CSV file", 1, "line");
    if (csv_kind(csv.lines[0]) != RecordKind::PixelHit) throw ParseError("CSV holds photons, expected pixel hits", 1, "line");
    std::vector<pixel::PixelHit> out;
    for (std::size_t i = 1; i < csv.lines.size(); ++i) {
        const auto line_no = i + 1;
        if (csv.lines[i].empty()) continue;
        const auto f = split(csv.lines[i]);
        if (f.size() != 4) throw ParseError("expected 4 fields", line_no, "line");
        pixel::PixelHit h{parse_num<ticks_t>(f[0], line_no), parse_num<std::uint16_t>(f[1], line_no),
                          parse_num<std::uint16_t>(f[2], line_no), parse_num<std::uint16_t>(f[3], line_no)};
        if (h.toa_ticks < 0) throw ParseError("negative time", line_no, "line");
        if (h.col >= kSensorSize || h.row >= kSensorSize) throw ParseError("pixel outside the sensor", line_no, "line");
        if (h.tot == 0) throw ParseError("zero ToT", line_no, "line");
        if (!out.empty() && h.toa_ticks < out.back().toa_ticks) throw ParseError("records not sorted by time", line_no, "line");
        out.push_back(h);
    }
    return out;
}

std::vector<sim::PhotonEvent> read_photons(const std::filesystem::path& path) {
    if (format_for_path(path) == FileFormat::Binary) return decode_photons_binary(read_file(path));
    const CsvLines csv(read_file(path));
    if (csv.lines.empty()) throw ParseError("empty CSV file", 1, "line");
    if (csv_kind(csv.lines[0]) != RecordKind::Photon) throw ParseError("CSV holds pixel hits, expected photons", 1, "line");
    std::vector<sim::PhotonEvent> out;
    for (std::size_t i = 1; i < csv.lines.size(); ++i) {
        const auto line_no = i + 1;
        if (csv.lines[i].empty()) continue;
        const auto f = split(csv.lines[i]);
        if (f.size() != 5) throw ParseError("expected 5 fields", line_no, "line");
        sim::PhotonEvent p;
        p.t_ticks = parse_num<ticks_t>(f[0], line_no);
        p.x = parse_num<float>(f[1], line_no);
        p.y = parse_num<float>(f[2], line_no);
        p.truth = decode_truth(parse_num<int>(f[3], line_no), parse_num<int>(f[4], line_no), line_no, "line");
        if (p.t_ticks < 0) throw ParseError("negative time", line_no, "line");
        if (!out.empty() && p.t_ticks < out.back().t_ticks) throw ParseError("records not sorted by time", line_no, "line");
        out.push_back(p);
    }
    return out;
}

RecordKind peek_kind(const std::filesystem::path& path) {
    if (format_for_path(path) == FileFormat::Binary) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open " + path.string());
        std::string head(kHeaderBytes, '\0');
        f.read(head.data(), static_cast<std::streamsize>(kHeaderBytes));
        head.resize(static_cast<std::size_t>(f.gcount()));
        return check_header(head);
    }
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(f, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return csv_kind(line);
}

} // namespace ionreadout::io
