#pragma once

// Files: packet traces as CSV, profile stores as one JSON document per device,
// and KNN window models as flat labelled vectors.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/fingerprint.hpp"
#include "iotfp/window_detector.hpp"

namespace iotfp {

inline constexpr std::string_view kTraceHeader = "timestamp_s,size_bytes,device_id,is_cover,is_attack";
inline constexpr std::string_view kDurationPrefix = "# duration_s=";

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* field) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        fail(ErrorCode::Parse, "line " + std::to_string(line) + ": bad " + field + " '" + std::string(s) + "'");
    return v;
}

inline bool parse_flag(std::string_view s, std::size_t line, const char* field) {
    if (s == "0") return false;
    if (s == "1") return true;
    fail(ErrorCode::Parse, "line " + std::to_string(line) + ": " + field + " must be 0 or 1");
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << data;
    if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

} // namespace detail

// An optional first line "# duration_s=<seconds>" records the trace duration;
// without it the duration is the last timestamp.
inline std::string format_trace(const Trace& t) {
    std::string s;
    s.reserve(32 * (t.size() + 2));
    s += kDurationPrefix;
    s += detail::format_double(t.duration);
    s += '\n';
    s += kTraceHeader;
    s += '\n';
    for (const auto& p : t.packets) {
        s += detail::format_double(p.timestamp);
        s += ',';
        s += std::to_string(p.size);
        s += ',';
        s += p.device_id.empty() ? std::string("-") : p.device_id;
        s += p.is_cover ? ",1" : ",0";
        s += p.is_attack ? ",1\n" : ",0\n";
    }
    return s;
}

inline Trace parse_trace(std::string_view text) {
    Trace t;
    bool have_duration = false, have_header = false;
    std::size_t line_no = 0;
    for (auto line : detail::split(text, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!have_header) {
            if (line.starts_with(kDurationPrefix) && !have_duration) {
                t.duration = detail::parse_number<double>(line.substr(kDurationPrefix.size()), line_no, "duration");
                have_duration = true;
                continue;
            }
            if (line != kTraceHeader)
                fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected header '" +
                                           std::string(kTraceHeader) + "'");
            have_header = true;
            continue;
        }
        const auto f = detail::split(line, ',');
        if (f.size() != 5)
            fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected 5 fields, got " +
                                       std::to_string(f.size()));
        PacketRecord p;
        p.timestamp = detail::parse_number<double>(f[0], line_no, "timestamp");
        p.size = detail::parse_number<std::uint32_t>(f[1], line_no, "size");
        if (f[2].empty()) fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": empty device id");
        p.device_id = f[2] == "-" ? std::string() : std::string(f[2]);
        p.is_cover = detail::parse_flag(f[3], line_no, "is_cover");
        p.is_attack = detail::parse_flag(f[4], line_no, "is_attack");
        if (p.size < 1) fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": size must be >= 1");
        if (p.timestamp < 0.0) fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": negative timestamp");
        if (!t.packets.empty() && p.timestamp < t.packets.back().timestamp)
            fail(ErrorCode::Parse, "line " + std::to_string(line_no) + ": timestamps must be non-decreasing");
        t.packets.push_back(std::move(p));
    }
    if (!have_header) fail(ErrorCode::Parse, "missing header line");
    if (!t.packets.empty()) {
        if (!have_duration) t.duration = t.packets.back().timestamp;
        if (t.packets.back().timestamp > t.duration) fail(ErrorCode::Parse, "timestamp beyond recorded duration");
    }
    return t;
}

inline Trace load_trace(const std::filesystem::path& path) { return parse_trace(detail::read_file(path)); }

inline void save_trace(const Trace& t, const std::filesystem::path& path) { detail::write_file(path, format_trace(t)); }

// Profile document:
//   {"device_id": "dev01", "duration_s": 10800, "mean_rate": 21.7,
//    "top_unique_size": 412 | null, "histogram": {"58": 1200, ...}, "tags": {"W": 80}}
inline nlohmann::json profile_to_json(const DeviceProfile& p) {
    nlohmann::json j;
    j["device_id"] = p.device_id;
    j["duration_s"] = p.duration;
    j["mean_rate"] = p.mean_rate;
    j["top_unique_size"] = p.top_unique_size ? nlohmann::json(*p.top_unique_size) : nlohmann::json(nullptr);
    nlohmann::json h = nlohmann::json::object();
    for (const auto& [s, c] : p.histogram.counts()) h[std::to_string(s)] = c;
    j["histogram"] = std::move(h);
    j["tags"] = p.tags;
    return j;
}

inline DeviceProfile profile_from_json(const nlohmann::json& j) {
    try {
        DeviceProfile p;
        p.device_id = j.at("device_id").get<std::string>();
        p.duration = j.at("duration_s").get<double>();
        p.mean_rate = j.at("mean_rate").get<double>();
        if (j.contains("top_unique_size") && !j["top_unique_size"].is_null())
            p.top_unique_size = j["top_unique_size"].get<std::uint32_t>();
        for (const auto& [k, v] : j.at("histogram").items())
            p.histogram.add(detail::parse_number<std::uint32_t>(k, 0, "histogram key"), v.get<std::uint64_t>());
        if (j.contains("tags")) p.tags = j["tags"].get<std::map<std::string, double>>();
        require(!p.histogram.empty(), ErrorCode::EmptyProfile, p.device_id + ": empty histogram");
        p.common_sizes = sizes_by_frequency(p.histogram);
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, std::string("profile: ") + e.what());
    }
}

inline std::string profile_file_name(const DeviceProfile& p) {
    std::string name = p.device_id.empty() ? "aggregate" : p.device_id;
    for (auto [key, value] : p.tags) {
        std::ostringstream os;
        os << value;
        name += "_" + key + os.str();
    }
    return name + ".json";
}

inline void save_profile(const DeviceProfile& p, const std::filesystem::path& path) {
    detail::write_file(path, profile_to_json(p).dump(1) + "\n");
}

inline DeviceProfile load_profile(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::Parse, path.string() + ": " + e.what());
    }
    return profile_from_json(j);
}

inline void save_profiles(const std::vector<DeviceProfile>& profiles, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& p : profiles) save_profile(p, dir / profile_file_name(p));
}

// Every *.json file in `dir`, in file-name order.
inline std::vector<DeviceProfile> load_profiles(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<DeviceProfile> out;
    for (const auto& f : files) out.push_back(load_profile(f));
    return out;
}

// KNN model: "knn k=<k> dim=<d> n=<n>" then one "label,v0,...,v(d-1)" line per
// training window, label 1 for real traffic.
inline std::string format_knn(const KnnModel& m) {
    std::string s = "knn k=" + std::to_string(m.k) + " dim=" + std::to_string(m.x.empty() ? 0 : m.x[0].size()) +
                    " n=" + std::to_string(m.size()) + "\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        s += m.real[i] ? '1' : '0';
        for (double v : m.x[i]) {
            s += ',';
            s += detail::format_double(v);
        }
        s += '\n';
    }
    return s;
}

inline KnnModel parse_knn(std::string_view text) {
    const auto lines = detail::split(text, '\n');
    std::size_t k = 0, dim = 0, n = 0;
    {
        const std::string head(lines.front());
        if (std::sscanf(head.c_str(), "knn k=%zu dim=%zu n=%zu", &k, &dim, &n) != 3)
            fail(ErrorCode::Parse, "line 1: bad KNN header");
    }
    KnnModel m;
    m.k = k;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = detail::split(lines[i], ',');
        if (f.size() != dim + 1)
            fail(ErrorCode::Parse, "line " + std::to_string(i + 1) + ": expected " + std::to_string(dim + 1) + " fields");
        m.real.push_back(detail::parse_flag(f[0], i + 1, "label"));
        SlotFeature x;
        for (std::size_t d = 1; d < f.size(); ++d) x.push_back(detail::parse_number<double>(f[d], i + 1, "slot"));
        m.x.push_back(std::move(x));
    }
    if (m.size() != n) fail(ErrorCode::Parse, "KNN file holds " + std::to_string(m.size()) + " rows, header says " + std::to_string(n));
    if (k < 1 || k > n) fail(ErrorCode::Parse, "KNN k out of range");
    return m;
}

inline void save_knn(const KnnModel& m, const std::filesystem::path& path) { detail::write_file(path, format_knn(m)); }
inline KnnModel load_knn(const std::filesystem::path& path) { return parse_knn(detail::read_file(path)); }

} // namespace iotfp
