#pragma once

// Domain types shared by every module: packets, traces, size histograms,
// joint (gap, size) histograms and time windows.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iotfp/error.hpp"

namespace iotfp {

using Rng = std::mt19937_64;

// Independent stream for (base, tags...). Streams with different tags do not
// share state, so adding draws to one experiment stage never shifts another.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * tags.size());
    words.push_back(static_cast<std::uint32_t>(base));
    words.push_back(static_cast<std::uint32_t>(base >> 32));
    for (auto t : tags) {
        words.push_back(static_cast<std::uint32_t>(t));
        words.push_back(static_cast<std::uint32_t>(t >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags = {}) {
    return Rng(derive_seed(base, tags));
}

// Canonical range of unpadded packet sizes.
inline constexpr std::uint32_t kMinPacketSize = 54;
inline constexpr std::uint32_t kMaxPacketSize = 1594;
inline constexpr int kInterArrivalBins = 108;

struct PacketRecord {
    double timestamp = 0.0;       // seconds since trace start
    std::uint32_t size = 0;       // bytes
    std::string device_id;        // empty after NAT aggregation
    // Simulator ground truth. Only scoring code may read these.
    bool is_cover = false;
    bool is_attack = false;

    friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

struct Trace {
    std::vector<PacketRecord> packets;
    double duration = 0.0;

    std::size_t size() const noexcept { return packets.size(); }
    bool empty() const noexcept { return packets.empty(); }

    // Packets per second over the whole duration.
    double rate() const noexcept { return duration > 0.0 ? static_cast<double>(packets.size()) / duration : 0.0; }

    Trace filter_device(const std::string& id) const {
        Trace out;
        out.duration = duration;
        for (const auto& p : packets)
            if (p.device_id == id) out.packets.push_back(p);
        return out;
    }

    // Packets with start <= t < end, re-based so the slice starts at zero.
    Trace slice(double start, double end) const {
        Trace out;
        out.duration = end - start;
        auto lo = std::lower_bound(packets.begin(), packets.end(), start,
                                   [](const PacketRecord& p, double t) { return p.timestamp < t; });
        for (auto it = lo; it != packets.end() && it->timestamp < end; ++it) {
            PacketRecord p = *it;
            p.timestamp -= start;
            out.packets.push_back(std::move(p));
        }
        return out;
    }

    void validate() const {
        double prev = 0.0;
        for (const auto& p : packets) {
            require(p.size >= 1, ErrorCode::InvalidArgument, "packet size must be >= 1");
            require(p.timestamp >= 0.0, ErrorCode::InvalidArgument, "negative timestamp");
            require(p.timestamp >= prev, ErrorCode::InvalidArgument, "timestamps must be non-decreasing");
            prev = p.timestamp;
        }
        require(prev <= duration, ErrorCode::InvalidArgument, "timestamp beyond trace duration");
    }

    friend bool operator==(const Trace&, const Trace&) = default;
};

// Sparse key -> weight vector. Keys are sizes, bins, or flattened 2-D cells.
using FrequencyVector = std::map<std::int64_t, double>;

class SizeHistogram {
public:
    using Map = std::map<std::uint32_t, std::uint64_t>;

    SizeHistogram() = default;
    SizeHistogram(std::initializer_list<std::pair<const std::uint32_t, std::uint64_t>> init) {
        for (const auto& [k, v] : init) add(k, v);
    }

    void add(std::uint32_t key, std::uint64_t n = 1) {
        if (n == 0) return;
        counts_[key] += n;
        total_ += n;
    }

    void merge(const SizeHistogram& other) {
        for (const auto& [k, v] : other.counts_) add(k, v);
    }

    std::uint64_t count(std::uint32_t key) const {
        auto it = counts_.find(key);
        return it == counts_.end() ? 0 : it->second;
    }

    const Map& counts() const noexcept { return counts_; }
    std::uint64_t total() const noexcept { return total_; }
    bool empty() const noexcept { return total_ == 0; }
    std::size_t distinct() const noexcept { return counts_.size(); }

    FrequencyVector frequencies() const {
        FrequencyVector out;
        for (const auto& [k, v] : counts_) out.emplace_hint(out.end(), k, static_cast<double>(v));
        return out;
    }

    FrequencyVector normalized() const {
        FrequencyVector out;
        if (total_ == 0) return out;
        const double t = static_cast<double>(total_);
        for (const auto& [k, v] : counts_) out.emplace_hint(out.end(), k, static_cast<double>(v) / t);
        return out;
    }

    friend bool operator==(const SizeHistogram&, const SizeHistogram&) = default;

private:
    Map counts_;
    std::uint64_t total_ = 0;
};

struct JointHistogram {
    std::map<std::pair<int, int>, std::uint64_t> bins; // (time bin, size bin) -> count
    double time_bin_width = 1.0;
    std::uint32_t size_bin_width = 1;

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& [_, v] : bins) t += v;
        return t;
    }

    FrequencyVector as_feature() const {
        FrequencyVector out;
        for (const auto& [cell, v] : bins)
            out[static_cast<std::int64_t>(cell.first) * 1'000'000 + cell.second] += static_cast<double>(v);
        return out;
    }
};

// A view into a trace; valid only while the trace is alive.
struct TimeWindow {
    double start = 0.0;
    double length = 0.0;
    std::span<const PacketRecord> packets;
    bool partial = false; // leading window shorter than `length`

    bool empty() const noexcept { return packets.empty(); }
};

inline SizeHistogram size_histogram(std::span<const PacketRecord> packets) {
    SizeHistogram h;
    for (const auto& p : packets) h.add(p.size);
    return h;
}

inline SizeHistogram size_histogram(const Trace& trace) { return size_histogram(std::span(trace.packets)); }

// Gap g (seconds) lands in bin ceil(g / width), clamped to [1, ceil(108 / width)].
inline int gap_bin(double gap, double width) {
    const int last = static_cast<int>(std::ceil(kInterArrivalBins / width - 1e-9));
    const int bin = static_cast<int>(std::ceil(gap / width - 1e-12));
    return std::clamp(bin, 1, last);
}

// Keys 1..108; bin 108 absorbs every gap beyond 108 s.
inline SizeHistogram interarrival_histogram(const Trace& trace) {
    require(trace.size() >= 2, ErrorCode::EmptyFeature, "inter-arrival feature needs at least 2 packets");
    SizeHistogram h;
    for (std::size_t i = 1; i < trace.size(); ++i)
        h.add(static_cast<std::uint32_t>(gap_bin(trace.packets[i].timestamp - trace.packets[i - 1].timestamp, 1.0)));
    return h;
}

inline JointHistogram joint_histogram(const Trace& trace, double time_bin_width, std::uint32_t size_bin_width) {
    require(time_bin_width > 0.0 && size_bin_width > 0, ErrorCode::InvalidArgument, "bin widths must be positive");
    require(trace.size() >= 2, ErrorCode::EmptyFeature, "joint feature needs at least 2 packets");
    JointHistogram j;
    j.time_bin_width = time_bin_width;
    j.size_bin_width = size_bin_width;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const double gap = trace.packets[i].timestamp - trace.packets[i - 1].timestamp;
        const int tb = gap_bin(gap, time_bin_width);
        const int sb = static_cast<int>(trace.packets[i].size / size_bin_width);
        ++j.bins[{tb, sb}];
    }
    return j;
}

// Windows [offset + k*L, offset + (k+1)*L). With offset > 0 a partial leading
// window [0, offset) holds the early packets. Empty windows are kept.
inline std::vector<TimeWindow> split_windows(const Trace& trace, double window_length, double offset = 0.0) {
    require(window_length > 0.0, ErrorCode::InvalidArgument, "window length must be positive");
    require(offset >= 0.0 && offset < window_length, ErrorCode::InvalidArgument, "offset must lie in [0, L)");

    const auto& pk = trace.packets;
    double end = trace.duration;
    if (!pk.empty()) end = std::max(end, pk.back().timestamp);

    std::vector<TimeWindow> out;
    std::size_t i = 0;
    auto take_until = [&](double stop) {
        const std::size_t first = i;
        while (i < pk.size() && pk[i].timestamp < stop) ++i;
        return std::span<const PacketRecord>(pk.data() + first, i - first);
    };

    if (offset > 0.0) out.push_back({0.0, window_length, take_until(offset), true});

    auto n = static_cast<std::size_t>(std::ceil((end - offset) / window_length - 1e-9));
    n = std::max<std::size_t>(n, 1);
    for (std::size_t k = 0;; ++k) {
        const double start = offset + static_cast<double>(k) * window_length;
        if (k >= n && i >= pk.size()) break;
        out.push_back({start, window_length, take_until(start + window_length), false});
    }
    return out;
}

// Windows view the trace's packets, so the trace must outlive them.
std::vector<TimeWindow> split_windows(Trace&&, double, double = 0.0) = delete;

} // namespace iotfp
