#pragma once

// Padding and shaping defenses: random padding, Level-100 padding,
// stochastic traffic padding (STP) and independent link padding (ILP).

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"

namespace iotfp {

inline std::uint32_t random_pad(std::uint32_t size, std::uint32_t W, Rng& rng) {
    require(size >= 1 && W >= 1, ErrorCode::InvalidArgument, "random padding needs size >= 1 and W >= 1");
    return size + std::uniform_int_distribution<std::uint32_t>(1, W)(rng);
}

// Level-100 table:
//   s <= 100 -> 100, s <= 200 -> 200, s <= 300 -> 300,
//   300 < s < 999 -> U[s, 1000], 999 <= s <= 1399 -> U[s, 1400], 1400 <= s <= 1600 -> 1600.
inline std::uint32_t level100_pad(std::uint32_t size, Rng& rng) {
    require(size >= 1, ErrorCode::InvalidArgument, "packet size must be >= 1");
    if (size > 1600) fail(ErrorCode::UnsupportedSize, "Level-100 padding is undefined above 1600 bytes");
    if (size <= 100) return 100;
    if (size <= 200) return 200;
    if (size <= 300) return 300;
    if (size < 999) return std::uniform_int_distribution<std::uint32_t>(size, 1000)(rng);
    if (size <= 1399) return std::uniform_int_distribution<std::uint32_t>(size, 1400)(rng);
    return 1600;
}

struct PaddingScheme {
    enum class Kind { Random, Level100, Constant };

    Kind kind = Kind::Random;
    std::uint32_t value = 80; // W for Random, target size for Constant

    static PaddingScheme random(std::uint32_t W) { return {Kind::Random, W}; }
    static PaddingScheme level100() { return {Kind::Level100, 0}; }
    static PaddingScheme constant(std::uint32_t size) { return {Kind::Constant, size}; }

    void validate() const {
        if (kind == Kind::Random) require(value >= 1, ErrorCode::InvalidArgument, "random padding needs W >= 1");
        if (kind == Kind::Constant) require(value >= 1, ErrorCode::InvalidArgument, "constant padding needs a size");
    }

    std::uint32_t apply(std::uint32_t size, Rng& rng) const {
        switch (kind) {
        case Kind::Random: return random_pad(size, value, rng);
        case Kind::Level100: return level100_pad(size, rng);
        case Kind::Constant:
            require(size <= value, ErrorCode::InvalidArgument, "constant padding smaller than the packet");
            return value;
        }
        return size;
    }

    std::string name() const {
        switch (kind) {
        case Kind::Random: return "random(" + std::to_string(value) + ")";
        case Kind::Level100: return "level100";
        case Kind::Constant: return "constant(" + std::to_string(value) + ")";
        }
        return "?";
    }
};

struct StpParams {
    double q = 0.1;
    double T = 1.0;   // period, seconds
    double R = 100.0; // shaped rate, packets per second
    std::uint32_t W = 80;
    // Unpadded sizes for cover packets. Empty means: use the input trace's own histogram.
    SizeHistogram cover_distribution;

    std::int64_t slots_per_period() const { return std::llround(T * R); }

    void validate() const {
        require(q >= 0.0 && q <= 1.0, ErrorCode::InvalidArgument, "q must lie in [0, 1]");
        require(T > 0.0 && R > 0.0, ErrorCode::InvalidArgument, "T and R must be positive");
        require(T * R >= 1.0 - 1e-9, ErrorCode::InvalidArgument, "R*T must allow at least one slot per period");
        require(W >= 1, ErrorCode::InvalidArgument, "W must be >= 1");
    }
};

// A maximal run of shaped slots. Slot k is emitted at time k / R; every block
// spans a whole number of periods.
struct StpBlock {
    std::int64_t first_slot = 0;
    std::int64_t end_slot = 0; // exclusive
    bool opened_by_real = false;

    std::int64_t length() const noexcept { return end_slot - first_slot; }
    bool contains(std::int64_t s) const noexcept { return s >= first_slot && s < end_slot; }
};

struct StpSchedule {
    std::vector<StpBlock> blocks;         // sorted, disjoint
    std::vector<std::int64_t> real_slots; // slot of each input packet, input order
    std::int64_t slots_per_period = 0;
    std::int64_t injections = 0;          // successful cover-injection draws

    std::int64_t emitted() const noexcept {
        std::int64_t n = 0;
        for (const auto& b : blocks) n += b.length();
        return n;
    }
    // Periods of shaped output, counting an extended block once per period it spans.
    std::int64_t periods() const noexcept { return slots_per_period > 0 ? emitted() / slots_per_period : 0; }
};

// Timing half of STP: decides which slots are emitted and where each real
// packet goes. Draws only the injection coins and offsets from `rng`, so a
// schedule computed alone matches the one stp_shape builds from the same seed.
//
// Real packets wait for the next free slot (roundUp to the 1/R grid); several
// real packets due in one slot go out in consecutive slots.
inline StpSchedule stp_schedule(const Trace& trace, const StpParams& params, Rng& rng) {
    params.validate();
    const std::int64_t tr = params.slots_per_period();
    StpSchedule sch;
    sch.slots_per_period = tr;
    sch.real_slots.reserve(trace.size());

    double horizon = trace.duration;
    if (!trace.empty()) horizon = std::max(horizon, trace.packets.back().timestamp);
    const auto boundaries = static_cast<std::int64_t>(std::ceil(horizon / params.T - 1e-9));

    std::bernoulli_distribution coin(params.q);
    std::uniform_int_distribution<std::int64_t> offset(0, tr - 1);
    auto& blocks = sch.blocks;

    auto on_boundary = [&](std::int64_t k) {
        if (!coin(rng)) return;
        ++sch.injections;
        const std::int64_t start = k * tr + offset(rng);
        if (!blocks.empty() && start < blocks.back().end_slot)
            blocks.back().end_slot += tr; // extend the injection in progress
        else
            blocks.push_back({start, start + tr, false});
    };

    std::int64_t last_assigned = -1;
    auto on_real = [&](double ts) {
        const auto due = static_cast<std::int64_t>(std::ceil(ts * params.R - 1e-9));
        const std::int64_t slot = std::max(due, last_assigned + 1);
        if (slot - due >= tr)
            fail(ErrorCode::Overload, "real traffic exceeds the shaping rate R (backlog of a full period)");
        last_assigned = slot;
        sch.real_slots.push_back(slot);

        if (blocks.empty() || slot >= blocks.back().end_slot) {
            blocks.push_back({slot, slot + tr, true});
            return;
        }
        StpBlock& last = blocks.back();
        if (last.contains(slot)) return;
        // Only the newest block can still lie in the future (a pending injection).
        if (blocks.size() >= 2 && blocks[blocks.size() - 2].contains(slot)) return;
        if (slot + tr <= last.first_slot) {
            blocks.insert(blocks.end() - 1, StpBlock{slot, slot + tr, true});
        } else {
            const std::int64_t periods = last.length() / tr;
            last.first_slot = slot;
            last.end_slot = slot + (periods + 1) * tr;
            last.opened_by_real = true;
        }
    };

    std::size_t i = 0;
    for (std::int64_t k = 0; k < boundaries; ++k) {
        const double t = static_cast<double>(k) * params.T;
        while (i < trace.size() && trace.packets[i].timestamp < t) on_real(trace.packets[i++].timestamp);
        on_boundary(k);
    }
    while (i < trace.size()) on_real(trace.packets[i++].timestamp);
    return sch;
}

namespace detail {

class CoverSampler {
public:
    explicit CoverSampler(const SizeHistogram& h) {
        std::vector<double> w;
        for (const auto& [s, c] : h.counts()) {
            sizes_.push_back(s);
            w.push_back(static_cast<double>(c));
        }
        if (!w.empty()) dist_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    }
    bool empty() const noexcept { return sizes_.empty(); }
    std::uint32_t operator()(Rng& rng) { return sizes_[dist_(rng)]; }

private:
    std::vector<std::uint32_t> sizes_;
    std::discrete_distribution<std::size_t> dist_;
};

} // namespace detail

// Full STP: schedule, then emit every scheduled slot. Real packets keep their
// device id and are padded; idle slots carry cover packets drawn from the cover
// distribution and padded with the same scheme.
inline Trace stp_shape(const Trace& trace, const StpParams& params, const PaddingScheme& padding, Rng& rng) {
    padding.validate();
    const StpSchedule sch = stp_schedule(trace, params, rng);

    detail::CoverSampler cover(params.cover_distribution.empty() ? size_histogram(trace) : params.cover_distribution);
    if (!sch.blocks.empty() && cover.empty())
        fail(ErrorCode::InvalidArgument, "cover distribution is empty but cover packets are required");

    const std::string device = trace.empty() ? std::string() : trace.packets.front().device_id;
    Trace out;
    out.packets.reserve(static_cast<std::size_t>(sch.emitted()));
    std::size_t r = 0;
    for (const auto& b : sch.blocks) {
        for (std::int64_t s = b.first_slot; s < b.end_slot; ++s) {
            PacketRecord p;
            p.timestamp = static_cast<double>(s) / params.R;
            if (r < sch.real_slots.size() && sch.real_slots[r] == s) {
                const auto& src = trace.packets[r++];
                p.size = padding.apply(src.size, rng);
                p.device_id = src.device_id;
                p.is_attack = src.is_attack;
            } else {
                p.size = padding.apply(cover(rng), rng);
                p.device_id = device;
                p.is_cover = true;
            }
            out.packets.push_back(std::move(p));
        }
    }
    out.duration = trace.duration;
    if (!out.empty()) out.duration = std::max(out.duration, out.packets.back().timestamp);
    return out;
}

inline Trace stp_shape(const Trace& trace, const StpParams& params, Rng& rng) {
    return stp_shape(trace, params, PaddingScheme::random(params.W), rng);
}

// Constant-rate, constant-size emission for the whole duration.
inline Trace ilp_shape(const Trace& trace, double rate, std::uint32_t pad_to) {
    require(rate > 0.0, ErrorCode::InvalidArgument, "ILP rate must be positive");
    const auto n = static_cast<std::int64_t>(std::ceil(trace.duration * rate - 1e-9));
    const auto max_delay = static_cast<std::int64_t>(std::ceil(rate));
    const std::string device = trace.empty() ? std::string() : trace.packets.front().device_id;

    std::vector<std::int64_t> slots;
    slots.reserve(trace.size());
    std::int64_t last = -1;
    for (const auto& p : trace.packets) {
        require(p.size <= pad_to, ErrorCode::InvalidArgument, "ILP pad size smaller than a real packet");
        const auto due = static_cast<std::int64_t>(std::ceil(p.timestamp * rate - 1e-9));
        const std::int64_t s = std::max(due, last + 1);
        if (s >= n || s - due > max_delay) fail(ErrorCode::Overload, "real traffic exceeds the ILP rate");
        slots.push_back(s);
        last = s;
    }

    Trace out;
    out.duration = trace.duration;
    out.packets.reserve(static_cast<std::size_t>(n));
    std::size_t r = 0;
    for (std::int64_t s = 0; s < n; ++s) {
        PacketRecord p;
        p.timestamp = static_cast<double>(s) / rate;
        p.size = pad_to;
        if (r < slots.size() && slots[r] == s) {
            p.device_id = trace.packets[r].device_id;
            p.is_attack = trace.packets[r].is_attack;
            ++r;
        } else {
            p.device_id = device;
            p.is_cover = true;
        }
        out.packets.push_back(std::move(p));
    }
    return out;
}

} // namespace iotfp
