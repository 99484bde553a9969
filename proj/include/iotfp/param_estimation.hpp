#pragma once

// Estimating the unknown STP parameters from observed traffic: the padding
// bound W by nearest simulated profile, and the injection probability q by
// comparing the observed rate against per-q rate thresholds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iotfp/aggregate.hpp"
#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/fingerprint.hpp"
#include "iotfp/obfuscation.hpp"

namespace iotfp {

inline constexpr std::uint32_t kWGridAnchor = 10;
inline constexpr std::uint32_t kWGridStep = 40;
inline constexpr std::uint32_t kWGridMax = 250;

// 10, 50, 90, ..., 250
inline std::vector<std::uint32_t> default_w_grid() {
    std::vector<std::uint32_t> g;
    for (std::uint32_t w = kWGridAnchor; w <= kWGridMax; w += kWGridStep) g.push_back(w);
    return g;
}

// 0.05, 0.10, ..., 1.00
inline std::vector<double> default_q_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 20; ++i) g.push_back(i * 0.05);
    return g;
}

struct WGridModels {
    std::vector<std::uint32_t> grid;
    std::vector<std::string> devices;
    std::map<std::pair<std::string, std::uint32_t>, DeviceProfile> models;

    std::size_t size() const noexcept { return models.size(); }
    const DeviceProfile& at(const std::string& device, std::uint32_t W) const { return models.at({device, W}); }
};

// One STP simulation per (device, W). Each simulation draws from its own stream
// derived from `seed`, so the result does not depend on grid order.
inline WGridModels build_w_grid(const std::vector<Trace>& device_traces, const std::vector<std::string>& device_ids,
                                const std::vector<std::uint32_t>& grid, const StpParams& base, std::uint64_t seed) {
    require(device_traces.size() == device_ids.size(), ErrorCode::InvalidArgument, "one id per device trace");
    require(!grid.empty(), ErrorCode::InvalidArgument, "empty W grid");
    WGridModels m;
    m.grid = grid;
    m.devices = device_ids;
    for (std::size_t d = 0; d < device_traces.size(); ++d)
        for (auto W : grid) {
            StpParams p = base;
            p.W = W;
            Rng rng = make_rng(seed, {d, W});
            auto prof = learn_profile(stp_shape(device_traces[d], p, rng), device_ids[d]);
            prof.tags["W"] = W;
            prof.tags["q"] = p.q;
            m.models.emplace(std::pair{device_ids[d], W}, std::move(prof));
        }
    return m;
}

struct WEstimate {
    std::uint32_t W = 0;
    std::uint32_t tolerance = kWGridStep / 2; // reported as W +- tolerance
    std::string device_id;
    double distance = 0.0;
};

// Global minimum over every (device, W) model; ties keep the earliest device
// and the smallest W.
inline WEstimate estimate_w(const WGridModels& models, const SizeHistogram& test) {
    require(!models.models.empty(), ErrorCode::InvalidArgument, "no W models");
    require(!test.empty(), ErrorCode::EmptyFeature, "empty test histogram");
    WEstimate best;
    best.distance = INFINITY;
    for (const auto& dev : models.devices)
        for (auto W : models.grid) {
            const double d = cosine_distance(models.at(dev, W).histogram, test);
            if (d < best.distance) {
                best.distance = d;
                best.W = W;
                best.device_id = dev;
            }
        }
    return best;
}

struct QThresholds {
    std::vector<double> grid;       // candidate q values, ascending
    std::vector<double> rates;      // simulated shaped pps per grid value, non-decreasing
    std::vector<double> thresholds; // midpoints between adjacent rates
};

inline QThresholds q_thresholds_from_rates(std::vector<double> grid, std::vector<double> rates) {
    require(grid.size() == rates.size() && grid.size() >= 2, ErrorCode::InvalidArgument,
            "q thresholds need at least two grid points with one rate each");
    require(std::is_sorted(grid.begin(), grid.end()), ErrorCode::InvalidArgument, "q grid must be ascending");
    // Simulation noise can make neighbouring rates dip; the running max keeps the
    // threshold list monotone.
    for (std::size_t i = 1; i < rates.size(); ++i) rates[i] = std::max(rates[i], rates[i - 1]);
    QThresholds t;
    t.grid = std::move(grid);
    t.rates = std::move(rates);
    for (std::size_t i = 0; i + 1 < t.rates.size(); ++i) t.thresholds.push_back(0.5 * (t.rates[i] + t.rates[i + 1]));
    return t;
}

// Shaped packet rate of `trace` for every q in the grid. Only the STP schedule
// is computed, which fixes the packet count without materialising packets.
inline QThresholds build_q_thresholds(const Trace& trace, const std::vector<double>& grid, const StpParams& base,
                                      std::uint64_t seed) {
    require(trace.duration > 0.0, ErrorCode::InvalidArgument, "q thresholds need a trace with positive duration");
    std::vector<double> rates;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        StpParams p = base;
        p.q = grid[i];
        Rng rng = make_rng(seed, {i});
        const auto sch = stp_schedule(trace, p, rng);
        rates.push_back(static_cast<double>(sch.emitted()) / trace.duration);
    }
    return q_thresholds_from_rates(grid, std::move(rates));
}

inline double estimate_q(const QThresholds& t, double observed_rate) {
    require(!t.grid.empty(), ErrorCode::InvalidArgument, "empty q grid");
    require(observed_rate >= 0.0, ErrorCode::InvalidArgument, "rate must be non-negative");
    const auto i = std::min(thresholds_below(observed_rate, t.thresholds), t.grid.size() - 1);
    return t.grid[i];
}

} // namespace iotfp
