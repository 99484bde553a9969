#pragma once

// Synthetic device traffic: alternating sessions and idle gaps of gamma
// distributed length, Poisson arrivals inside a session, i.i.d. packet sizes.
// Stands in for recorded device captures.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"

namespace iotfp {

struct WeightedSize {
    std::uint32_t size = 0;
    double weight = 0.0;
};

struct DeviceSpec {
    std::string device_id;
    std::string name;
    std::vector<WeightedSize> sizes; // sums to 1
    double mean_rate = 1.0;          // packets per second, averaged over all time
    double burstiness = 4.0;         // mean session length, seconds
    double duty_cycle = 1.0;         // fraction of time inside a session
    // Size of the first packet of each session (e.g. a lookup after idling).
    // Empty means the first packet is drawn like the others.
    std::vector<WeightedSize> wake_sizes;
    // Gamma shape of session and idle lengths: 1 = memoryless, larger = closer
    // to periodic polling. Means do not depend on it.
    double regularity = 1.0;

    double session_rate() const { return mean_rate / duty_cycle; }

    void validate() const {
        auto check = [&](const std::vector<WeightedSize>& ws, bool allow_empty) {
            if (ws.empty()) {
                require(allow_empty, ErrorCode::InvalidArgument, device_id + ": empty size distribution");
                return;
            }
            double s = 0.0;
            for (const auto& w : ws) {
                require(w.size >= 1 && w.weight >= 0.0, ErrorCode::InvalidArgument, device_id + ": bad size entry");
                s += w.weight;
            }
            require(std::abs(s - 1.0) < 1e-9, ErrorCode::InvalidArgument, device_id + ": probabilities must sum to 1");
        };
        check(sizes, false);
        check(wake_sizes, true);
        require(mean_rate > 0.0, ErrorCode::InvalidArgument, device_id + ": rate must be positive");
        require(burstiness > 0.0, ErrorCode::InvalidArgument, device_id + ": session length must be positive");
        require(duty_cycle > 0.0 && duty_cycle <= 1.0, ErrorCode::InvalidArgument, device_id + ": duty cycle in (0,1]");
        require(regularity > 0.0, ErrorCode::InvalidArgument, device_id + ": regularity must be positive");
    }

    // Expected size distribution including wake packets, weighted by how often
    // they occur (one per session).
    FrequencyVector expected_distribution() const {
        FrequencyVector f;
        const double per_session = session_rate() * burstiness;
        const double wake_share = wake_sizes.empty() ? 0.0 : std::min(1.0, 1.0 / std::max(per_session, 1.0));
        for (const auto& w : sizes) f[w.size] += (1.0 - wake_share) * w.weight;
        for (const auto& w : wake_sizes) f[w.size] += wake_share * w.weight;
        return f;
    }
};

namespace detail {

inline std::discrete_distribution<std::size_t> weights_of(const std::vector<WeightedSize>& ws) {
    std::vector<double> w;
    w.reserve(ws.size());
    for (const auto& x : ws) w.push_back(x.weight);
    return {w.begin(), w.end()};
}

} // namespace detail

inline Trace synth_device(const DeviceSpec& spec, double duration, Rng& rng) {
    spec.validate();
    require(duration >= 0.0, ErrorCode::InvalidArgument, "duration must be non-negative");

    auto size_dist = detail::weights_of(spec.sizes);
    auto wake_dist = detail::weights_of(spec.wake_sizes);
    std::exponential_distribution<double> gap(spec.session_rate());
    std::gamma_distribution<double> on_len(spec.regularity, spec.burstiness / spec.regularity);
    const bool always_on = spec.duty_cycle >= 1.0;
    const double mean_off = always_on ? 1.0 : spec.burstiness * (1.0 - spec.duty_cycle) / spec.duty_cycle;
    std::gamma_distribution<double> off_len(spec.regularity, mean_off / spec.regularity);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Trace out;
    out.duration = duration;
    double t = 0.0;
    bool on = always_on || unit(rng) < spec.duty_cycle;
    while (t < duration) {
        if (!on) {
            t += off_len(rng);
            on = true;
            continue;
        }
        const double end = always_on ? duration : std::min(duration, t + on_len(rng));
        bool first = true;
        for (double ts = t + gap(rng); ts < end; ts += gap(rng)) {
            PacketRecord p;
            p.timestamp = ts;
            p.device_id = spec.device_id;
            if (first && !spec.wake_sizes.empty())
                p.size = spec.wake_sizes[wake_dist(rng)].size;
            else
                p.size = spec.sizes[size_dist(rng)].size;
            first = false;
            out.packets.push_back(std::move(p));
        }
        t = end;
        on = false;
    }
    return out;
}

// Fourteen synthetic IoT devices: plugs and sensors with sparse small packets,
// hubs and speakers with mixed sizes, cameras with dense large packets.
// Every device opens a session with its own wake-up packet size, and large
// sizes are spread far enough apart to stay distinguishable under padding.
inline std::vector<DeviceSpec> default_corpus() {
    // clang-format off
    std::vector<DeviceSpec> c = {
        {"dev01", "tplink-plug",        {{58, .35}, {118, .25}, {235, .25}, {412, .15}},            1.25, 3.0, 0.14, {{331, 1.0}}},
        {"dev02", "wemo-motion",        {{64, .30}, {156, .30}, {318, .25}, {622, .15}},            2.00, 3.0, 0.15, {{287, 1.0}}},
        {"dev03", "echo-speaker",       {{72, .20}, {188, .20}, {505, .20}, {884, .20}, {1252, .20}}, 3.00, 3.0, 0.17, {{243, 1.0}}},
        {"dev04", "netatmo-weather",    {{82, .30}, {268, .30}, {457, .40}},                         1.00, 3.0, 0.13, {{359, 1.0}}},
        {"dev05", "smartcam",           {{88, .10}, {1022, .20}, {1394, .30}, {1514, .40}},          6.00, 3.0, 0.18, {{213, 1.0}}},
        {"dev06", "hp-printer",         {{100, .30}, {346, .30}, {702, .20}, {1104, .20}},           3.00, 3.0, 0.14, {{545, 1.0}}},
        {"dev07", "tplink-cam",         {{66, .10}, {962, .20}, {1330, .30}, {1590, .40}},           5.00, 3.0, 0.17, {{177, 1.0}}},
        {"dev08", "amazon-plug",        {{69, .30}, {208, .40}, {583, .30}},                         1.50, 3.0, 0.15, {{398, 1.0}}},
        {"dev09", "dlink-plug",         {{77, .30}, {166, .35}, {381, .35}},                         1.25, 3.0, 0.13, {{745, 1.0}}},
        {"dev10", "rachio-sprinkler",   {{86, .25}, {291, .25}, {761, .30}, {1182, .20}},            1.75, 3.0, 0.14, {{468, 1.0}}},
        {"dev11", "ring-alarm",         {{59, .30}, {131, .30}, {531, .20}, {1062, .20}},            2.50, 3.0, 0.16, {{652, 1.0}}},
        {"dev12", "roomba",             {{95, .20}, {252, .30}, {663, .30}, {832, .20}},             3.75, 3.0, 0.15, {{1288, 1.0}}},
        {"dev13", "tplink-bulb",        {{63, .40}, {141, .30}, {472, .30}},                         1.00, 3.0, 0.14, {{924, 1.0}}},
        {"dev14", "wemo-insight",       {{73, .35}, {179, .30}, {396, .20}, {1452, .15}},            1.50, 3.0, 0.15, {{1136, 1.0}}},
    };
    // clang-format on
    for (auto& d : c) {
        d.regularity = 4.0; // devices poll on a loose schedule
        d.validate();
    }
    return c;
}

} // namespace iotfp
