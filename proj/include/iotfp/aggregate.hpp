#pragma once

// External observer behind a NAT: aggregated traffic, device-count estimation
// from packet rate, and subset detection by full comparison or by FSBC scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/fingerprint.hpp"
#include "iotfp/metrics.hpp"

namespace iotfp {

// Merge by timestamp (stable across inputs) and erase device ids.
inline Trace nat_aggregate(const std::vector<Trace>& traces) {
    Trace out;
    std::size_t total = 0;
    for (const auto& t : traces) {
        total += t.size();
        out.duration = std::max(out.duration, t.duration);
    }
    out.packets.reserve(total);
    for (const auto& t : traces) out.packets.insert(out.packets.end(), t.packets.begin(), t.packets.end());
    std::stable_sort(out.packets.begin(), out.packets.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });
    for (auto& p : out.packets) p.device_id.clear();
    return out;
}

struct CountThresholds {
    std::vector<double> avg_rate;   // avg_rate[k-1]: mean total rate of a k-device subset
    std::vector<double> thresholds; // thresholds[k-1] separates k and k+1 devices

    std::size_t devices() const noexcept { return avg_rate.size(); }
};

// Averaging summed rates over all C(n, k) subsets gives k times the mean device
// rate, so no enumeration is needed.
inline CountThresholds learn_count_thresholds(const std::vector<double>& device_rates) {
    require(device_rates.size() >= 2, ErrorCode::TooFewProfiles, "count thresholds need at least 2 devices");
    double mean = 0.0;
    for (double r : device_rates) {
        require(r >= 0.0, ErrorCode::InvalidArgument, "negative device rate");
        mean += r;
    }
    mean /= static_cast<double>(device_rates.size());
    CountThresholds t;
    for (std::size_t k = 1; k <= device_rates.size(); ++k) t.avg_rate.push_back(static_cast<double>(k) * mean);
    for (std::size_t k = 0; k + 1 < t.avg_rate.size(); ++k)
        t.thresholds.push_back(0.5 * (t.avg_rate[k] + t.avg_rate[k + 1]));
    return t;
}

inline CountThresholds learn_count_thresholds(const std::vector<DeviceProfile>& profiles) {
    std::vector<double> rates;
    for (const auto& p : profiles) rates.push_back(p.mean_rate);
    return learn_count_thresholds(rates);
}

// Generic midpoint classifier shared with q estimation: number of thresholds
// strictly below `value`.
inline std::size_t thresholds_below(double value, const std::vector<double>& thresholds) {
    return static_cast<std::size_t>(std::lower_bound(thresholds.begin(), thresholds.end(), value) - thresholds.begin());
}

inline std::size_t estimate_count(double rate, const CountThresholds& t) {
    require(rate >= 0.0, ErrorCode::InvalidArgument, "rate must be non-negative");
    return std::clamp<std::size_t>(thresholds_below(rate, t.thresholds) + 1, 1, t.devices());
}

// Observed aggregate: size histogram plus the recording length it came from.
struct Observation {
    SizeHistogram histogram;
    double duration = 0.0;

    double rate() const { return duration > 0.0 ? static_cast<double>(histogram.total()) / duration : 0.0; }
};

inline Observation observe(const Trace& t) { return {size_histogram(t), t.duration}; }

struct SubsetEstimate {
    enum class Method { FullComparison, Fsbc };

    Method method = Method::FullComparison;
    std::vector<std::size_t> members;   // indices into the profile list, ascending
    std::vector<std::string> devices;   // ids of members
    std::size_t estimated_count = 0;
    double distance = 0.0;              // full comparison: cosine distance of the winner
    std::vector<double> scores;         // FSBC: per-device score
    std::uint64_t operations = 0;       // rough count of arithmetic/lookup steps at test time
};

namespace detail {

inline void fill_devices(SubsetEstimate& e, const std::vector<DeviceProfile>& profiles) {
    e.devices.clear();
    for (auto i : e.members) e.devices.push_back(profiles[i].device_id);
}

} // namespace detail

inline constexpr std::size_t kMaxFullComparisonDevices = 20;

// Precomputes dense per-second profile vectors over the union of sizes.
class FullComparison {
public:
    explicit FullComparison(const std::vector<DeviceProfile>& profiles) : profiles_(&profiles) {
        require(!profiles.empty(), ErrorCode::InvalidArgument, "no profiles");
        require(profiles.size() <= kMaxFullComparisonDevices, ErrorCode::CombinatorialGuard,
                "full comparison limited to " + std::to_string(kMaxFullComparisonDevices) + " devices");
        std::set<std::uint32_t> keys;
        for (const auto& p : profiles)
            for (const auto& [s, _] : p.histogram.counts()) keys.insert(s);
        keys_.assign(keys.begin(), keys.end());
        for (const auto& p : profiles) {
            require(p.duration > 0.0, ErrorCode::EmptyProfile, p.device_id + ": profile without duration");
            std::vector<double> v(keys_.size(), 0.0);
            for (const auto& [s, c] : p.histogram.counts()) v[index_of(s)] = static_cast<double>(c) / p.duration;
            dense_.push_back(std::move(v));
        }
    }

    // Enumerates every subset whose size is within one of the rate-based
    // estimate and returns the cosine-nearest expected aggregate.
    SubsetEstimate check(const Observation& test, const CountThresholds& t) const {
        require(!test.histogram.empty(), ErrorCode::EmptyFeature, "empty test histogram");
        const std::size_t n = dense_.size();
        const std::size_t k_hat = std::min(estimate_count(test.rate(), t), n);
        return search(test, std::max<std::size_t>(1, k_hat - 1), std::min(n, k_hat + 1), k_hat);
    }

    // Same search over every non-empty subset.
    SubsetEstimate check_all(const Observation& test) const { return search(test, 1, dense_.size(), 0); }

private:
    std::size_t index_of(std::uint32_t s) const {
        return static_cast<std::size_t>(std::lower_bound(keys_.begin(), keys_.end(), s) - keys_.begin());
    }

    SubsetEstimate search(const Observation& test, std::size_t k_lo, std::size_t k_hi, std::size_t k_hat) const {
        const std::size_t dim = keys_.size();
        std::vector<double> tv(dim, 0.0);
        double outside = 0.0; // squared norm of test mass on sizes no profile has
        for (const auto& [s, c] : test.histogram.counts()) {
            const auto i = index_of(s);
            if (i < dim && keys_[i] == s)
                tv[i] = static_cast<double>(c);
            else
                outside += static_cast<double>(c) * static_cast<double>(c);
        }
        double tnorm2 = outside;
        for (double x : tv) tnorm2 += x * x;

        SubsetEstimate best;
        best.method = SubsetEstimate::Method::FullComparison;
        best.estimated_count = k_hat;
        best.distance = INFINITY;
        std::vector<std::vector<double>> acc(k_hi + 1, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> chosen;
        std::uint64_t ops = 0;

        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            // Depth-first over combinations; acc[d] holds the sum of the first d members.
            auto rec = [&](auto&& self, std::size_t start, std::size_t depth) -> void {
                if (depth == k) {
                    double dot = 0.0, n2 = 0.0;
                    const auto& e = acc[depth];
                    for (std::size_t i = 0; i < dim; ++i) {
                        dot += e[i] * tv[i];
                        n2 += e[i] * e[i];
                    }
                    ops += 2 * dim;
                    const double d = detail::cosine_from_parts(dot, n2, tnorm2);
                    if (d < best.distance) {
                        best.distance = d;
                        best.members = chosen;
                    }
                    return;
                }
                for (std::size_t i = start; i + (k - depth) <= dense_.size(); ++i) {
                    const auto& prev = acc[depth];
                    auto& next = acc[depth + 1];
                    const auto& v = dense_[i];
                    for (std::size_t x = 0; x < dim; ++x) next[x] = prev[x] + v[x];
                    ops += dim;
                    chosen.push_back(i);
                    self(self, i + 1, depth + 1);
                    chosen.pop_back();
                }
            };
            rec(rec, 0, 0);
        }
        best.operations = ops;
        detail::fill_devices(best, *profiles_);
        return best;
    }

    const std::vector<DeviceProfile>* profiles_;
    std::vector<std::uint32_t> keys_;
    std::vector<std::vector<double>> dense_;
};

inline SubsetEstimate full_comparison_check(const std::vector<DeviceProfile>& profiles, const Observation& test,
                                            const CountThresholds& t) {
    return FullComparison(profiles).check(test, t);
}

// Fast Scores Based Check. Learning-time work (unique and common sizes) happens
// in the constructor; check() is linear in the number of devices.
class Fsbc {
public:
    struct DeviceKeys {
        std::optional<std::uint32_t> unique_size;
        std::vector<std::pair<std::uint32_t, std::uint64_t>> common; // top f1% of distinct sizes
        double duration = 0.0;
    };

    Fsbc(const std::vector<DeviceProfile>& profiles, double f1_percent) : profiles_(&profiles) {
        require(f1_percent >= 0.0 && f1_percent <= 100.0, ErrorCode::InvalidArgument, "f1 must lie in [0, 100]");
        std::vector<DeviceProfile> annotated = profiles;
        annotate_unique_sizes(annotated);
        for (const auto& p : annotated) {
            DeviceKeys k;
            k.unique_size = p.top_unique_size;
            k.duration = p.duration;
            const auto ranked = p.common_sizes.empty() ? sizes_by_frequency(p.histogram) : p.common_sizes;
            const auto take = static_cast<std::size_t>(std::ceil(f1_percent / 100.0 * static_cast<double>(ranked.size()) - 1e-9));
            k.common.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(take, ranked.size())));
            keys_.push_back(std::move(k));
        }
    }

    const std::vector<DeviceKeys>& keys() const noexcept { return keys_; }

    // Per-device scores in [0, 1]. Learnt counts are scaled to the test duration.
    std::vector<double> scores(const Observation& test, double f2_percent, std::uint64_t* ops = nullptr) const {
        require(f2_percent >= 0.0 && f2_percent <= 100.0, ErrorCode::InvalidArgument, "f2 must lie in [0, 100]");
        std::uint32_t max_key = 0;
        if (!test.histogram.empty()) max_key = test.histogram.counts().rbegin()->first;
        std::vector<std::uint64_t> dense(static_cast<std::size_t>(max_key) + 1, 0);
        for (const auto& [s, c] : test.histogram.counts()) dense[s] = c;
        auto at = [&](std::uint32_t s) -> std::uint64_t { return s < dense.size() ? dense[s] : 0; };

        std::uint64_t count = test.histogram.distinct();
        const double f2 = f2_percent / 100.0;
        std::vector<double> out;
        out.reserve(keys_.size());
        for (const auto& k : keys_) {
            const double scale = k.duration > 0.0 ? test.duration / k.duration : 1.0;
            const double total = static_cast<double>(k.common.size() + (k.unique_size ? 1 : 0));
            double score = 1.0;
            if (total > 0.0) {
                if (k.unique_size && at(*k.unique_size) == 0) score -= 1.0 / total;
                for (const auto& [s, c] : k.common)
                    if (static_cast<double>(at(s)) < f2 * static_cast<double>(c) * scale) score -= 1.0 / total;
            }
            count += k.common.size() + 1;
            out.push_back(std::clamp(score, 0.0, 1.0));
        }
        if (ops) *ops = count;
        return out;
    }

    SubsetEstimate check(const Observation& test, double f2_percent, const CountThresholds& t) const {
        SubsetEstimate e;
        e.method = SubsetEstimate::Method::Fsbc;
        e.scores = scores(test, f2_percent, &e.operations);
        e.estimated_count = std::min(estimate_count(test.rate(), t), keys_.size());
        std::vector<std::size_t> order(keys_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return e.scores[a] > e.scores[b]; });
        e.members.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(e.estimated_count));
        std::sort(e.members.begin(), e.members.end());
        detail::fill_devices(e, *profiles_);
        return e;
    }

private:
    const std::vector<DeviceProfile>* profiles_;
    std::vector<DeviceKeys> keys_;
};

inline SubsetEstimate fsbc(const std::vector<DeviceProfile>& profiles, const Observation& test, double f1_percent,
                           double f2_percent, const CountThresholds& t) {
    return Fsbc(profiles, f1_percent).check(test, f2_percent, t);
}

struct SubsetMetrics {
    double recall = 0.0;
    double precision = 0.0;
    double exact = 0.0;
    bool undefined = false; // truth or estimate was empty
};

// Standard definitions: precision = |T n E| / |E|, recall = |T n E| / |T|.
inline SubsetMetrics subset_metrics(const std::vector<std::string>& truth, const std::vector<std::string>& estimate) {
    const std::set<std::string> t(truth.begin(), truth.end()), e(estimate.begin(), estimate.end());
    SubsetMetrics m;
    if (t.empty() || e.empty()) {
        m.undefined = true;
        return m;
    }
    std::size_t hit = 0;
    for (const auto& x : e) hit += t.count(x);
    m.precision = static_cast<double>(hit) / static_cast<double>(e.size());
    m.recall = static_cast<double>(hit) / static_cast<double>(t.size());
    m.exact = (t == e) ? 1.0 : 0.0;
    return m;
}

} // namespace iotfp
