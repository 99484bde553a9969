#pragma once

// Device identification from packet-size distributions: learnt profiles,
// nearest-profile classification, confusion matrices and the diagonal-rate.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/metrics.hpp"

namespace iotfp {

struct DeviceProfile {
    std::string device_id;
    SizeHistogram histogram;
    double mean_rate = 0.0; // pps over the learning trace
    double duration = 0.0;  // seconds of traffic the profile was learnt from
    std::optional<std::uint32_t> top_unique_size;
    // Every observed size, most frequent first (ties: smaller size first).
    std::vector<std::pair<std::uint32_t, std::uint64_t>> common_sizes;
    // Free-form simulation parameters, e.g. {"W", 90} or {"q", 0.5}.
    std::map<std::string, double> tags;

    friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

inline std::vector<std::pair<std::uint32_t, std::uint64_t>> sizes_by_frequency(const SizeHistogram& h) {
    std::vector<std::pair<std::uint32_t, std::uint64_t>> v(h.counts().begin(), h.counts().end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return v;
}

// Ground-truth flags are not read.
inline DeviceProfile learn_profile(const Trace& shaped, std::string device_id = {}) {
    require(!shaped.empty(), ErrorCode::EmptyProfile, "cannot learn a profile from an empty trace");
    require(shaped.duration > 0.0, ErrorCode::EmptyProfile, "cannot learn a profile from a zero-length trace");
    DeviceProfile p;
    p.device_id = device_id.empty() ? shaped.packets.front().device_id : std::move(device_id);
    p.histogram = size_histogram(shaped);
    p.duration = shaped.duration;
    p.mean_rate = static_cast<double>(shaped.size()) / shaped.duration;
    p.common_sizes = sizes_by_frequency(p.histogram);
    return p;
}

// Fills top_unique_size: the most frequent size a device emits that no other
// profile in the corpus contains. Devices without such a size keep nullopt.
inline void annotate_unique_sizes(std::vector<DeviceProfile>& profiles) {
    std::map<std::uint32_t, int> owners;
    for (const auto& p : profiles)
        for (const auto& [s, _] : p.histogram.counts()) ++owners[s];
    for (auto& p : profiles) {
        p.top_unique_size.reset();
        std::uint64_t best = 0;
        for (const auto& [s, c] : p.histogram.counts())
            if (owners[s] == 1 && c > best) {
                best = c;
                p.top_unique_size = s;
            }
    }
}

struct Classification {
    std::size_t index = 0;
    std::string device_id;
    double distance = 0.0;
};

inline std::vector<Classification> rank_devices(const std::vector<DeviceProfile>& profiles, const SizeHistogram& test) {
    require(!profiles.empty(), ErrorCode::InvalidArgument, "no profiles to classify against");
    require(!test.empty(), ErrorCode::EmptyFeature, "empty test histogram");
    std::vector<Classification> out;
    for (std::size_t i = 0; i < profiles.size(); ++i)
        out.push_back({i, profiles[i].device_id, cosine_distance(profiles[i].histogram, test)});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.distance < b.distance; });
    return out;
}

// Nearest profile by cosine distance; ties go to the lowest index.
inline Classification classify_dominant(const std::vector<DeviceProfile>& profiles, const SizeHistogram& test) {
    return rank_devices(profiles, test).front();
}

enum class Feature { PacketSize, InterArrival, Joint };

inline FrequencyVector extract_feature(const Trace& trace, Feature f) {
    switch (f) {
    case Feature::PacketSize: return size_histogram(trace).frequencies();
    case Feature::InterArrival: return interarrival_histogram(trace).frequencies();
    case Feature::Joint: return joint_histogram(trace, 1.0, 1).as_feature();
    }
    return {};
}

struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> entries; // [model i][test j]

    std::size_t size() const noexcept { return labels.size(); }
    double at(std::size_t i, std::size_t j) const { return entries.at(i).at(j); }
};

// Entry (i, j) = cosine distance between model i and test j. Tests are reordered
// to follow the model labels.
inline ConfusionMatrix confusion_matrix(const std::vector<std::string>& model_labels,
                                        const std::vector<FrequencyVector>& models,
                                        const std::vector<std::string>& test_labels,
                                        const std::vector<FrequencyVector>& tests) {
    require(model_labels.size() == models.size() && test_labels.size() == tests.size(), ErrorCode::InvalidArgument,
            "labels and vectors differ in length");
    require(std::set(model_labels.begin(), model_labels.end()) == std::set(test_labels.begin(), test_labels.end()) &&
                model_labels.size() == test_labels.size(),
            ErrorCode::LabelMismatch, "model and test label sets differ");
    ConfusionMatrix m;
    m.labels = model_labels;
    const std::size_t n = models.size();
    m.entries.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        const auto pos = static_cast<std::size_t>(
            std::find(test_labels.begin(), test_labels.end(), model_labels[j]) - test_labels.begin());
        for (std::size_t i = 0; i < n; ++i) m.entries[i][j] = cosine_distance(models[i], tests[pos]);
    }
    return m;
}

inline ConfusionMatrix confusion_matrix(const std::vector<DeviceProfile>& profiles, const std::vector<Trace>& tests,
                                        const std::vector<std::string>& test_labels) {
    std::vector<std::string> labels;
    std::vector<FrequencyVector> models, tv;
    for (const auto& p : profiles) {
        labels.push_back(p.device_id);
        models.push_back(p.histogram.frequencies());
    }
    for (const auto& t : tests) tv.push_back(size_histogram(t).frequencies());
    return confusion_matrix(labels, models, test_labels, tv);
}

// Same machinery for any feature extractor: learning and test traces in label order.
inline ConfusionMatrix confusion_matrix(const std::vector<std::string>& labels, const std::vector<Trace>& learn,
                                        const std::vector<Trace>& tests, Feature f) {
    std::vector<FrequencyVector> models, tv;
    for (const auto& t : learn) models.push_back(extract_feature(t, f));
    for (const auto& t : tests) tv.push_back(extract_feature(t, f));
    return confusion_matrix(labels, models, labels, tv);
}

// Fraction of columns whose strict minimum sits on the diagonal.
inline double diagonal_rate(const ConfusionMatrix& m) {
    const std::size_t n = m.size();
    require(m.entries.size() == n, ErrorCode::InvalidArgument, "confusion matrix must be square");
    if (n == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = m.entries[j][j];
        bool strict = true;
        for (std::size_t i = 0; i < n && strict; ++i)
            if (i != j && m.entries[i][j] <= d) strict = false;
        if (strict) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

inline ConfusionMatrix average_matrices(const std::vector<ConfusionMatrix>& ms) {
    require(!ms.empty(), ErrorCode::InvalidArgument, "nothing to average");
    ConfusionMatrix avg = ms.front();
    for (std::size_t k = 1; k < ms.size(); ++k) {
        require(ms[k].labels == avg.labels, ErrorCode::LabelMismatch, "matrices have different labels");
        for (std::size_t i = 0; i < avg.size(); ++i)
            for (std::size_t j = 0; j < avg.size(); ++j) avg.entries[i][j] += ms[k].entries[i][j];
    }
    for (auto& row : avg.entries)
        for (auto& v : row) v /= static_cast<double>(ms.size());
    return avg;
}

// ---------------------------------------------------------------------------
// Rendering. Darker glyphs / pixels encode larger distances.

inline std::string to_csv(const ConfusionMatrix& m) {
    std::ostringstream os;
    os.precision(6);
    os << "model\\test";
    for (const auto& l : m.labels) os << ',' << l;
    os << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << m.labels[i];
        for (std::size_t j = 0; j < m.size(); ++j) os << ',' << m.entries[i][j];
        os << '\n';
    }
    return os.str();
}

inline std::pair<double, double> value_range(const ConfusionMatrix& m) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : m.entries)
        for (double v : r) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    return {lo, hi};
}

inline std::string ascii_heatmap(const ConfusionMatrix& m) {
    static constexpr std::string_view ramp = " .:-=+*#%@";
    const auto [lo, hi] = value_range(m);
    const double span = hi > lo ? hi - lo : 1.0;
    std::ostringstream os;
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << m.labels[i] << " |";
        for (std::size_t j = 0; j < m.size(); ++j) {
            const auto g = static_cast<std::size_t>((m.entries[i][j] - lo) / span * (ramp.size() - 1) + 0.5);
            os << ramp[std::min(g, ramp.size() - 1)] << ramp[std::min(g, ramp.size() - 1)];
        }
        os << "|\n";
    }
    return os.str();
}

// Binary PGM, `cell` pixels per entry; black = largest value.
inline std::string pgm_heatmap(const ConfusionMatrix& m, int cell = 16) {
    const auto [lo, hi] = value_range(m);
    const double span = hi > lo ? hi - lo : 1.0;
    const int n = static_cast<int>(m.size());
    std::ostringstream os;
    os << "P5\n" << n * cell << ' ' << n * cell << "\n255\n";
    for (int y = 0; y < n * cell; ++y)
        for (int x = 0; x < n * cell; ++x) {
            const double v = (m.entries[static_cast<std::size_t>(y / cell)][static_cast<std::size_t>(x / cell)] - lo) / span;
            os.put(static_cast<char>(static_cast<unsigned char>(255.0 * (1.0 - v) + 0.5)));
        }
    return os.str();
}

} // namespace iotfp
