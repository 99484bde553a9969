#pragma once

// Defender-side anomaly detection on raw device traffic. Windows are scored by
// their packet-size distribution (LOF against normal windows, or Jensen-Shannon
// distance to the whole normal trace) and flagged above an ROC-chosen threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/metrics.hpp"
#include "iotfp/synth.hpp"
#include "iotfp/window_detector.hpp"

namespace iotfp {

struct AttackProfile {
    std::string name;
    std::vector<WeightedSize> sizes;
    double rate = 1.0;             // pps inside a burst
    double burst_length = 10.0;    // seconds
    int bursts_per_window = 1;

    void validate() const {
        require(!sizes.empty(), ErrorCode::InvalidArgument, name + ": attack needs sizes");
        double s = 0.0;
        for (const auto& w : sizes) s += w.weight;
        require(std::abs(s - 1.0) < 1e-9, ErrorCode::InvalidArgument, name + ": attack size weights must sum to 1");
        require(rate > 0.0 && burst_length > 0.0 && bursts_per_window >= 1, ErrorCode::InvalidArgument,
                name + ": attack rate, burst length and burst count must be positive");
    }
};

// Stand-ins for the three botnet stages. Their sizes avoid every size used by
// the default corpus.
inline AttackProfile syn_flood() { return {"syn_flood", {{54, 1.0}}, 50.0, 10.0, 1}; }
inline AttackProfile dns_attack() { return {"dns_attack", {{90, 0.5}, {92, 0.5}}, 30.0, 10.0, 1}; }
inline AttackProfile cnc_infection() {
    return {"cnc_infection", {{60, 0.4}, {68, 0.3}, {76, 0.2}, {150, 0.1}}, 5.0, 5.0, 4};
}

inline std::vector<AttackProfile> builtin_attacks() { return {cnc_infection(), syn_flood(), dns_attack()}; }

inline AttackProfile attack_by_name(const std::string& name) {
    for (auto a : builtin_attacks())
        if (a.name == name) return a;
    fail(ErrorCode::InvalidArgument, "unknown attack profile '" + name + "'");
}

struct Injection {
    Trace trace;
    std::vector<std::size_t> windows; // indices of windows that received attack packets, ascending
    std::size_t injected = 0;
};

// Picks ceil(fraction * windows) windows without replacement and adds the
// profile's bursts to each. Every chosen window gets at least one attack packet.
inline Injection inject_attack(const Trace& trace, const AttackProfile& profile, double window_length,
                               double fraction, Rng& rng) {
    profile.validate();
    require(fraction >= 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "fraction must lie in [0, 1]");
    require(window_length > 0.0 && trace.duration >= window_length, ErrorCode::InvalidArgument,
            "trace shorter than one window");
    const auto n = static_cast<std::size_t>(std::floor(trace.duration / window_length + 1e-9));
    const auto m = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));

    Injection out;
    out.trace.duration = trace.duration;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    out.windows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(out.windows.begin(), out.windows.end());

    auto size_dist = detail::weights_of(profile.sizes);
    std::exponential_distribution<double> gap(profile.rate);
    const double burst = std::min(profile.burst_length, window_length);
    std::uniform_real_distribution<double> where(0.0, window_length - burst);

    std::vector<PacketRecord> attack;
    const std::string device = trace.empty() ? std::string() : trace.packets.front().device_id;
    for (auto w : out.windows) {
        const double ws = static_cast<double>(w) * window_length;
        const std::size_t before = attack.size();
        for (int b = 0; b < profile.bursts_per_window; ++b) {
            const double start = ws + where(rng);
            for (double t = start + gap(rng); t < start + burst; t += gap(rng))
                attack.push_back({t, profile.sizes[size_dist(rng)].size, device, false, true});
        }
        if (attack.size() == before) attack.push_back({ws, profile.sizes[size_dist(rng)].size, device, false, true});
    }
    out.injected = attack.size();
    std::sort(attack.begin(), attack.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    out.trace.packets.reserve(trace.size() + attack.size());
    std::merge(trace.packets.begin(), trace.packets.end(), attack.begin(), attack.end(),
               std::back_inserter(out.trace.packets),
               [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return out;
}

// Size histograms of consecutive windows [k*L, (k+1)*L) covering the duration.
inline std::vector<SizeHistogram> window_histograms(const Trace& trace, double window_length) {
    std::vector<SizeHistogram> out;
    for (const auto& w : split_windows(trace, window_length, 0.0)) out.push_back(size_histogram(w.packets));
    return out;
}

// Ground truth for scoring only: a window is abnormal if it holds an attack packet.
inline std::vector<bool> attack_window_labels(const Trace& trace, double window_length) {
    std::vector<bool> out;
    for (const auto& w : split_windows(trace, window_length, 0.0))
        out.push_back(std::any_of(w.packets.begin(), w.packets.end(), [](const auto& p) { return p.is_attack; }));
    return out;
}

// Empty windows cannot be scored; they get score 0 and a flag.
struct WindowScores {
    std::vector<double> scores;
    std::vector<bool> empty;
};

inline WindowScores js_scores(const SizeHistogram& normal, const std::vector<SizeHistogram>& windows) {
    require(!normal.empty(), ErrorCode::EmptyFeature, "empty normal histogram");
    WindowScores s;
    for (const auto& w : windows) {
        s.empty.push_back(w.empty());
        s.scores.push_back(w.empty() ? 0.0 : jsd(w, normal));
    }
    return s;
}

// Local outlier factor in novelty mode: `normal` is the reference set and each
// evaluated window is scored against it. Distance is the Jensen-Shannon
// distance. Follows the common convention lrd = 1 / (mean reach-dist + 1e-10).
inline WindowScores lof_scores(const std::vector<SizeHistogram>& normal, const std::vector<SizeHistogram>& windows,
                               std::size_t neighborhood = 20) {
    std::vector<const SizeHistogram*> ref;
    for (const auto& h : normal)
        if (!h.empty()) ref.push_back(&h);
    require(neighborhood >= 1, ErrorCode::InvalidArgument, "neighborhood must be positive");
    require(ref.size() > neighborhood, ErrorCode::InvalidArgument,
            "LOF needs more non-empty normal windows than the neighborhood size");
    const std::size_t n = ref.size(), k = neighborhood;

    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = jsd(*ref[i], *ref[j]);

    // k nearest references of a point, given its distances to every reference
    // (self excluded by the caller). Stable in index order on ties.
    auto knn = [&](const std::vector<double>& dist, std::size_t skip) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n; ++i)
            if (i != skip) idx.push_back(i);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return dist[a] < dist[b]; });
        idx.resize(k);
        return idx;
    };

    std::vector<double> kdist(n);
    std::vector<std::vector<std::size_t>> nbrs(n);
    for (std::size_t i = 0; i < n; ++i) {
        nbrs[i] = knn(d[i], i);
        kdist[i] = d[i][nbrs[i].back()];
    }
    auto lrd_of = [&](const std::vector<double>& dist, const std::vector<std::size_t>& nb) {
        double reach = 0.0;
        for (auto o : nb) reach += std::max(kdist[o], dist[o]);
        return 1.0 / (reach / static_cast<double>(nb.size()) + 1e-10);
    };
    std::vector<double> lrd(n);
    for (std::size_t i = 0; i < n; ++i) lrd[i] = lrd_of(d[i], nbrs[i]);

    WindowScores s;
    for (const auto& w : windows) {
        s.empty.push_back(w.empty());
        if (w.empty()) {
            s.scores.push_back(0.0);
            continue;
        }
        std::vector<double> dist(n);
        for (std::size_t i = 0; i < n; ++i) dist[i] = jsd(w, *ref[i]);
        const auto nb = knn(dist, n);
        const double l = lrd_of(dist, nb);
        double mean = 0.0;
        for (auto o : nb) mean += lrd[o];
        mean /= static_cast<double>(nb.size());
        s.scores.push_back(mean / l);
    }
    return s;
}

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct ThresholdSelection {
    double threshold = 0.0;
    double accuracy = 0.0;
    std::vector<RocPoint> roc; // ascending threshold, so descending rates
    double auc = 0.0;
    double eer = 0.0;
};

namespace detail {

// Candidate cuts for the rule "abnormal iff score > cut": just below the
// smallest score, each midpoint between adjacent distinct scores, and the largest.
inline std::vector<double> candidate_cuts(std::vector<double> scores) {
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::vector<double> cuts{std::nextafter(scores.front(), -std::numeric_limits<double>::infinity())};
    for (std::size_t i = 0; i + 1 < scores.size(); ++i) cuts.push_back(0.5 * (scores[i] + scores[i + 1]));
    cuts.push_back(scores.back());
    return cuts;
}

} // namespace detail

// Picks the most accurate cut on validation scores; ties go to the lower cut.
// AUC counts tied (positive, negative) pairs as one half.
inline ThresholdSelection select_threshold(const std::vector<double>& scores, const std::vector<bool>& abnormal) {
    require(scores.size() == abnormal.size() && !scores.empty(), ErrorCode::InvalidArgument,
            "scores and labels must be non-empty and of equal length");
    const auto pos = static_cast<std::size_t>(std::count(abnormal.begin(), abnormal.end(), true));
    const std::size_t neg = abnormal.size() - pos;
    require(pos > 0 && neg > 0, ErrorCode::SingleClass, "threshold selection needs both classes");

    ThresholdSelection sel;
    sel.accuracy = -1.0;
    for (double cut : detail::candidate_cuts(scores)) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (scores[i] > cut) (abnormal[i] ? tp : fp)++;
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        sel.roc.push_back({cut, fpr, tpr});
        const double acc = static_cast<double>(tp + (neg - fp)) / static_cast<double>(scores.size());
        if (acc > sel.accuracy) {
            sel.accuracy = acc;
            sel.threshold = cut;
        }
    }

    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!abnormal[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (abnormal[j]) continue;
            wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    }
    sel.auc = wins / (static_cast<double>(pos) * static_cast<double>(neg));

    // Equal error rate: where fpr crosses 1 - tpr, interpolated between ROC points.
    sel.eer = 1.0;
    const auto& r = sel.roc;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double gap = r[i].fpr - (1.0 - r[i].tpr);
        if (gap == 0.0) {
            sel.eer = r[i].fpr;
            break;
        }
        if (i + 1 < r.size()) {
            const double next = r[i + 1].fpr - (1.0 - r[i + 1].tpr);
            if ((gap > 0.0) != (next > 0.0)) {
                const double t = gap / (gap - next);
                sel.eer = r[i].fpr + t * (r[i + 1].fpr - r[i].fpr);
                break;
            }
        }
    }
    return sel;
}

enum class AnomalyMethod { Lof, Js };

inline std::string to_string(AnomalyMethod m) { return m == AnomalyMethod::Lof ? "lof" : "js"; }

inline AnomalyMethod anomaly_method(const std::string& s) {
    if (s == "lof") return AnomalyMethod::Lof;
    if (s == "js") return AnomalyMethod::Js;
    fail(ErrorCode::InvalidArgument, "unknown anomaly method '" + s + "'");
}

struct AnomalyModel {
    AnomalyMethod method = AnomalyMethod::Js;
    double threshold = 0.0;
    double window_length = 120.0;
    std::size_t neighborhood = 20;
    std::vector<SizeHistogram> reference_windows; // LOF
    SizeHistogram reference;                      // JS
    ThresholdSelection validation;

    WindowScores score(const std::vector<SizeHistogram>& windows) const {
        return method == AnomalyMethod::Lof ? lof_scores(reference_windows, windows, neighborhood)
                                            : js_scores(reference, windows);
    }
};

// Learns the reference from `normal` and the threshold from `validation`, whose
// attack flags provide the validation labels.
inline AnomalyModel train_anomaly_model(AnomalyMethod method, const Trace& normal, const Trace& validation,
                                        double window_length = 120.0, std::size_t neighborhood = 20) {
    AnomalyModel m;
    m.method = method;
    m.window_length = window_length;
    m.neighborhood = neighborhood;
    m.reference_windows = window_histograms(normal, window_length);
    m.reference = size_histogram(normal);
    const auto s = m.score(window_histograms(validation, window_length));
    m.validation = select_threshold(s.scores, attack_window_labels(validation, window_length));
    m.threshold = m.validation.threshold;
    return m;
}

struct Detection {
    std::vector<double> scores;
    std::vector<bool> abnormal;
    std::vector<bool> empty;
    BinaryMetrics metrics;
};

inline Detection detect(const AnomalyModel& m, const std::vector<SizeHistogram>& windows) {
    Detection d;
    const auto s = m.score(windows);
    d.scores = s.scores;
    d.empty = s.empty;
    for (double x : d.scores) d.abnormal.push_back(x > m.threshold);
    return d;
}

inline Detection detect(const AnomalyModel& m, const Trace& test) {
    auto d = detect(m, window_histograms(test, m.window_length));
    d.metrics = binary_metrics(d.abnormal, attack_window_labels(test, m.window_length));
    return d;
}

} // namespace iotfp
