#pragma once

// Telling windows that carry real traffic from windows of cover packets only.
// Each window of length T becomes a vector of T*R slot values (padded size, or
// 0 for a vacant slot) and is labelled by a k-nearest-neighbour vote.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/obfuscation.hpp"

namespace iotfp {

using SlotFeature = std::vector<double>;

inline SlotFeature slot_features(const TimeWindow& w, const StpParams& params) {
    params.validate();
    const auto n = static_cast<std::size_t>(params.slots_per_period());
    SlotFeature v(n, 0.0);
    for (const auto& p : w.packets) {
        const double pos = (p.timestamp - w.start) * params.R + 1e-6;
        require(pos >= 0.0, ErrorCode::MalformedShaping, "packet before window start");
        const auto i = std::min(static_cast<std::size_t>(pos), n - 1);
        require(v[i] == 0.0, ErrorCode::MalformedShaping, "two packets share one slot");
        v[i] = static_cast<double>(p.size);
    }
    return v;
}

struct LabeledWindow {
    SlotFeature x;
    bool real = false;
};

struct WindowCounts {
    std::size_t windows = 0;       // non-empty windows, partial leading window included
    std::size_t periods = 0;       // non-empty shaping periods (emitted / (T*R))
    std::size_t real_windows = 0;  // among the full-length non-empty windows
    std::size_t labeled = 0;       // full-length non-empty windows
};

// Splits a shaped trace into T-long windows starting at `offset` and labels
// every non-empty full window: real if any packet is real traffic. The partial
// leading window is dropped.
inline std::vector<LabeledWindow> label_training_windows(const Trace& shaped, const StpParams& params, double offset,
                                                         WindowCounts* counts = nullptr) {
    std::vector<LabeledWindow> out;
    WindowCounts c;
    c.periods = static_cast<std::size_t>(shaped.size() / static_cast<std::size_t>(params.slots_per_period()));
    for (const auto& w : split_windows(shaped, params.T, offset)) {
        if (w.empty()) continue;
        ++c.windows;
        if (w.partial) continue;
        LabeledWindow lw;
        lw.x = slot_features(w, params);
        lw.real = std::any_of(w.packets.begin(), w.packets.end(), [](const PacketRecord& p) { return !p.is_cover; });
        c.real_windows += lw.real;
        out.push_back(std::move(lw));
    }
    c.labeled = out.size();
    if (counts) *counts = c;
    return out;
}

// Unlabelled features of every non-empty full window, same split as above.
inline std::vector<SlotFeature> window_features(const Trace& shaped, const StpParams& params, double offset) {
    std::vector<SlotFeature> out;
    for (const auto& w : split_windows(shaped, params.T, offset))
        if (!w.empty() && !w.partial) out.push_back(slot_features(w, params));
    return out;
}

inline double squared_euclidean(const SlotFeature& a, const SlotFeature& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct KnnModel {
    std::vector<SlotFeature> x;
    std::vector<bool> real;
    std::size_t k = 1;
    double cv_accuracy = 0.0;
    std::vector<double> cv_curve; // mean CV accuracy for k = 1, 2, ...

    std::size_t size() const noexcept { return x.size(); }
};

namespace detail {

// Indices of the `m` nearest training points; equal distances keep index order.
inline std::vector<std::size_t> nearest(const std::vector<SlotFeature>& train, const std::vector<std::size_t>& pool,
                                        const SlotFeature& q, std::size_t m) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(pool.size());
    for (auto i : pool) d.emplace_back(squared_euclidean(train[i], q), i);
    m = std::min(m, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m), d.end());
    std::vector<std::size_t> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(d[i].second);
    return out;
}

} // namespace detail

// k chosen by `folds`-fold cross validation over [k_min, k_max]; ties pick the
// smaller k. Fold assignment is a seeded shuffle.
inline KnnModel train_knn(const std::vector<LabeledWindow>& labeled, std::size_t k_min = 1, std::size_t k_max = 150,
                          std::size_t folds = 10, std::uint64_t seed = 0) {
    require(k_min >= 1 && k_min <= k_max, ErrorCode::InvalidArgument, "need 1 <= k_min <= k_max");
    require(folds >= 2, ErrorCode::InvalidArgument, "need at least 2 folds");
    std::size_t pos = 0;
    for (const auto& l : labeled) pos += l.real;
    const std::size_t neg = labeled.size() - pos;
    require(pos > 0 && neg > 0, ErrorCode::SingleClass, "training windows carry a single label");
    require(pos >= folds && neg >= folds, ErrorCode::InvalidArgument, "fewer examples of a class than folds");

    KnnModel m;
    for (const auto& l : labeled) {
        m.x.push_back(l.x);
        m.real.push_back(l.real);
    }
    const std::size_t n = labeled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed, {0x6b6e6eULL});
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t smallest_train = n - (n + folds - 1) / folds;
    k_max = std::min(k_max, smallest_train);
    require(k_min <= k_max, ErrorCode::InvalidArgument, "k_min exceeds the training fold size");

    std::vector<double> correct(k_max + 1, 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(order[i]);
        for (auto t : test) {
            const auto nn = detail::nearest(m.x, train, m.x[t], k_max);
            std::size_t votes_real = 0;
            for (std::size_t k = 1; k <= k_max; ++k) {
                votes_real += m.real[nn[k - 1]];
                const bool pred = 2 * votes_real >= k; // ties vote real
                if (k >= k_min && pred == m.real[t]) correct[k] += 1.0;
            }
        }
    }
    m.cv_curve.assign(k_max, 0.0);
    m.k = k_min;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        m.cv_curve[k - 1] = correct[k] / static_cast<double>(n);
        if (m.cv_curve[k - 1] > m.cv_curve[m.k - 1]) m.k = k;
    }
    m.cv_accuracy = m.cv_curve[m.k - 1];
    return m;
}

inline KnnModel make_knn(const std::vector<LabeledWindow>& labeled, std::size_t k) {
    require(k >= 1 && k <= labeled.size(), ErrorCode::InvalidArgument, "k must lie in [1, training size]");
    KnnModel m;
    for (const auto& l : labeled) {
        m.x.push_back(l.x);
        m.real.push_back(l.real);
    }
    m.k = k;
    return m;
}

inline bool classify_window(const KnnModel& m, const SlotFeature& x) {
    require(m.k >= 1 && m.k <= m.size(), ErrorCode::InvalidArgument, "model k out of range");
    std::vector<std::size_t> all(m.size());
    std::iota(all.begin(), all.end(), 0);
    std::size_t votes = 0;
    for (auto i : detail::nearest(m.x, all, x, m.k)) votes += m.real[i];
    return 2 * votes >= m.k;
}

struct BinaryMetrics {
    double recall = 0.0;
    double precision = 0.0;
    double accuracy = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    bool precision_undefined = false; // nothing predicted positive
    bool recall_undefined = false;    // no positive in the truth
};

inline BinaryMetrics binary_metrics(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
    require(predicted.size() == truth.size(), ErrorCode::InvalidArgument, "prediction and truth differ in length");
    BinaryMetrics b;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] && truth[i]) ++b.tp;
        else if (predicted[i]) ++b.fp;
        else if (truth[i]) ++b.fn;
        else ++b.tn;
    }
    b.precision_undefined = b.tp + b.fp == 0;
    b.recall_undefined = b.tp + b.fn == 0;
    b.precision = b.precision_undefined ? 0.0 : static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fp);
    b.recall = b.recall_undefined ? 0.0 : static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fn);
    b.accuracy = truth.empty() ? 0.0 : static_cast<double>(b.tp + b.tn) / static_cast<double>(truth.size());
    return b;
}

struct WindowClassification {
    std::vector<bool> real;
    BinaryMetrics metrics; // filled when ground truth is supplied
};

inline WindowClassification classify_windows(const KnnModel& m, const std::vector<SlotFeature>& windows) {
    WindowClassification c;
    c.real.reserve(windows.size());
    for (const auto& w : windows) c.real.push_back(classify_window(m, w));
    return c;
}

inline WindowClassification classify_windows(const KnnModel& m, const std::vector<LabeledWindow>& windows) {
    std::vector<SlotFeature> x;
    std::vector<bool> truth;
    for (const auto& w : windows) {
        x.push_back(w.x);
        truth.push_back(w.real);
    }
    auto c = classify_windows(m, x);
    c.metrics = binary_metrics(c.real, truth);
    return c;
}

} // namespace iotfp
