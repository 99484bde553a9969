#pragma once

// End-to-end pipelines over a device corpus. Each pipeline returns a typed
// result; run_experiment turns results into report files (CSV tables, ASCII and
// PGM heatmaps, and a JSON summary that embeds the full configuration).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "iotfp/aggregate.hpp"
#include "iotfp/anomaly.hpp"
#include "iotfp/core.hpp"
#include "iotfp/error.hpp"
#include "iotfp/fingerprint.hpp"
#include "iotfp/io.hpp"
#include "iotfp/metrics.hpp"
#include "iotfp/obfuscation.hpp"
#include "iotfp/param_estimation.hpp"
#include "iotfp/synth.hpp"
#include "iotfp/window_detector.hpp"

namespace iotfp {

struct ExperimentConfig {
    std::uint64_t seed = 0;
    double q = 0.1;
    double T = 1.0;
    double R = 100.0;
    std::uint32_t W = 80;
    double learn_duration = 10800.0;
    double test_duration = 1800.0;
    std::string corpus = "default"; // "default" or a directory with learn/ and test/ traces
    std::string out_dir = "reports";

    std::size_t subsets = 200;        // sampled subsets for count / subset experiments
    std::size_t corpus_devices = 0;   // 0 = whole corpus, else a seeded sample of this many
    double f1 = 80.0;
    double f2 = 90.0;
    std::size_t w_trials = 100;
    double window_offset = 0.5;       // fraction of T
    std::size_t knn_train_windows = 3000;
    std::size_t k_max = 150;
    std::size_t folds = 10;
    double anomaly_duration = 3600.0;
    double anomaly_window = 120.0;
    double anomaly_fraction = 0.5;
    std::size_t lof_neighborhood = 20;

    StpParams stp() const {
        StpParams p;
        p.q = q;
        p.T = T;
        p.R = R;
        p.W = W;
        return p;
    }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    return {{"seed", c.seed},
            {"q", c.q},
            {"T", c.T},
            {"R", c.R},
            {"W", c.W},
            {"learn_duration", c.learn_duration},
            {"test_duration", c.test_duration},
            {"corpus", c.corpus},
            {"subsets", c.subsets},
            {"corpus_devices", c.corpus_devices},
            {"f1", c.f1},
            {"f2", c.f2},
            {"w_trials", c.w_trials},
            {"window_offset", c.window_offset},
            {"knn_train_windows", c.knn_train_windows},
            {"k_max", c.k_max},
            {"folds", c.folds},
            {"anomaly_duration", c.anomaly_duration},
            {"anomaly_window", c.anomaly_window},
            {"anomaly_fraction", c.anomaly_fraction},
            {"lof_neighborhood", c.lof_neighborhood}};
}

// Missing keys keep their defaults, so a partial document is a valid config.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        get("seed", c.seed);
        get("q", c.q);
        get("T", c.T);
        get("R", c.R);
        get("W", c.W);
        get("learn_duration", c.learn_duration);
        get("test_duration", c.test_duration);
        get("corpus", c.corpus);
        get("subsets", c.subsets);
        get("corpus_devices", c.corpus_devices);
        get("f1", c.f1);
        get("f2", c.f2);
        get("w_trials", c.w_trials);
        get("window_offset", c.window_offset);
        get("knn_train_windows", c.knn_train_windows);
        get("k_max", c.k_max);
        get("folds", c.folds);
        get("anomaly_duration", c.anomaly_duration);
        get("anomaly_window", c.anomaly_window);
        get("anomaly_fraction", c.anomaly_fraction);
        get("lof_neighborhood", c.lof_neighborhood);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, std::string("config: ") + e.what());
    }
    return c;
}

// Stream tags keep every stage on its own random stream.
enum Stream : std::uint64_t {
    kLearnTrace = 1,
    kTestTrace,
    kShapeLearn,
    kShapeTest,
    kSubsetSampling,
    kDeviceSelection,
    kWGrid,
    kWTrial,
    kQThreshold,
    kQTest,
    kWindowSample,
    kKnnFolds,
    kAnomalyTrace,
    kAnomalyInject,
    kPermutation,
};

// ---------------------------------------------------------------------------
// Corpus

struct Corpus {
    std::vector<std::string> ids;
    std::vector<Trace> learn; // unshaped
    std::vector<Trace> test;  // unshaped

    std::size_t size() const noexcept { return ids.size(); }
};

inline Corpus synth_corpus(const std::vector<DeviceSpec>& specs, std::uint64_t seed, double learn_duration,
                           double test_duration) {
    Corpus c;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        c.ids.push_back(specs[i].device_id);
        Rng a = make_rng(seed, {kLearnTrace, i});
        c.learn.push_back(synth_device(specs[i], learn_duration, a));
        Rng b = make_rng(seed, {kTestTrace, i});
        c.test.push_back(synth_device(specs[i], test_duration, b));
    }
    return c;
}

// <dir>/learn/<id>.csv and <dir>/test/<id>.csv for every id present in both.
inline Corpus load_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir / "learn") || !fs::is_directory(dir / "test"))
        fail(ErrorCode::Io, "corpus " + dir.string() + " needs learn/ and test/ subdirectories");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir / "learn"))
        if (e.path().extension() == ".csv" && fs::exists(dir / "test" / e.path().filename()))
            ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) fail(ErrorCode::Io, "corpus " + dir.string() + " holds no device traces");
    Corpus c;
    for (const auto& id : ids) {
        c.ids.push_back(id);
        c.learn.push_back(load_trace(dir / "learn" / (id + ".csv")));
        c.test.push_back(load_trace(dir / "test" / (id + ".csv")));
    }
    return c;
}

inline Corpus select_devices(const Corpus& c, const std::vector<std::size_t>& keep) {
    Corpus out;
    for (auto i : keep) {
        out.ids.push_back(c.ids.at(i));
        out.learn.push_back(c.learn.at(i));
        out.test.push_back(c.test.at(i));
    }
    return out;
}

inline Corpus corpus_for(const ExperimentConfig& cfg) {
    Corpus c = cfg.corpus == "default"
                   ? synth_corpus(default_corpus(), cfg.seed, cfg.learn_duration, cfg.test_duration)
                   : load_corpus(cfg.corpus);
    if (cfg.corpus_devices > 0 && cfg.corpus_devices < c.size()) {
        std::vector<std::size_t> idx(c.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng = make_rng(cfg.seed, {kDeviceSelection});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(cfg.corpus_devices);
        std::sort(idx.begin(), idx.end());
        c = select_devices(c, idx);
    }
    return c;
}

// Shaped learning profiles and shaped test traces, one per device.
struct ShapedCorpus {
    std::vector<std::string> ids;
    std::vector<DeviceProfile> profiles;
    std::vector<Trace> tests;
};

inline ShapedCorpus shape_corpus(const Corpus& c, const StpParams& params, const PaddingScheme& padding,
                                 std::uint64_t seed) {
    ShapedCorpus s;
    s.ids = c.ids;
    for (std::size_t i = 0; i < c.size(); ++i) {
        Rng a = make_rng(seed, {kShapeLearn, i});
        s.profiles.push_back(learn_profile(stp_shape(c.learn[i], params, padding, a), c.ids[i]));
        Rng b = make_rng(seed, {kShapeTest, i});
        s.tests.push_back(stp_shape(c.test[i], params, padding, b));
    }
    annotate_unique_sizes(s.profiles);
    return s;
}

// ---------------------------------------------------------------------------
// Identification of a single device

struct DominantResult {
    ConfusionMatrix sizes;
    double diagonal_rate = 0.0;
    ConfusionMatrix interarrival;
    double interarrival_rate = 0.0;
    ConfusionMatrix joint;
    double joint_rate = 0.0;
};

// Each device alone behind the NAT: its shaped test traffic with ids erased.
inline DominantResult run_dominant(const ShapedCorpus& s) {
    DominantResult r;
    std::vector<Trace> observed;
    for (const auto& t : s.tests) observed.push_back(nat_aggregate({t}));
    r.sizes = confusion_matrix(s.profiles, observed, s.ids);
    r.diagonal_rate = diagonal_rate(r.sizes);
    return r;
}

inline DominantResult run_dominant(const Corpus& c, const ExperimentConfig& cfg, const PaddingScheme& padding,
                                   bool feature_comparison = true) {
    const auto params = cfg.stp();
    const auto s = shape_corpus(c, params, padding, cfg.seed);
    DominantResult r = run_dominant(s);
    if (feature_comparison) {
        std::vector<Trace> learn;
        for (std::size_t i = 0; i < c.size(); ++i) {
            Rng a = make_rng(cfg.seed, {kShapeLearn, i});
            learn.push_back(stp_shape(c.learn[i], params, padding, a));
        }
        r.interarrival = confusion_matrix(s.ids, learn, s.tests, Feature::InterArrival);
        r.interarrival_rate = diagonal_rate(r.interarrival);
        r.joint = confusion_matrix(s.ids, learn, s.tests, Feature::Joint);
        r.joint_rate = diagonal_rate(r.joint);
    }
    return r;
}

// The local adversary sees every device's traffic at once but separates it by
// link-layer address before classifying.
inline DominantResult run_local(const Corpus& c, const ExperimentConfig& cfg) {
    const auto s = shape_corpus(c, cfg.stp(), PaddingScheme::random(cfg.W), cfg.seed);
    Trace air;
    for (const auto& t : s.tests) {
        air.packets.insert(air.packets.end(), t.packets.begin(), t.packets.end());
        air.duration = std::max(air.duration, t.duration);
    }
    std::stable_sort(air.packets.begin(), air.packets.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    std::vector<Trace> per_device;
    for (const auto& id : s.ids) per_device.push_back(air.filter_device(id));
    DominantResult r;
    r.sizes = confusion_matrix(s.profiles, per_device, s.ids);
    r.diagonal_rate = diagonal_rate(r.sizes);
    return r;
}

// ---------------------------------------------------------------------------
// Aggregated traffic: counting and subset detection

// Subset sizes uniform on [1, n], then a uniform subset of that size.
inline std::vector<std::vector<std::size_t>> sample_subsets(std::size_t n, std::size_t count, Rng& rng) {
    std::vector<std::vector<std::size_t>> out;
    std::uniform_int_distribution<std::size_t> size(1, n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        const auto k = size(rng);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<std::size_t> s(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(s.begin(), s.end());
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> all_subsets(std::size_t n) {
    require(n <= kMaxFullComparisonDevices, ErrorCode::CombinatorialGuard, "too many devices to enumerate");
    std::vector<std::vector<std::size_t>> out;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) s.push_back(i);
        out.push_back(std::move(s));
    }
    return out;
}

// What the external observer collects for a set of simultaneously active
// devices. The histogram of an aggregate is the sum of member histograms, so the
// merged packet stream itself is not materialised.
inline Observation observe_subset(const ShapedCorpus& s, const std::vector<std::size_t>& members) {
    Observation o;
    for (auto i : members) {
        o.histogram.merge(size_histogram(s.tests[i]));
        o.duration = std::max(o.duration, s.tests[i].duration);
    }
    return o;
}

struct CountRow {
    std::size_t truth = 0;
    std::size_t estimate = 0;
    double rate = 0.0;
};

struct CountResult {
    CountThresholds thresholds;
    std::vector<CountRow> rows;
    double exact = 0.0;
    double within_one = 0.0;
};

inline CountResult run_count(const ShapedCorpus& s, const std::vector<std::vector<std::size_t>>& subsets) {
    CountResult r;
    r.thresholds = learn_count_thresholds(s.profiles);
    std::size_t exact = 0, near = 0;
    for (const auto& sub : subsets) {
        const auto o = observe_subset(s, sub);
        CountRow row{sub.size(), estimate_count(o.rate(), r.thresholds), o.rate()};
        exact += row.estimate == row.truth;
        near += (row.estimate + 1 >= row.truth && row.estimate <= row.truth + 1);
        r.rows.push_back(row);
    }
    r.exact = static_cast<double>(exact) / static_cast<double>(subsets.size());
    r.within_one = static_cast<double>(near) / static_cast<double>(subsets.size());
    return r;
}

struct SubsetRow {
    std::vector<std::size_t> truth;
    SubsetEstimate full;
    SubsetEstimate fsbc;
    SubsetMetrics full_metrics;
    SubsetMetrics fsbc_metrics;
};

struct MetricTotals {
    double recall = 0.0, precision = 0.0, exact = 0.0;
    std::size_t n = 0;

    void add(const SubsetMetrics& m) {
        recall += m.recall;
        precision += m.precision;
        exact += m.exact;
        ++n;
    }
    MetricTotals mean() const {
        if (n == 0) return *this;
        const double d = static_cast<double>(n);
        return {recall / d, precision / d, exact / d, n};
    }
};

struct SubsetResult {
    std::vector<SubsetRow> rows;
    MetricTotals full, fsbc;                 // means over all rows
    std::map<std::size_t, MetricTotals> full_by_size, fsbc_by_size;
    std::uint64_t full_operations = 0, fsbc_operations = 0;
};

inline std::vector<std::string> ids_of(const ShapedCorpus& s, const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(s.ids[i]);
    return out;
}

inline SubsetResult run_subsets(const ShapedCorpus& s, const std::vector<std::vector<std::size_t>>& subsets,
                                bool with_full, bool with_fsbc, double f1, double f2) {
    SubsetResult r;
    const auto thresholds = learn_count_thresholds(s.profiles);
    std::optional<FullComparison> full;
    if (with_full) full.emplace(s.profiles);
    std::optional<Fsbc> fast;
    if (with_fsbc) fast.emplace(s.profiles, f1);
    for (const auto& sub : subsets) {
        SubsetRow row;
        row.truth = sub;
        const auto o = observe_subset(s, sub);
        const auto truth = ids_of(s, sub);
        if (full) {
            row.full = full->check(o, thresholds);
            row.full_metrics = subset_metrics(truth, row.full.devices);
            r.full.add(row.full_metrics);
            r.full_by_size[sub.size()].add(row.full_metrics);
            r.full_operations += row.full.operations;
        }
        if (fast) {
            row.fsbc = fast->check(o, f2, thresholds);
            row.fsbc_metrics = subset_metrics(truth, row.fsbc.devices);
            r.fsbc.add(row.fsbc_metrics);
            r.fsbc_by_size[sub.size()].add(row.fsbc_metrics);
            r.fsbc_operations += row.fsbc.operations;
        }
        r.rows.push_back(std::move(row));
    }
    r.full = r.full.mean();
    r.fsbc = r.fsbc.mean();
    for (auto& [_, m] : r.full_by_size) m = m.mean();
    for (auto& [_, m] : r.fsbc_by_size) m = m.mean();
    return r;
}

// ---------------------------------------------------------------------------
// Parameter estimation

struct WTrial {
    std::size_t device = 0;
    std::uint32_t true_w = 0;
    WEstimate estimate;
    bool within_tolerance = false;
};

struct WResult {
    std::vector<WTrial> trials;
    double within_rate = 0.0;
    std::vector<WTrial> grid_trials; // test generated exactly at a grid W
    double grid_exact_rate = 0.0;
    double grid_max_distance = 0.0;
};

// True W sweeps 40, 50, ..., 160 while the device cycles through the corpus.
inline WResult run_estimate_w(const Corpus& c, const ExperimentConfig& cfg) {
    const auto base = cfg.stp();
    const auto models = build_w_grid(c.learn, c.ids, default_w_grid(), base, derive_seed(cfg.seed, {kWGrid}));
    WResult r;
    std::size_t ok = 0;
    for (std::size_t t = 0; t < cfg.w_trials; ++t) {
        WTrial tr;
        tr.device = t % c.size();
        tr.true_w = 40 + static_cast<std::uint32_t>((t / c.size() + t) % 13) * 10;
        StpParams p = base;
        p.W = tr.true_w;
        Rng rng = make_rng(cfg.seed, {kWTrial, t});
        tr.estimate = estimate_w(models, size_histogram(stp_shape(c.test[tr.device], p, rng)));
        tr.within_tolerance = std::abs(static_cast<double>(tr.estimate.W) - tr.true_w) <= 20.0;
        ok += tr.within_tolerance;
        r.trials.push_back(tr);
    }
    r.within_rate = cfg.w_trials ? static_cast<double>(ok) / static_cast<double>(cfg.w_trials) : 0.0;

    std::size_t exact = 0;
    for (std::size_t d = 0; d < c.size(); ++d) {
        WTrial tr;
        tr.device = d;
        tr.true_w = default_w_grid()[2 + d % 3]; // 90, 130, 170
        StpParams p = base;
        p.W = tr.true_w;
        Rng rng = make_rng(cfg.seed, {kWTrial, 1000 + d});
        tr.estimate = estimate_w(models, size_histogram(stp_shape(c.test[d], p, rng)));
        tr.within_tolerance = tr.estimate.W == tr.true_w;
        exact += tr.within_tolerance;
        r.grid_max_distance = std::max(r.grid_max_distance, tr.estimate.distance);
        r.grid_trials.push_back(tr);
    }
    r.grid_exact_rate = static_cast<double>(exact) / static_cast<double>(c.size());
    return r;
}

struct QTrial {
    std::size_t device = 0;
    double true_q = 0.0;
    double estimate = 0.0;
    double rate = 0.0;
};

struct QResult {
    std::vector<QTrial> trials;
    double exact_rate = 0.0;
    double max_error = 0.0;
    std::vector<double> mean_estimate; // per grid q, averaged over devices
    double misestimated_diagonal_rate = 0.0; // learn at q=0.5, test at the configured q
};

inline QResult run_estimate_q(const Corpus& c, const ExperimentConfig& cfg) {
    const auto grid = default_q_grid();
    const auto base = cfg.stp();
    QResult r;
    r.mean_estimate.assign(grid.size(), 0.0);
    std::size_t exact = 0;
    for (std::size_t d = 0; d < c.size(); ++d) {
        const auto th = build_q_thresholds(c.learn[d], grid, base, derive_seed(cfg.seed, {kQThreshold, d}));
        for (std::size_t i = 0; i < grid.size(); ++i) {
            StpParams p = base;
            p.q = grid[i];
            Rng rng = make_rng(cfg.seed, {kQTest, d, i});
            const auto sch = stp_schedule(c.test[d], p, rng);
            QTrial t{d, grid[i], 0.0, static_cast<double>(sch.emitted()) / c.test[d].duration};
            t.estimate = estimate_q(th, t.rate);
            const double err = std::abs(t.estimate - t.true_q);
            exact += err < 1e-9;
            r.max_error = std::max(r.max_error, err);
            r.mean_estimate[i] += t.estimate / static_cast<double>(c.size());
            r.trials.push_back(t);
        }
    }
    r.exact_rate = static_cast<double>(exact) / static_cast<double>(r.trials.size());

    // Classification with a badly estimated q: profiles learnt at q = 0.5.
    StpParams learn = base;
    learn.q = 0.5;
    ShapedCorpus s;
    s.ids = c.ids;
    for (std::size_t i = 0; i < c.size(); ++i) {
        Rng a = make_rng(cfg.seed, {kShapeLearn, i});
        s.profiles.push_back(learn_profile(stp_shape(c.learn[i], learn, a), c.ids[i]));
        Rng b = make_rng(cfg.seed, {kShapeTest, i});
        s.tests.push_back(stp_shape(c.test[i], base, b));
    }
    r.misestimated_diagonal_rate = run_dominant(s).diagonal_rate;
    return r;
}

// ---------------------------------------------------------------------------
// Cover-only windows

struct WindowResult {
    std::size_t windows = 0, periods = 0; // over all shaped learning traces
    double real_fraction = 0.0;           // among labelled training windows
    KnnModel model;
    BinaryMetrics test;
    double permuted_cv_accuracy = 0.0;
    double permuted_test_accuracy = 0.0;
    bool bounds_hold = true;              // periods <= windows <= 2 * periods for every device
};

inline WindowResult run_windows(const Corpus& c, const ExperimentConfig& cfg) {
    const auto p = cfg.stp();
    const double offset = cfg.window_offset * p.T;
    WindowResult r;
    std::vector<LabeledWindow> train, test;
    std::size_t real = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        Rng a = make_rng(cfg.seed, {kShapeLearn, i});
        WindowCounts wc;
        auto lw = label_training_windows(stp_shape(c.learn[i], p, a), p, offset, &wc);
        r.windows += wc.windows;
        r.periods += wc.periods;
        real += wc.real_windows;
        r.bounds_hold = r.bounds_hold && wc.windows >= wc.periods && wc.windows <= 2 * wc.periods;
        train.insert(train.end(), std::make_move_iterator(lw.begin()), std::make_move_iterator(lw.end()));
        Rng b = make_rng(cfg.seed, {kShapeTest, i});
        auto tw = label_training_windows(stp_shape(c.test[i], p, b), p, offset);
        test.insert(test.end(), std::make_move_iterator(tw.begin()), std::make_move_iterator(tw.end()));
    }
    r.real_fraction = train.empty() ? 0.0 : static_cast<double>(real) / static_cast<double>(train.size());

    Rng rng = make_rng(cfg.seed, {kWindowSample});
    std::shuffle(train.begin(), train.end(), rng);
    if (cfg.knn_train_windows > 0 && train.size() > cfg.knn_train_windows) train.resize(cfg.knn_train_windows);
    const auto fold_seed = derive_seed(cfg.seed, {kKnnFolds});
    r.model = train_knn(train, 1, cfg.k_max, cfg.folds, fold_seed);
    r.test = classify_windows(r.model, test).metrics;

    // Control: the same windows with shuffled labels should carry no signal.
    std::vector<bool> labels;
    for (const auto& w : train) labels.push_back(w.real);
    Rng perm = make_rng(cfg.seed, {kPermutation});
    std::shuffle(labels.begin(), labels.end(), perm);
    for (std::size_t i = 0; i < train.size(); ++i) train[i].real = labels[i];
    const auto pm = train_knn(train, 1, cfg.k_max, cfg.folds, fold_seed);
    r.permuted_cv_accuracy = pm.cv_accuracy;
    r.permuted_test_accuracy = classify_windows(pm, test).metrics.accuracy;
    return r;
}

// ---------------------------------------------------------------------------
// Anomaly detection on raw traffic

struct AnomalyRow {
    std::string device;
    std::string attack;
    AnomalyMethod method = AnomalyMethod::Js;
    double threshold = 0.0;
    double validation_auc = 0.0;
    double validation_eer = 0.0;
    BinaryMetrics test;        // 50% injected test trace
    std::size_t clean_false_alarms = 0;
    std::size_t clean_windows = 0;
};

struct AnomalyResult {
    std::vector<AnomalyRow> rows;
    double js_recall = 0.0, lof_recall = 0.0;
    double js_precision = 0.0, lof_precision = 0.0;
    std::size_t false_alarms_clean = 0;
    double min_auc = 1.0;
};

inline AnomalyResult run_anomaly(const std::vector<DeviceSpec>& specs, const ExperimentConfig& cfg,
                                 const std::vector<AttackProfile>& attacks,
                                 const std::vector<AnomalyMethod>& methods = {AnomalyMethod::Lof, AnomalyMethod::Js}) {
    AnomalyResult r;
    std::size_t js_n = 0, lof_n = 0;
    const double L = cfg.anomaly_window, D = cfg.anomaly_duration;
    for (std::size_t d = 0; d < specs.size(); ++d) {
        Rng g0 = make_rng(cfg.seed, {kAnomalyTrace, d, 0});
        Rng g1 = make_rng(cfg.seed, {kAnomalyTrace, d, 1});
        Rng g2 = make_rng(cfg.seed, {kAnomalyTrace, d, 2});
        Rng g3 = make_rng(cfg.seed, {kAnomalyTrace, d, 3});
        const Trace normal = synth_device(specs[d], D, g0);
        const Trace validation_raw = synth_device(specs[d], D, g1);
        const Trace test_raw = synth_device(specs[d], D, g2);
        const Trace clean = synth_device(specs[d], D, g3);
        const auto clean_windows = window_histograms(clean, L);
        for (std::size_t a = 0; a < attacks.size(); ++a) {
            Rng i1 = make_rng(cfg.seed, {kAnomalyInject, d, a, 1});
            Rng i2 = make_rng(cfg.seed, {kAnomalyInject, d, a, 2});
            const auto validation = inject_attack(validation_raw, attacks[a], L, cfg.anomaly_fraction, i1).trace;
            const auto test = inject_attack(test_raw, attacks[a], L, cfg.anomaly_fraction, i2).trace;
            for (auto method : methods) {
                const auto model = train_anomaly_model(method, normal, validation, L, cfg.lof_neighborhood);
                AnomalyRow row;
                row.device = specs[d].device_id;
                row.attack = attacks[a].name;
                row.method = method;
                row.threshold = model.threshold;
                row.validation_auc = model.validation.auc;
                row.validation_eer = model.validation.eer;
                row.test = detect(model, test).metrics;
                const auto cd = detect(model, clean_windows);
                row.clean_windows = cd.abnormal.size();
                row.clean_false_alarms = static_cast<std::size_t>(std::count(cd.abnormal.begin(), cd.abnormal.end(), true));
                r.false_alarms_clean += row.clean_false_alarms;
                r.min_auc = std::min(r.min_auc, row.validation_auc);
                if (method == AnomalyMethod::Js) {
                    r.js_recall += row.test.recall;
                    r.js_precision += row.test.precision;
                    ++js_n;
                } else {
                    r.lof_recall += row.test.recall;
                    r.lof_precision += row.test.precision;
                    ++lof_n;
                }
                r.rows.push_back(std::move(row));
            }
        }
    }
    if (js_n) {
        r.js_recall /= static_cast<double>(js_n);
        r.js_precision /= static_cast<double>(js_n);
    }
    if (lof_n) {
        r.lof_recall /= static_cast<double>(lof_n);
        r.lof_precision /= static_cast<double>(lof_n);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Independence of timing and size

struct Chi2Row {
    std::string device;
    std::size_t packets = 0;
    bool testable = true;
    ChiSquaredResult result;
};

inline std::vector<Chi2Row> run_chi2(const Corpus& c) {
    std::vector<Chi2Row> rows;
    for (std::size_t i = 0; i < c.size(); ++i) {
        Chi2Row row;
        row.device = c.ids[i];
        row.packets = c.learn[i].size();
        try {
            row.result = chi_squared_independence(c.learn[i]);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::IndependenceUntestable && e.code() != ErrorCode::EmptyFeature) throw;
            row.testable = false;
        }
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Reports

struct Report {
    std::string name;
    nlohmann::json summary;
    std::vector<std::pair<std::string, std::string>> files; // relative name, content
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"dominant",    "local",      "count",      "subset-full",
                                                   "subset-fsbc", "level100",   "estimate-w", "estimate-q",
                                                   "windows",     "anomaly",    "chi2"};
    return names;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline void add_matrix(Report& rep, const std::string& stem, const ConfusionMatrix& m) {
    rep.files.emplace_back(stem + ".csv", to_csv(m));
    rep.files.emplace_back(stem + ".txt", ascii_heatmap(m));
    rep.files.emplace_back(stem + ".pgm", pgm_heatmap(m));
}

inline nlohmann::json totals_json(const MetricTotals& t) {
    return {{"recall", t.recall}, {"precision", t.precision}, {"exact", t.exact}, {"n", t.n}};
}

inline std::string subset_table(const SubsetResult& r, bool full, bool fast) {
    std::string s = "size,subsets";
    if (full) s += ",full_recall,full_precision,full_exact";
    if (fast) s += ",fsbc_recall,fsbc_precision,fsbc_exact";
    s += '\n';
    const auto& by = full ? r.full_by_size : r.fsbc_by_size;
    for (const auto& [k, m] : by) {
        s += std::to_string(k) + ',' + std::to_string(m.n);
        if (full) {
            const auto& f = r.full_by_size.at(k);
            s += ',' + fmt(f.recall) + ',' + fmt(f.precision) + ',' + fmt(f.exact);
        }
        if (fast) {
            const auto& f = r.fsbc_by_size.at(k);
            s += ',' + fmt(f.recall) + ',' + fmt(f.precision) + ',' + fmt(f.exact);
        }
        s += '\n';
    }
    return s;
}

} // namespace detail

inline Report run_experiment(const std::string& name, const ExperimentConfig& cfg) {
    if (std::find(experiment_names().begin(), experiment_names().end(), name) == experiment_names().end())
        fail(ErrorCode::UnknownExperiment, "unknown experiment '" + name + "'");
    Report rep;
    rep.name = name;
    rep.summary["experiment"] = name;
    rep.summary["config"] = config_to_json(cfg);
    auto& res = rep.summary["results"];

    if (name == "anomaly") {
        const auto r = run_anomaly(default_corpus(), cfg, builtin_attacks());
        std::string csv = "device,attack,method,threshold,validation_auc,validation_eer,recall,precision,"
                          "clean_false_alarms,clean_windows\n";
        for (const auto& row : r.rows)
            csv += row.device + ',' + row.attack + ',' + to_string(row.method) + ',' + detail::fmt(row.threshold) +
                   ',' + detail::fmt(row.validation_auc) + ',' + detail::fmt(row.validation_eer) + ',' +
                   detail::fmt(row.test.recall) + ',' + detail::fmt(row.test.precision) + ',' +
                   std::to_string(row.clean_false_alarms) + ',' + std::to_string(row.clean_windows) + '\n';
        rep.files.emplace_back("anomaly.csv", csv);
        res = {{"js_recall", r.js_recall},       {"lof_recall", r.lof_recall},
               {"js_precision", r.js_precision}, {"lof_precision", r.lof_precision},
               {"clean_false_alarms", r.false_alarms_clean}, {"min_validation_auc", r.min_auc}};
        return rep;
    }

    const Corpus c = corpus_for(cfg);
    rep.summary["devices"] = c.ids;

    if (name == "dominant" || name == "level100") {
        const bool l100 = name == "level100";
        const auto padding = l100 ? PaddingScheme::level100() : PaddingScheme::random(cfg.W);
        const auto r = run_dominant(c, cfg, padding, !l100);
        detail::add_matrix(rep, "sizes", r.sizes);
        res["diagonal_rate"] = r.diagonal_rate;
        if (!l100) {
            detail::add_matrix(rep, "interarrival", r.interarrival);
            detail::add_matrix(rep, "joint", r.joint);
            res["interarrival_diagonal_rate"] = r.interarrival_rate;
            res["joint_diagonal_rate"] = r.joint_rate;
        } else {
            Rng rng = make_rng(cfg.seed, {kSubsetSampling});
            const auto subsets = sample_subsets(c.size(), cfg.subsets, rng);
            const auto random = run_subsets(shape_corpus(c, cfg.stp(), PaddingScheme::random(cfg.W), cfg.seed),
                                            subsets, true, false, cfg.f1, cfg.f2);
            const auto level = run_subsets(shape_corpus(c, cfg.stp(), padding, cfg.seed), subsets, true, false,
                                           cfg.f1, cfg.f2);
            res["subset_random_padding"] = detail::totals_json(random.full);
            res["subset_level100"] = detail::totals_json(level.full);
            rep.files.emplace_back("subset_random.csv", detail::subset_table(random, true, false));
            rep.files.emplace_back("subset_level100.csv", detail::subset_table(level, true, false));
        }
    } else if (name == "local") {
        const auto r = run_local(c, cfg);
        detail::add_matrix(rep, "sizes", r.sizes);
        res["diagonal_rate"] = r.diagonal_rate;
    } else if (name == "count" || name == "subset-full" || name == "subset-fsbc") {
        const auto s = shape_corpus(c, cfg.stp(), PaddingScheme::random(cfg.W), cfg.seed);
        Rng rng = make_rng(cfg.seed, {kSubsetSampling});
        const auto subsets = sample_subsets(c.size(), cfg.subsets, rng);
        if (name == "count") {
            const auto r = run_count(s, subsets);
            std::string csv = "truth,estimate,rate\n";
            for (const auto& row : r.rows)
                csv += std::to_string(row.truth) + ',' + std::to_string(row.estimate) + ',' + detail::fmt(row.rate) + '\n';
            std::string th = "k,avg_rate,threshold\n";
            for (std::size_t k = 0; k < r.thresholds.avg_rate.size(); ++k)
                th += std::to_string(k + 1) + ',' + detail::fmt(r.thresholds.avg_rate[k]) + ',' +
                      (k < r.thresholds.thresholds.size() ? detail::fmt(r.thresholds.thresholds[k]) : "") + '\n';
            rep.files.emplace_back("count.csv", csv);
            rep.files.emplace_back("thresholds.csv", th);
            res = {{"exact", r.exact}, {"within_one", r.within_one}};
        } else {
            const bool fast = name == "subset-fsbc";
            const auto r = run_subsets(s, subsets, true, fast, cfg.f1, cfg.f2);
            rep.files.emplace_back("subsets.csv", detail::subset_table(r, true, fast));
            res["full"] = detail::totals_json(r.full);
            res["full_operations"] = r.full_operations;
            if (fast) {
                res["fsbc"] = detail::totals_json(r.fsbc);
                res["fsbc_operations"] = r.fsbc_operations;
            }
        }
    } else if (name == "estimate-w") {
        const auto r = run_estimate_w(c, cfg);
        std::string csv = "device,true_w,estimate_w,tolerance,best_device,distance\n";
        for (const auto* set : {&r.trials, &r.grid_trials})
            for (const auto& t : *set)
                csv += c.ids[t.device] + ',' + std::to_string(t.true_w) + ',' + std::to_string(t.estimate.W) + ',' +
                       std::to_string(t.estimate.tolerance) + ',' + t.estimate.device_id + ',' +
                       detail::fmt(t.estimate.distance) + '\n';
        rep.files.emplace_back("estimate_w.csv", csv);
        res = {{"within_20", r.within_rate}, {"grid_exact", r.grid_exact_rate}, {"grid_max_distance", r.grid_max_distance}};
    } else if (name == "estimate-q") {
        const auto r = run_estimate_q(c, cfg);
        std::string csv = "device,true_q,estimate_q,rate\n";
        for (const auto& t : r.trials)
            csv += c.ids[t.device] + ',' + detail::fmt(t.true_q) + ',' + detail::fmt(t.estimate) + ',' +
                   detail::fmt(t.rate) + '\n';
        std::string mean = "true_q,mean_estimate\n";
        const auto grid = default_q_grid();
        for (std::size_t i = 0; i < grid.size(); ++i) mean += detail::fmt(grid[i]) + ',' + detail::fmt(r.mean_estimate[i]) + '\n';
        rep.files.emplace_back("estimate_q.csv", csv);
        rep.files.emplace_back("mean_estimate.csv", mean);
        res = {{"exact", r.exact_rate}, {"max_error", r.max_error},
               {"diagonal_rate_learn_q05", r.misestimated_diagonal_rate}};
    } else if (name == "windows") {
        const auto r = run_windows(c, cfg);
        std::string cv = "k,cv_accuracy\n";
        for (std::size_t k = 0; k < r.model.cv_curve.size(); ++k)
            cv += std::to_string(k + 1) + ',' + detail::fmt(r.model.cv_curve[k]) + '\n';
        rep.files.emplace_back("cv.csv", cv);
        res = {{"non_empty_windows", r.windows},
               {"non_empty_periods", r.periods},
               {"real_fraction", r.real_fraction},
               {"k", r.model.k},
               {"cv_accuracy", r.model.cv_accuracy},
               {"test_accuracy", r.test.accuracy},
               {"test_recall", r.test.recall},
               {"test_precision", r.test.precision},
               {"permuted_test_accuracy", r.permuted_test_accuracy}};
    } else if (name == "chi2") {
        std::string csv = "device,packets,testable,df,critical_95,statistic,reject,time_bin_s,size_bin_b,pct_expected_ge_5\n";
        std::size_t rejected = 0;
        for (const auto& row : run_chi2(c)) {
            const auto& x = row.result;
            csv += row.device + ',' + std::to_string(row.packets) + ',' + (row.testable ? "1" : "0") + ',' +
                   std::to_string(x.degrees_of_freedom) + ',' + detail::fmt(x.critical_value_95) + ',' +
                   detail::fmt(x.statistic) + ',' + (x.reject_independence ? "1" : "0") + ',' +
                   detail::fmt(x.final_time_bin_width) + ',' + std::to_string(x.final_size_bin_width) + ',' +
                   detail::fmt(x.pct_expected_ge_5) + '\n';
            rejected += row.testable && x.reject_independence;
        }
        rep.files.emplace_back("chi2.csv", csv);
        res = {{"rejected", rejected}, {"devices", c.size()}};
    }
    return rep;
}

inline void write_report(const Report& rep, const std::filesystem::path& dir) {
    for (const auto& [file, content] : rep.files) detail::write_file(dir / file, content);
    detail::write_file(dir / "summary.json", rep.summary.dump(2) + "\n");
}

} // namespace iotfp
