#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "iotfp/anomaly.hpp"
#include "iotfp/synth.hpp"
#include "test_util.hpp"

using namespace iotfp;
using iotfp::testing::code_of;

namespace {

SizeHistogram hist(const std::vector<std::uint64_t>& counts) {
    static const std::uint32_t sizes[] = {60, 70, 80, 90, 100, 110};
    SizeHistogram h;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i]) h.add(sizes[i], counts[i]);
    return h;
}

// Fixture shared with the reference values below.
std::vector<SizeHistogram> normal_fixture() {
    return {hist({34, 13, 1, 4, 6, 6}),   hist({48, 15, 18, 19, 1, 2}), hist({47, 1, 3, 3, 18, 7}),
            hist({35, 3, 9, 11, 16, 12}), hist({49, 2, 9, 11, 13, 0}),  hist({34, 9, 1, 19, 12, 15}),
            hist({40, 11, 6, 6, 2, 4}),   hist({45, 8, 16, 5, 14, 17}), hist({46, 4, 7, 5, 15, 16}),
            hist({38, 5, 1, 5, 3, 1})};
}

std::vector<SizeHistogram> query_fixture() {
    return {hist({36, 14, 3, 4, 7, 8}), hist({0, 0, 0, 0, 40, 40}), hist({5, 20, 0, 0, 0, 7})};
}

Trace device_trace(std::size_t d, double duration, std::uint64_t seed) {
    Rng rng = make_rng(seed, {d});
    return synth_device(default_corpus()[d], duration, rng);
}

} // namespace

// Reference values from scikit-learn's LocalOutlierFactor (n_neighbors=3,
// novelty=True, brute force) with scipy's base-2 Jensen-Shannon distance,
// reported as -score_samples.
TEST(Lof, MatchesReferenceImplementation) {
    const auto s = lof_scores(normal_fixture(), query_fixture(), 3);
    ASSERT_EQ(s.scores.size(), 3u);
    EXPECT_NEAR(s.scores[0], 0.9617352805959166, 1e-9);
    EXPECT_NEAR(s.scores[1], 2.9044952151188332, 1e-9);
    EXPECT_NEAR(s.scores[2], 2.1789253713169874, 1e-9);
}

TEST(Lof, InlierOfDenseClusterScoresAboutOne) {
    std::vector<SizeHistogram> normal;
    for (int i = 0; i < 30; ++i) normal.push_back(hist({100 + static_cast<std::uint64_t>(i % 5), 50, 20, 0, 0, 0}));
    const auto s = lof_scores(normal, {hist({102, 50, 20, 0, 0, 0})}, 5);
    EXPECT_NEAR(s.scores[0], 1.0, 0.1);
}

TEST(Lof, DisjointWindowIsFarOutside) {
    std::vector<SizeHistogram> normal;
    for (int i = 0; i < 30; ++i) normal.push_back(hist({100 + static_cast<std::uint64_t>(i), 50, 20, 0, 0, 0}));
    const auto s = lof_scores(normal, {hist({0, 0, 0, 0, 10, 10})}, 5);
    EXPECT_GT(s.scores[0], 10.0);
}

TEST(Lof, InvariantToReferenceOrder) {
    auto normal = normal_fixture();
    const auto a = lof_scores(normal, query_fixture(), 3);
    std::reverse(normal.begin(), normal.end());
    const auto b = lof_scores(normal, query_fixture(), 3);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.scores[i], b.scores[i], 1e-12);
}

TEST(Lof, IdenticalReferencesStayFinite) {
    std::vector<SizeHistogram> normal(10, hist({5, 5, 0, 0, 0, 0}));
    const auto s = lof_scores(normal, {hist({5, 5, 0, 0, 0, 0}), hist({0, 0, 0, 0, 0, 3})}, 3);
    EXPECT_TRUE(std::isfinite(s.scores[0]));
    EXPECT_NEAR(s.scores[0], 1.0, 1e-9);
    EXPECT_GT(s.scores[1], 1e6);
}

TEST(Lof, EmptyWindowsAreFlagged) {
    const auto s = lof_scores(normal_fixture(), {SizeHistogram{}}, 3);
    EXPECT_TRUE(s.empty[0]);
    EXPECT_EQ(s.scores[0], 0.0);
}

TEST(Lof, NeedsEnoughReferences) {
    EXPECT_EQ(code_of([] { lof_scores(normal_fixture(), query_fixture(), 10); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------

TEST(Js, MatchesReferenceImplementation) {
    SizeHistogram all;
    for (const auto& h : normal_fixture()) all.merge(h);
    const auto s = js_scores(all, query_fixture());
    EXPECT_NEAR(s.scores[0], 0.16847418082111937, 1e-12);
    EXPECT_NEAR(s.scores[1], 0.7668724716565468, 1e-12);
    EXPECT_NEAR(s.scores[2], 0.6403080307272471, 1e-12);
}

TEST(Js, NormalWindowNearZeroAndDisjointWindowOne) {
    const Trace t = device_trace(4, 7200.0, 1);
    const auto normal = size_histogram(t);
    const auto s = js_scores(normal, {size_histogram(t.slice(0.0, 3600.0)), hist({0, 0, 0, 0, 0, 9})});
    EXPECT_LT(s.scores[0], 0.05);
    EXPECT_DOUBLE_EQ(s.scores[1], 1.0);
}

TEST(Js, MoreDisjointAttackNeverLowersTheScore) {
    const auto normal = size_histogram(device_trace(0, 3600.0, 2));
    const auto base = size_histogram(device_trace(0, 120.0, 3));
    double prev = -1.0;
    for (std::uint64_t extra = 0; extra <= 200; extra += 10) {
        SizeHistogram w = base;
        if (extra) w.add(54, extra);
        const double s = js_scores(normal, {w}).scores[0];
        EXPECT_GE(s, prev - 1e-12);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        prev = s;
    }
}

// ---------------------------------------------------------------------------

TEST(Injection, ZeroFractionLeavesTraceUnchanged) {
    const Trace t = device_trace(1, 3600.0, 4);
    Rng rng = make_rng(5);
    const auto inj = inject_attack(t, syn_flood(), 120.0, 0.0, rng);
    EXPECT_EQ(inj.trace, t);
    EXPECT_EQ(inj.injected, 0u);
}

TEST(Injection, HalfOfThirtyWindows) {
    const Trace t = device_trace(1, 3600.0, 6);
    for (const auto& attack : builtin_attacks()) {
        Rng rng = make_rng(7);
        const auto inj = inject_attack(t, attack, 120.0, 0.5, rng);
        const auto labels = attack_window_labels(inj.trace, 120.0);
        ASSERT_EQ(labels.size(), 30u);
        EXPECT_EQ(std::count(labels.begin(), labels.end(), true), 15) << attack.name;
        EXPECT_EQ(inj.windows.size(), 15u);
        std::size_t attack_packets = 0;
        for (const auto& p : inj.trace.packets) attack_packets += p.is_attack;
        EXPECT_EQ(attack_packets, inj.injected);
        EXPECT_EQ(inj.trace.size(), t.size() + inj.injected);
        EXPECT_NO_THROW(inj.trace.validate());
    }
}

TEST(Injection, AttackSizesAvoidTheCorpus) {
    std::set<std::uint32_t> used;
    for (const auto& d : default_corpus()) {
        for (const auto& w : d.sizes) used.insert(w.size);
        for (const auto& w : d.wake_sizes) used.insert(w.size);
    }
    for (const auto& a : builtin_attacks())
        for (const auto& w : a.sizes) EXPECT_FALSE(used.count(w.size)) << a.name << " " << w.size;
}

TEST(Injection, UnknownProfileName) {
    EXPECT_EQ(attack_by_name("dns_attack").name, "dns_attack");
    EXPECT_EQ(code_of([] { attack_by_name("worm"); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------

TEST(Threshold, PerfectSeparation) {
    const auto sel = select_threshold({0.1, 0.2, 0.3, 0.8, 0.9}, {false, false, false, true, true});
    EXPECT_DOUBLE_EQ(sel.auc, 1.0);
    EXPECT_DOUBLE_EQ(sel.eer, 0.0);
    EXPECT_DOUBLE_EQ(sel.accuracy, 1.0);
    EXPECT_GT(sel.threshold, 0.3);
    EXPECT_LT(sel.threshold, 0.8);
}

TEST(Threshold, IdenticalScoresGiveMajorityRate) {
    const auto sel = select_threshold({0.5, 0.5, 0.5, 0.5}, {true, false, false, false});
    EXPECT_DOUBLE_EQ(sel.accuracy, 0.75);
    EXPECT_DOUBLE_EQ(sel.auc, 0.5);
}

TEST(Threshold, InvertedLabelsMirrorAuc) {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8, 0.2, 0.6, 0.6};
    const std::vector<bool> y{false, true, false, true, false, false, true};
    std::vector<bool> inv;
    for (bool b : y) inv.push_back(!b);
    EXPECT_NEAR(select_threshold(s, inv).auc, 1.0 - select_threshold(s, y).auc, 1e-12);
}

TEST(Threshold, TiesGoToTheLowerCut) {
    // Cuts at 0.15 and 0.25 both reach accuracy 0.75; the lower one wins.
    const auto sel = select_threshold({0.1, 0.2, 0.3, 0.4}, {false, true, false, true});
    EXPECT_DOUBLE_EQ(sel.accuracy, 0.75);
    EXPECT_DOUBLE_EQ(sel.threshold, 0.15);
}

TEST(Threshold, SingleClassRejected) {
    EXPECT_EQ(code_of([] { select_threshold({0.1, 0.2}, {true, true}); }), ErrorCode::SingleClass);
}

// ---------------------------------------------------------------------------

TEST(Detect, CleanTestRaisesNoAlarm) {
    const Trace normal = device_trace(3, 3600.0, 8);
    Rng rng = make_rng(9);
    const auto validation = inject_attack(device_trace(3, 3600.0, 10), syn_flood(), 120.0, 0.5, rng);
    for (auto method : {AnomalyMethod::Js, AnomalyMethod::Lof}) {
        const auto m = train_anomaly_model(method, normal, validation.trace);
        EXPECT_DOUBLE_EQ(m.validation.auc, 1.0);
        const auto d = detect(m, device_trace(3, 3600.0, 11));
        EXPECT_EQ(d.metrics.fp, 0u) << to_string(method);
        EXPECT_TRUE(d.metrics.precision_undefined);
    }
}

TEST(Detect, InjectedWindowsAreFound) {
    const Trace normal = device_trace(6, 3600.0, 12);
    Rng a = make_rng(13), b = make_rng(14);
    const auto validation = inject_attack(device_trace(6, 3600.0, 15), dns_attack(), 120.0, 0.5, a);
    const auto test = inject_attack(device_trace(6, 3600.0, 16), dns_attack(), 120.0, 0.5, b);
    const auto m = train_anomaly_model(AnomalyMethod::Js, normal, validation.trace);
    const auto d = detect(m, test.trace);
    EXPECT_GE(d.metrics.recall, 0.85);
    EXPECT_DOUBLE_EQ(d.metrics.precision, 1.0);
}

TEST(Detect, MethodNames) {
    EXPECT_EQ(anomaly_method("lof"), AnomalyMethod::Lof);
    EXPECT_EQ(to_string(AnomalyMethod::Js), "js");
    EXPECT_EQ(code_of([] { anomaly_method("svm"); }), ErrorCode::InvalidArgument);
}
