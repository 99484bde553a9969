#include <gtest/gtest.h>

#include <cmath>

#include "iotfp/experiments.hpp"
#include "iotfp/param_estimation.hpp"
#include "test_util.hpp"

using namespace iotfp;
using iotfp::testing::code_of;

namespace {

const Corpus& corpus() {
    static const Corpus c = synth_corpus(default_corpus(), 0, 3600.0, 1800.0);
    return c;
}

StpParams base_params() {
    StpParams p;
    p.q = 0.1;
    p.T = 1.0;
    p.R = 100.0;
    return p;
}

} // namespace

TEST(WGrid, DefaultGridIsAnchoredAtTenWithStepForty) {
    EXPECT_EQ(default_w_grid(), (std::vector<std::uint32_t>{10, 50, 90, 130, 170, 210, 250}));
}

TEST(WGrid, OneProfilePerDeviceAndW) {
    const auto m = build_w_grid(corpus().learn, corpus().ids, {10, 50, 90, 130}, base_params(), 1);
    EXPECT_EQ(m.size(), 56u);
    EXPECT_EQ(m.at("dev04", 90).tags.at("W"), 90.0);
}

TEST(WGrid, NeighbouringWDiffer) {
    const auto m = build_w_grid({corpus().learn[0]}, {corpus().ids[0]}, {50, 90}, base_params(), 2);
    EXPECT_GT(cosine_distance(m.at("dev01", 50).histogram, m.at("dev01", 90).histogram), 0.0);
}

TEST(WGrid, Deterministic) {
    const auto a = build_w_grid({corpus().learn[1]}, {corpus().ids[1]}, {50, 90}, base_params(), 3);
    const auto b = build_w_grid({corpus().learn[1]}, {corpus().ids[1]}, {50, 90}, base_params(), 3);
    EXPECT_EQ(a.models, b.models);
}

TEST(EstimateW, TrueEightyFallsInNinetyBand) {
    const auto m = build_w_grid(corpus().learn, corpus().ids, {50, 90, 130}, base_params(), 4);
    StpParams p = base_params();
    p.W = 80;
    Rng rng = make_rng(5);
    const auto e = estimate_w(m, size_histogram(stp_shape(corpus().test[2], p, rng)));
    EXPECT_EQ(e.W, 90u);
    EXPECT_EQ(e.tolerance, 20u);
    EXPECT_EQ(e.device_id, "dev03");
    EXPECT_GT(e.distance, 0.0);
    EXPECT_LT(e.distance, 0.1);
}

TEST(EstimateW, ModelsOwnHistogramIsExact) {
    const auto m = build_w_grid(corpus().learn, corpus().ids, default_w_grid(), base_params(), 6);
    for (const auto& [key, prof] : m.models) {
        const auto e = estimate_w(m, prof.histogram);
        EXPECT_EQ(e.W, key.second);
        EXPECT_EQ(e.device_id, key.first);
        EXPECT_NEAR(e.distance, 0.0, 1e-12);
    }
}

TEST(EstimateW, EmptyTestFails) {
    const auto m = build_w_grid({corpus().learn[0]}, {corpus().ids[0]}, {50}, base_params(), 7);
    EXPECT_EQ(code_of([&] { estimate_w(m, SizeHistogram{}); }), ErrorCode::EmptyFeature);
}

// ---------------------------------------------------------------------------

TEST(QGrid, TwentySteps) {
    const auto g = default_q_grid();
    ASSERT_EQ(g.size(), 20u);
    EXPECT_NEAR(g.front(), 0.05, 1e-12);
    EXPECT_NEAR(g.back(), 1.0, 1e-12);
}

TEST(EstimateQ, BelowFirstThresholdIsGridFloor) {
    const auto t = q_thresholds_from_rates({0.05, 0.1, 0.15}, {10.0, 20.0, 30.0});
    EXPECT_EQ(t.thresholds, (std::vector<double>{15.0, 25.0}));
    EXPECT_DOUBLE_EQ(estimate_q(t, 1.0), 0.05);
    EXPECT_DOUBLE_EQ(estimate_q(t, 20.0), 0.1);
    EXPECT_DOUBLE_EQ(estimate_q(t, 99.0), 0.15);
}

TEST(EstimateQ, RatesAreMadeMonotone) {
    const auto t = q_thresholds_from_rates({0.1, 0.2, 0.3}, {10.0, 9.0, 30.0});
    EXPECT_EQ(t.rates, (std::vector<double>{10.0, 10.0, 30.0}));
}

TEST(EstimateQ, CoverVolumeGrowsAffinelyInQ) {
    const auto& trace = corpus().learn[5];
    const auto t = build_q_thresholds(trace, default_q_grid(), base_params(), 8);
    // Least-squares slope of rate against q.
    const double n = static_cast<double>(t.grid.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
        sx += t.grid[i];
        sy += t.rates[i];
        sxx += t.grid[i] * t.grid[i];
        sxy += t.grid[i] * t.rates[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_GT(slope, 0.0);
    for (std::size_t i = 1; i < t.rates.size(); ++i) EXPECT_GE(t.rates[i], t.rates[i - 1]);
}

TEST(EstimateQ, RecoversConfiguredQForOneDevice) {
    const auto t = build_q_thresholds(corpus().learn[3], default_q_grid(), base_params(), 9);
    for (double q : {0.1, 0.5, 0.9}) {
        StpParams p = base_params();
        p.q = q;
        Rng rng = make_rng(10);
        const auto sch = stp_schedule(corpus().test[3], p, rng);
        const double est = estimate_q(t, static_cast<double>(sch.emitted()) / corpus().test[3].duration);
        EXPECT_LE(std::abs(est - q), 0.1 + 1e-9) << q;
    }
}

TEST(EstimateQ, InvalidInputs) {
    EXPECT_EQ(code_of([] { q_thresholds_from_rates({0.1}, {1.0}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { q_thresholds_from_rates({0.2, 0.1}, {1.0, 2.0}); }), ErrorCode::InvalidArgument);
    const auto t = q_thresholds_from_rates({0.1, 0.2}, {1.0, 2.0});
    EXPECT_EQ(code_of([&] { estimate_q(t, -1.0); }), ErrorCode::InvalidArgument);
}
