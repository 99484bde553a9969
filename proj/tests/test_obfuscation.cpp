#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <vector>

#include "iotfp/obfuscation.hpp"
#include "iotfp/synth.hpp"
#include "test_util.hpp"

using namespace iotfp;
using iotfp::testing::code_of;
using iotfp::testing::make_trace;

TEST(RandomPad, DegenerateBound) {
    Rng rng = make_rng(1);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(random_pad(100, 1, rng), 101u);
}

TEST(RandomPad, DefaultBoundRange) {
    Rng rng = make_rng(2);
    for (int i = 0; i < 10000; ++i) {
        const auto v = random_pad(100, 80, rng);
        EXPECT_GE(v, 101u);
        EXPECT_LE(v, 180u);
    }
}

TEST(RandomPad, UniformGoodnessOfFit) {
    Rng rng = make_rng(3);
    constexpr int draws = 100000, W = 80;
    std::vector<double> counts(W, 0.0);
    for (int i = 0; i < draws; ++i) counts[random_pad(100, W, rng) - 101] += 1.0;
    const double expected = static_cast<double>(draws) / W;
    double stat = 0.0;
    for (double c : counts) stat += (c - expected) * (c - expected) / expected;
    EXPECT_LT(stat, boost::math::quantile(boost::math::chi_squared(W - 1), 0.95));
}

TEST(RandomPad, RejectsZeroArguments) {
    Rng rng = make_rng(4);
    EXPECT_EQ(code_of([&] { random_pad(0, 80, rng); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { random_pad(100, 0, rng); }), ErrorCode::InvalidArgument);
}

TEST(Level100, TableRows) {
    Rng rng = make_rng(5);
    EXPECT_EQ(level100_pad(54, rng), 100u);
    EXPECT_EQ(level100_pad(100, rng), 100u);
    EXPECT_EQ(level100_pad(101, rng), 200u);
    EXPECT_EQ(level100_pad(250, rng), 300u);
    EXPECT_EQ(level100_pad(1450, rng), 1600u);
    EXPECT_EQ(level100_pad(1400, rng), 1600u);
    EXPECT_EQ(level100_pad(1600, rng), 1600u);
}

TEST(Level100, RandomRows) {
    Rng rng = make_rng(6);
    for (int i = 0; i < 2000; ++i) {
        const auto a = level100_pad(500, rng);
        EXPECT_GE(a, 500u);
        EXPECT_LE(a, 1000u);
        const auto b = level100_pad(999, rng);
        EXPECT_GE(b, 999u);
        EXPECT_LE(b, 1400u);
        const auto c = level100_pad(301, rng);
        EXPECT_GE(c, 301u);
        EXPECT_LE(c, 1000u);
    }
}

TEST(Level100, OversizeIsUnsupported) {
    Rng rng = make_rng(7);
    EXPECT_EQ(code_of([&] { level100_pad(1601, rng); }), ErrorCode::UnsupportedSize);
}

TEST(PaddingScheme, ConstantRefusesSmallTarget) {
    Rng rng = make_rng(8);
    EXPECT_EQ(PaddingScheme::constant(200).apply(150, rng), 200u);
    EXPECT_EQ(code_of([&] { PaddingScheme::constant(100).apply(150, rng); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------

namespace {

StpParams params(double q, std::uint32_t W = 80) {
    StpParams p;
    p.q = q;
    p.T = 1.0;
    p.R = 100.0;
    p.W = W;
    return p;
}

} // namespace

TEST(Stp, QuietTraceWithoutInjectionEmitsOnlyTheActivePeriod) {
    Rng rng = make_rng(10);
    const Trace t = make_trace({{5.2, 300}, {5.25, 400}}, 10.0);
    const Trace out = stp_shape(t, params(0.0), rng);
    ASSERT_EQ(out.size(), 100u);
    EXPECT_NEAR(out.packets.front().timestamp, 5.2, 1e-12);
    EXPECT_NEAR(out.packets.back().timestamp, 6.19, 1e-12);
    std::size_t real = 0;
    for (const auto& p : out.packets) real += !p.is_cover;
    EXPECT_EQ(real, 2u);
}

TEST(Stp, ActivePeriodHasRSlotsEquallySpaced) {
    Rng rng = make_rng(11);
    Trace t = synth_device(default_corpus()[2], 600.0, rng);
    const Trace out = stp_shape(t, params(0.1), rng);
    ASSERT_FALSE(out.empty());
    // Every maximal run of consecutive 1/R spacing has a multiple of R*T packets.
    std::size_t run = 1;
    for (std::size_t i = 1; i <= out.size(); ++i) {
        const bool cont = i < out.size() && std::abs(out.packets[i].timestamp - out.packets[i - 1].timestamp - 0.01) < 1e-9;
        if (cont) {
            ++run;
            continue;
        }
        EXPECT_EQ(run % 100, 0u) << "run ending at " << i;
        if (i < out.size()) {
            EXPECT_GT(out.packets[i].timestamp - out.packets[i - 1].timestamp, 0.01);
        }
        run = 1;
    }
}

TEST(Stp, InjectionRateMatchesQ) {
    Rng rng = make_rng(12);
    Trace empty;
    empty.duration = 10000.0;
    const auto sch = stp_schedule(empty, params(0.1), rng);
    const double frac = static_cast<double>(sch.periods()) / 10000.0;
    EXPECT_NEAR(frac, 0.1, 0.01);
    EXPECT_EQ(sch.periods(), sch.injections);
}

TEST(Stp, EveryRealPacketSurvivesOncePadded) {
    Rng rng = make_rng(13);
    const Trace t = synth_device(default_corpus()[0], 1800.0, rng);
    const Trace out = stp_shape(t, params(0.1), rng);
    std::vector<std::uint32_t> real;
    for (const auto& p : out.packets)
        if (!p.is_cover) real.push_back(p.size);
    ASSERT_EQ(real.size(), t.size());
    for (std::size_t i = 0; i < real.size(); ++i) {
        EXPECT_GT(real[i], t.packets[i].size);
        EXPECT_LE(real[i], t.packets[i].size + 80);
    }
}

TEST(Stp, Level100PadsCoverLikeReal) {
    Rng rng = make_rng(14);
    const Trace t = synth_device(default_corpus()[3], 1800.0, rng);
    const Trace out = stp_shape(t, params(0.1), PaddingScheme::level100(), rng);
    std::size_t i = 0;
    for (const auto& p : out.packets) {
        if (!p.is_cover) {
            EXPECT_GE(p.size, t.packets[i++].size);
        }
        EXPECT_TRUE(p.size == 100 || p.size == 200 || p.size == 300 || (p.size > 300 && p.size <= 1400) || p.size == 1600);
    }
    EXPECT_EQ(i, t.size());
}

TEST(Stp, SameSeedSameOutput) {
    Rng a = make_rng(15), b = make_rng(15);
    Rng src = make_rng(16);
    const Trace t = synth_device(default_corpus()[6], 900.0, src);
    EXPECT_EQ(stp_shape(t, params(0.1), a), stp_shape(t, params(0.1), b));
}

TEST(Stp, ScheduleMatchesShapedTimestamps) {
    Rng src = make_rng(17);
    const Trace t = synth_device(default_corpus()[1], 900.0, src);
    Rng a = make_rng(18), b = make_rng(18);
    const auto sch = stp_schedule(t, params(0.1), a);
    const auto out = stp_shape(t, params(0.1), b);
    ASSERT_EQ(static_cast<std::int64_t>(out.size()), sch.emitted());
}

TEST(Stp, OverloadIsReported) {
    Trace t;
    for (int i = 0; i < 300; ++i) t.packets.push_back({1.0 + i * 0.001, 100, "d", false, false});
    t.duration = 5.0;
    Rng rng = make_rng(19);
    EXPECT_EQ(code_of([&] { stp_shape(t, params(0.0), rng); }), ErrorCode::Overload);
}

TEST(Stp, InvalidParameters) {
    StpParams p = params(0.1);
    p.R = 0.5;
    EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
    p = params(1.5);
    EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Stp, EmptyCoverDistributionWithInjectionFails) {
    Trace empty;
    empty.duration = 100.0;
    Rng rng = make_rng(20);
    EXPECT_EQ(code_of([&] { stp_shape(empty, params(0.5), rng); }), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------

TEST(Ilp, CountAndSize) {
    Rng rng = make_rng(21);
    const Trace t = synth_device(default_corpus()[0], 100.5, rng);
    const Trace out = ilp_shape(t, 10.0, 1600);
    EXPECT_EQ(out.size(), 1005u);
    for (const auto& p : out.packets) EXPECT_EQ(p.size, 1600u);
}

TEST(Ilp, DevicesBecomeIndistinguishable) {
    Rng rng = make_rng(22);
    const Trace a = synth_device(default_corpus()[0], 600.0, rng);
    const Trace b = synth_device(default_corpus()[3], 600.0, rng);
    EXPECT_EQ(size_histogram(ilp_shape(a, 20.0, 1600)), size_histogram(ilp_shape(b, 20.0, 1600)));
}

TEST(Ilp, EmptyTraceIsAllCover) {
    Trace t;
    t.duration = 12.3;
    const Trace out = ilp_shape(t, 10.0, 500);
    EXPECT_EQ(out.size(), 123u);
    for (const auto& p : out.packets) EXPECT_TRUE(p.is_cover);
}

TEST(Ilp, OverloadIsReported) {
    Trace t;
    for (int i = 0; i < 50; ++i) t.packets.push_back({0.5 + i * 0.001, 100, "d", false, false});
    t.duration = 2.0;
    EXPECT_EQ(code_of([&] { ilp_shape(t, 10.0, 1600); }), ErrorCode::Overload);
}
