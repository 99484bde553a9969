#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "iotfp/fingerprint.hpp"
#include "iotfp/io.hpp"
#include "iotfp/synth.hpp"
#include "iotfp/window_detector.hpp"
#include "test_util.hpp"

using namespace iotfp;
using iotfp::testing::code_of;
using iotfp::testing::make_trace;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("iotfp_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                                  ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string parse_message(std::string_view text) {
    try {
        parse_trace(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Parse);
        return e.what();
    }
    ADD_FAILURE() << "no parse error";
    return {};
}

} // namespace

TEST(TraceCsv, RoundTripIsExact) {
    Rng rng = make_rng(1);
    Trace t = synth_device(default_corpus()[0], 600.0, rng);
    t.packets[0].is_cover = true;
    t.packets[1].is_attack = true;
    t.packets[2].device_id.clear();
    EXPECT_EQ(parse_trace(format_trace(t)), t);
}

TEST(TraceCsv, FileRoundTrip) {
    TempDir dir;
    const Trace t = make_trace({{0.5, 60}, {1.25, 1500}}, 3.0);
    save_trace(t, dir.path / "sub" / "t.csv");
    EXPECT_EQ(load_trace(dir.path / "sub" / "t.csv"), t);
}

TEST(TraceCsv, DurationDefaultsToLastTimestamp) {
    const auto t = parse_trace("timestamp_s,size_bytes,device_id,is_cover,is_attack\n0.5,60,a,0,0\n2.5,70,a,0,0\n");
    EXPECT_DOUBLE_EQ(t.duration, 2.5);
    EXPECT_EQ(t.size(), 2u);
}

TEST(TraceCsv, CrlfAccepted) {
    const auto t = parse_trace("timestamp_s,size_bytes,device_id,is_cover,is_attack\r\n1,60,a,1,0\r\n");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_TRUE(t.packets[0].is_cover);
}

TEST(TraceCsv, ErrorsNameTheLine) {
    const std::string h = "timestamp_s,size_bytes,device_id,is_cover,is_attack\n";
    EXPECT_NE(parse_message(h + "1,60,a,0,0\n2,abc,a,0,0\n").find("line 3"), std::string::npos);
    EXPECT_NE(parse_message(h + "1,60,a,0\n").find("line 2"), std::string::npos);
    EXPECT_NE(parse_message(h + "2,60,a,0,0\n1,60,a,0,0\n").find("non-decreasing"), std::string::npos);
    EXPECT_NE(parse_message(h + "1,0,a,0,0\n").find("size"), std::string::npos);
    EXPECT_NE(parse_message(h + "-1,60,a,0,0\n").find("line 2"), std::string::npos);
    EXPECT_NE(parse_message(h + "1,60,a,2,0\n").find("is_cover"), std::string::npos);
    EXPECT_NE(parse_message("time,size\n").find("line 1"), std::string::npos);
    EXPECT_NE(parse_message("").find("header"), std::string::npos);
    EXPECT_NE(parse_message("# duration_s=1\n" + h + "2,60,a,0,0\n").find("duration"), std::string::npos);
}

TEST(TraceCsv, MissingFileIsIoError) {
    EXPECT_EQ(code_of([] { load_trace("/nonexistent/trace.csv"); }), ErrorCode::Io);
}

TEST(ProfileJson, RoundTrip) {
    Rng rng = make_rng(2);
    std::vector<DeviceProfile> ps;
    for (std::size_t i = 0; i < 3; ++i) ps.push_back(learn_profile(synth_device(default_corpus()[i], 900.0, rng)));
    annotate_unique_sizes(ps);
    ps[1].tags["W"] = 90;
    TempDir dir;
    save_profiles(ps, dir.path);
    EXPECT_TRUE(fs::exists(dir.path / "dev02_W90.json"));
    const auto back = load_profiles(dir.path);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].device_id, ps[i].device_id);
        EXPECT_EQ(back[i].histogram, ps[i].histogram);
        EXPECT_DOUBLE_EQ(back[i].mean_rate, ps[i].mean_rate);
        EXPECT_EQ(back[i].top_unique_size, ps[i].top_unique_size);
        EXPECT_EQ(back[i].tags, ps[i].tags);
    }
}

TEST(ProfileJson, MalformedDocuments) {
    EXPECT_EQ(code_of([] { profile_from_json(nlohmann::json{{"device_id", "a"}}); }), ErrorCode::Parse);
    EXPECT_EQ(code_of([] {
                  profile_from_json(nlohmann::json{{"device_id", "a"}, {"duration_s", 1}, {"mean_rate", 1}, {"histogram", {{"x", 1}}}});
              }),
              ErrorCode::Parse);
    EXPECT_EQ(code_of([] {
                  profile_from_json(nlohmann::json{
                      {"device_id", "a"}, {"duration_s", 1}, {"mean_rate", 1}, {"histogram", nlohmann::json::object()}});
              }),
              ErrorCode::EmptyProfile);
    TempDir dir;
    std::ofstream(dir.path / "bad.json") << "{not json";
    EXPECT_EQ(code_of([&] { load_profile(dir.path / "bad.json"); }), ErrorCode::Parse);
    EXPECT_EQ(code_of([] { load_profiles("/nonexistent/profiles"); }), ErrorCode::Io);
}

TEST(KnnFile, RoundTrip) {
    KnnModel m = make_knn({{{0.0, 1.5, 0.1}, true}, {{3.0, 0.0, 1e-7}, false}}, 1);
    const auto back = parse_knn(format_knn(m));
    EXPECT_EQ(back.k, m.k);
    EXPECT_EQ(back.x, m.x);
    EXPECT_EQ(back.real, m.real);
}

TEST(KnnFile, Malformed) {
    EXPECT_EQ(code_of([] { parse_knn("model\n"); }), ErrorCode::Parse);
    EXPECT_EQ(code_of([] { parse_knn("knn k=1 dim=2 n=1\n1,0\n"); }), ErrorCode::Parse);
    EXPECT_EQ(code_of([] { parse_knn("knn k=1 dim=1 n=2\n1,0\n"); }), ErrorCode::Parse);
    EXPECT_EQ(code_of([] { parse_knn("knn k=3 dim=1 n=1\n1,0\n"); }), ErrorCode::Parse);
}
