#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iotfp/iotfp.hpp"

using namespace iotfp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Default output directory: $IOTFP_OUT_DIR, else ./reports.
fs::path default_out_dir() {
    const char* env = std::getenv("IOTFP_OUT_DIR");
    return env && *env ? fs::path(env) : fs::path("reports");
}

struct NamedTraces {
    std::vector<std::string> ids;
    std::vector<Trace> traces;
};

// Every *.csv trace in `dir`, named by file stem, in name order.
NamedTraces load_trace_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(ErrorCode::Io, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorCode::Io, dir.string() + " holds no traces");
    NamedTraces out;
    for (const auto& f : files) {
        out.ids.push_back(f.stem().string());
        out.traces.push_back(load_trace(f));
    }
    return out;
}

std::vector<std::string> split_ids(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto next = s.find(',', pos);
        const auto item = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!item.empty()) out.push_back(item);
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

json metrics_json(const SubsetMetrics& m) {
    return {{"recall", m.recall}, {"precision", m.precision}, {"exact", m.exact}, {"undefined", m.undefined}};
}

json metrics_json(const BinaryMetrics& m) {
    return {{"accuracy", m.accuracy}, {"recall", m.recall},   {"precision", m.precision},
            {"tp", m.tp},             {"fp", m.fp},           {"tn", m.tn},
            {"fn", m.fn},             {"precision_undefined", m.precision_undefined},
            {"recall_undefined", m.recall_undefined}};
}

// STP flags shared by several subcommands.
struct StpFlags {
    double q = 0.1, T = 1.0, R = 100.0;
    std::uint32_t W = 80;

    void add(CLI::App* app) {
        app->add_option("--q", q, "Cover-period injection probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
        app->add_option("--T", T, "Period length, seconds")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--R", R, "Shaped rate, packets per second")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--W", W, "Random padding bound, bytes")->capture_default_str()->check(CLI::Range(1u, 100000u));
    }

    StpParams params() const {
        StpParams p;
        p.q = q;
        p.T = T;
        p.R = R;
        p.W = W;
        return p;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Padding and shaping simulator with traffic fingerprinting attacks"};
    app.require_subcommand(1);
    app.fallthrough(); // --seed may follow the subcommand
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Random seed")->capture_default_str();

    // synth ---------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus as learn/ and test/ trace directories");
    std::string synth_corpus_name = "default";
    double synth_duration = 10800.0, synth_test_duration = 1800.0;
    std::string synth_out;
    synth->add_option("--corpus", synth_corpus_name, "Corpus name")->capture_default_str()->check(CLI::IsMember({"default"}));
    synth->add_option("--duration", synth_duration, "Learning trace length, seconds")->capture_default_str();
    synth->add_option("--test-duration", synth_test_duration, "Test trace length, seconds")->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory (default: $IOTFP_OUT_DIR/corpus)");

    // shape ---------------------------------------------------------------
    auto* shape = app.add_subcommand("shape", "Apply a padding or shaping defense to a trace");
    std::string shape_in, shape_out, shape_scheme = "stp", shape_padding = "random";
    double ilp_rate = 20.0;
    std::uint32_t ilp_size = 1514;
    StpFlags shape_stp;
    shape->add_option("--in", shape_in, "Input trace CSV")->required();
    shape->add_option("--out", shape_out, "Output trace CSV")->required();
    shape->add_option("--scheme", shape_scheme, "stp, padding or ilp")->capture_default_str()->check(CLI::IsMember({"stp", "padding", "ilp"}));
    shape->add_option("--padding", shape_padding, "random, level100 or none")->capture_default_str()->check(CLI::IsMember({"random", "level100", "none"}));
    shape->add_option("--ilp-rate", ilp_rate, "ILP emission rate, packets per second")->capture_default_str();
    shape->add_option("--ilp-size", ilp_size, "ILP packet size, bytes")->capture_default_str();
    shape_stp.add(shape);

    // learn / classify / confusion ---------------------------------------
    auto* learn = app.add_subcommand("learn", "Learn a device profile from a trace");
    std::string learn_in, learn_out, learn_device;
    learn->add_option("--in", learn_in, "Trace CSV")->required();
    learn->add_option("--out", learn_out, "Profile JSON")->required();
    learn->add_option("--device", learn_device, "Device id (default: from the trace)");

    auto* classify = app.add_subcommand("classify", "Rank profiles by cosine distance to a trace");
    std::string cls_profiles, cls_in;
    std::size_t cls_top = 0;
    classify->add_option("--profiles", cls_profiles, "Profile directory")->required();
    classify->add_option("--in", cls_in, "Test trace CSV")->required();
    classify->add_option("--top", cls_top, "Print only the best N (0 = all)")->capture_default_str();

    auto* confusion = app.add_subcommand("confusion", "Confusion matrix of profiles against per-device test traces");
    std::string conf_profiles, conf_tests, conf_out;
    confusion->add_option("--profiles", conf_profiles, "Profile directory")->required();
    confusion->add_option("--tests", conf_tests, "Directory of <device>.csv test traces")->required();
    confusion->add_option("--out", conf_out, "Directory for confusion.csv and confusion.pgm (default: $IOTFP_OUT_DIR)");

    // count / subset ------------------------------------------------------
    auto* count = app.add_subcommand("count", "Estimate how many devices share an aggregated trace");
    std::string cnt_profiles, cnt_in, cnt_truth;
    count->add_option("--profiles", cnt_profiles, "Profile directory")->required();
    count->add_option("--in", cnt_in, "Aggregated trace CSV")->required();
    count->add_option("--truth", cnt_truth, "Comma-separated true device ids, for metrics");

    auto* subset = app.add_subcommand("subset", "Identify which devices share an aggregated trace");
    std::string sub_profiles, sub_in, sub_truth, sub_method = "fsbc";
    double sub_f1 = 80.0, sub_f2 = 90.0;
    subset->add_option("--profiles", sub_profiles, "Profile directory")->required();
    subset->add_option("--in", sub_in, "Aggregated trace CSV")->required();
    subset->add_option("--method", sub_method, "full or fsbc")->capture_default_str()->check(CLI::IsMember({"full", "fsbc"}));
    subset->add_option("--f1", sub_f1, "Share of common sizes per device, percent")->capture_default_str()->check(CLI::Range(0.0, 100.0));
    subset->add_option("--f2", sub_f2, "Required fraction of expected count, percent")->capture_default_str()->check(CLI::Range(0.0, 100.0));
    subset->add_option("--truth", sub_truth, "Comma-separated true device ids, for metrics");

    // estimate-w / estimate-q --------------------------------------------
    auto* est_w = app.add_subcommand("estimate-w", "Estimate the padding bound W of a shaped trace");
    std::string ew_store, ew_learn, ew_in;
    StpFlags ew_stp;
    est_w->add_option("--store", ew_store, "Directory of profiles tagged with W")->required();
    est_w->add_option("--learn", ew_learn, "Directory of raw learning traces; builds the store first");
    est_w->add_option("--in", ew_in, "Shaped test trace CSV");
    ew_stp.add(est_w);

    auto* est_q = app.add_subcommand("estimate-q", "Estimate the cover probability q of a shaped trace");
    std::string eq_learn, eq_in;
    StpFlags eq_stp;
    est_q->add_option("--learn", eq_learn, "Raw learning trace of the device")->required();
    est_q->add_option("--in", eq_in, "Shaped test trace CSV")->required();
    eq_stp.add(est_q);

    // windows -------------------------------------------------------------
    auto* windows = app.add_subcommand("windows", "Train or apply the cover-only window detector");
    bool win_train = false, win_classify = false;
    std::vector<std::string> win_in;
    std::string win_model;
    double win_offset = 0.5;
    std::size_t win_kmax = 150, win_folds = 10, win_max_train = 3000;
    StpFlags win_stp;
    auto* train_flag = windows->add_flag("--train", win_train, "Train from shaped traces with cover flags");
    windows->add_flag("--classify", win_classify, "Classify the windows of shaped traces")->excludes(train_flag);
    windows->add_option("--in", win_in, "Shaped trace CSV(s)")->required();
    windows->add_option("--model", win_model, "KNN model file")->required();
    windows->add_option("--offset", win_offset, "Window offset as a fraction of T")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    windows->add_option("--k-max", win_kmax, "Largest k tried")->capture_default_str();
    windows->add_option("--folds", win_folds, "Cross-validation folds")->capture_default_str();
    windows->add_option("--max-train", win_max_train, "Training windows kept after shuffling (0 = all)")->capture_default_str();
    win_stp.add(windows);

    // anomaly -------------------------------------------------------------
    auto* anomaly = app.add_subcommand("anomaly", "Window-level anomaly detection on raw device traffic");
    std::string an_method = "js", an_inject, an_normal, an_validation, an_test, an_out;
    double an_fraction = 0.5, an_window = 120.0;
    std::size_t an_k = 20;
    anomaly->add_option("--method", an_method, "lof or js")->capture_default_str()->check(CLI::IsMember({"lof", "js"}));
    anomaly->add_option("--inject", an_inject, "Attack profile injected into validation and test traces");
    anomaly->add_option("--fraction", an_fraction, "Fraction of windows injected")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    anomaly->add_option("--window", an_window, "Window length, seconds")->capture_default_str()->check(CLI::PositiveNumber);
    anomaly->add_option("--neighbors", an_k, "LOF neighbourhood")->capture_default_str();
    anomaly->add_option("--normal", an_normal, "Normal traffic trace")->required();
    anomaly->add_option("--validation", an_validation, "Validation trace")->required();
    anomaly->add_option("--test", an_test, "Test trace")->required();
    anomaly->add_option("--out", an_out, "Per-window scores CSV (default: stdout)");

    // chi2 ----------------------------------------------------------------
    auto* chi2 = app.add_subcommand("chi2", "Chi-squared test of independence of timing and size");
    std::string chi_in;
    double chi_step = 5.0;
    std::uint32_t chi_size_step = 50;
    chi2->add_option("--in", chi_in, "Trace CSV")->required();
    chi2->add_option("--time-step", chi_step, "Initial inter-arrival bin width, seconds")->capture_default_str();
    chi2->add_option("--size-step", chi_size_step, "Initial size bin width, bytes")->capture_default_str();

    // run / list ----------------------------------------------------------
    auto* run = app.add_subcommand("run", "Run a named experiment and write its report");
    std::string run_name, run_config, run_out;
    run->add_option("experiment", run_name, "Experiment name")->required();
    run->add_option("--config", run_config, "Config JSON, or a previous summary.json");
    run->add_option("--out", run_out, "Report directory (default: $IOTFP_OUT_DIR/<experiment>)");
    auto* list = app.add_subcommand("list", "List experiment names");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const fs::path out = synth_out.empty() ? default_out_dir() / "corpus" : fs::path(synth_out);
            const auto c = synth_corpus(default_corpus(), seed, synth_duration, synth_test_duration);
            for (std::size_t i = 0; i < c.size(); ++i) {
                save_trace(c.learn[i], out / "learn" / (c.ids[i] + ".csv"));
                save_trace(c.test[i], out / "test" / (c.ids[i] + ".csv"));
            }
            std::cout << json{{"out", out.string()}, {"devices", c.ids}, {"seed", seed}}.dump() << '\n';
        } else if (*shape) {
            const Trace in = load_trace(shape_in);
            Rng rng = make_rng(seed);
            Trace out;
            if (shape_scheme == "ilp") {
                out = ilp_shape(in, ilp_rate, ilp_size);
            } else {
                const PaddingScheme pad =
                    shape_padding == "level100" ? PaddingScheme::level100() : PaddingScheme::random(shape_stp.W);
                if (shape_scheme == "stp") {
                    require(shape_padding != "none", ErrorCode::InvalidArgument, "STP needs a padding scheme");
                    out = stp_shape(in, shape_stp.params(), pad, rng);
                } else {
                    out = in;
                    if (shape_padding != "none")
                        for (auto& p : out.packets) p.size = pad.apply(p.size, rng);
                }
            }
            save_trace(out, shape_out);
            std::cout << json{{"in_packets", in.size()}, {"out_packets", out.size()}, {"duration", out.duration}}.dump()
                      << '\n';
        } else if (*learn) {
            const Trace t = load_trace(learn_in);
            std::string id = learn_device;
            if (id.empty())
                for (const auto& p : t.packets)
                    if (!p.device_id.empty()) {
                        id = p.device_id;
                        break;
                    }
            const auto prof = learn_profile(t, id);
            save_profile(prof, learn_out);
            std::cout << json{{"device_id", prof.device_id}, {"packets", prof.histogram.total()},
                              {"distinct_sizes", prof.histogram.distinct()}, {"mean_rate", prof.mean_rate}}
                             .dump()
                      << '\n';
        } else if (*classify) {
            auto profiles = load_profiles(cls_profiles);
            const auto ranked = rank_devices(profiles, size_histogram(load_trace(cls_in)));
            std::cout << "rank,device,distance\n";
            for (std::size_t i = 0; i < ranked.size() && (cls_top == 0 || i < cls_top); ++i)
                std::cout << i + 1 << ',' << ranked[i].device_id << ',' << ranked[i].distance << '\n';
        } else if (*confusion) {
            const auto profiles = load_profiles(conf_profiles);
            const auto tests = load_trace_dir(conf_tests);
            const auto m = confusion_matrix(profiles, tests.traces, tests.ids);
            const fs::path out = conf_out.empty() ? default_out_dir() : fs::path(conf_out);
            fs::create_directories(out);
            std::ofstream(out / "confusion.csv") << to_csv(m);
            std::ofstream(out / "confusion.pgm", std::ios::binary) << pgm_heatmap(m);
            std::cout << ascii_heatmap(m) << "diagonal_rate " << diagonal_rate(m) << '\n';
        } else if (*count) {
            const auto profiles = load_profiles(cnt_profiles);
            const auto o = observe(load_trace(cnt_in));
            const auto th = learn_count_thresholds(profiles);
            const auto k = estimate_count(o.rate(), th);
            json line{{"estimate", k}, {"rate", o.rate()}, {"thresholds", th.thresholds}};
            if (!cnt_truth.empty()) {
                const auto truth = split_ids(cnt_truth).size();
                line["truth"] = truth;
                line["error"] = static_cast<long long>(k) - static_cast<long long>(truth);
            }
            std::cout << line.dump() << '\n';
        } else if (*subset) {
            const auto profiles = load_profiles(sub_profiles);
            const auto o = observe(load_trace(sub_in));
            const auto th = learn_count_thresholds(profiles);
            const auto e = sub_method == "full" ? full_comparison_check(profiles, o, th)
                                                : fsbc(profiles, o, sub_f1, sub_f2, th);
            json line{{"method", sub_method}, {"estimated_count", e.estimated_count}, {"devices", e.devices},
                      {"operations", e.operations}};
            if (sub_method == "full") line["distance"] = e.distance;
            else line["scores"] = e.scores;
            if (!sub_truth.empty()) line["metrics"] = metrics_json(subset_metrics(split_ids(sub_truth), e.devices));
            std::cout << line.dump() << '\n';
        } else if (*est_w) {
            if (!ew_learn.empty()) {
                const auto learn_traces = load_trace_dir(ew_learn);
                const auto grid = build_w_grid(learn_traces.traces, learn_traces.ids, default_w_grid(), ew_stp.params(),
                                               derive_seed(seed, {kWGrid}));
                std::vector<DeviceProfile> ps;
                for (const auto& [_, p] : grid.models) ps.push_back(p);
                save_profiles(ps, ew_store);
            }
            if (!ew_in.empty()) {
                WGridModels models;
                std::set<std::uint32_t> ws;
                std::set<std::string> devs;
                for (auto& p : load_profiles(ew_store)) {
                    const auto it = p.tags.find("W");
                    if (it == p.tags.end()) continue;
                    const auto W = static_cast<std::uint32_t>(it->second);
                    ws.insert(W);
                    if (devs.insert(p.device_id).second) models.devices.push_back(p.device_id);
                    models.models.emplace(std::pair{p.device_id, W}, std::move(p));
                }
                models.grid.assign(ws.begin(), ws.end());
                require(models.size() == models.grid.size() * models.devices.size(), ErrorCode::InvalidArgument,
                        "profile store must hold every (device, W) pair");
                const auto e = estimate_w(models, size_histogram(load_trace(ew_in)));
                std::cout << json{{"W", e.W}, {"tolerance", e.tolerance}, {"device", e.device_id}, {"distance", e.distance}}.dump()
                          << '\n';
            }
        } else if (*est_q) {
            const auto th = build_q_thresholds(load_trace(eq_learn), default_q_grid(), eq_stp.params(),
                                               derive_seed(seed, {kQThreshold}));
            const Trace test = load_trace(eq_in);
            require(test.duration > 0.0, ErrorCode::InvalidArgument, "test trace has no duration");
            const double rate = static_cast<double>(test.size()) / test.duration;
            std::cout << json{{"q", estimate_q(th, rate)}, {"rate", rate}, {"thresholds", th.thresholds}}.dump() << '\n';
        } else if (*windows) {
            require(win_train || win_classify, ErrorCode::InvalidArgument, "pass --train or --classify");
            const auto p = win_stp.params();
            const double offset = win_offset * p.T;
            if (win_train) {
                std::vector<LabeledWindow> lw;
                WindowCounts total;
                for (const auto& f : win_in) {
                    WindowCounts wc;
                    auto w = label_training_windows(load_trace(f), p, offset, &wc);
                    total.windows += wc.windows;
                    total.periods += wc.periods;
                    lw.insert(lw.end(), w.begin(), w.end());
                }
                Rng rng = make_rng(seed, {kWindowSample});
                std::shuffle(lw.begin(), lw.end(), rng);
                if (win_max_train > 0 && lw.size() > win_max_train) lw.resize(win_max_train);
                const auto m = train_knn(lw, 1, win_kmax, win_folds, derive_seed(seed, {kKnnFolds}));
                save_knn(m, win_model);
                std::cout << json{{"windows", total.windows}, {"periods", total.periods}, {"training_windows", lw.size()},
                                  {"k", m.k}, {"cv_accuracy", m.cv_accuracy}}
                                 .dump()
                          << '\n';
            } else {
                const auto m = load_knn(win_model);
                std::vector<LabeledWindow> all;
                for (const auto& f : win_in) {
                    auto w = label_training_windows(load_trace(f), p, offset);
                    all.insert(all.end(), w.begin(), w.end());
                }
                const auto c = classify_windows(m, all);
                std::cout << "window,predicted_real,true_real\n";
                for (std::size_t i = 0; i < all.size(); ++i)
                    std::cout << i << ',' << c.real[i] << ',' << all[i].real << '\n';
                std::cerr << metrics_json(c.metrics).dump() << '\n';
            }
        } else if (*anomaly) {
            const auto method = anomaly_method(an_method);
            const Trace normal = load_trace(an_normal);
            Trace validation = load_trace(an_validation), test = load_trace(an_test);
            if (!an_inject.empty()) {
                const auto attack = attack_by_name(an_inject);
                Rng a = make_rng(seed, {kAnomalyInject, 1}), b = make_rng(seed, {kAnomalyInject, 2});
                validation = inject_attack(validation, attack, an_window, an_fraction, a).trace;
                test = inject_attack(test, attack, an_window, an_fraction, b).trace;
            }
            const auto model = train_anomaly_model(method, normal, validation, an_window, an_k);
            const auto d = detect(model, test);
            const auto labels = attack_window_labels(test, an_window);
            std::ostringstream csv;
            csv << "window,start_s,score,empty,abnormal,attack\n";
            for (std::size_t i = 0; i < d.scores.size(); ++i)
                csv << i << ',' << static_cast<double>(i) * an_window << ',' << d.scores[i] << ',' << d.empty[i] << ','
                    << d.abnormal[i] << ',' << labels[i] << '\n';
            if (an_out.empty()) std::cout << csv.str();
            else std::ofstream(an_out) << csv.str();
            json summary{{"method", an_method},
                         {"threshold", model.threshold},
                         {"validation_auc", model.validation.auc},
                         {"validation_eer", model.validation.eer},
                         {"test", metrics_json(d.metrics)}};
            (an_out.empty() ? std::cerr : std::cout) << summary.dump() << '\n';
        } else if (*chi2) {
            const auto r = chi_squared_independence(load_trace(chi_in), chi_step, chi_size_step);
            std::cout << json{{"statistic", r.statistic},
                              {"df", r.degrees_of_freedom},
                              {"critical_95", r.critical_value_95},
                              {"reject_independence", r.reject_independence},
                              {"time_bin_s", r.final_time_bin_width},
                              {"size_bin_b", r.final_size_bin_width},
                              {"pct_expected_ge_5", r.pct_expected_ge_5}}
                             .dump()
                      << '\n';
        } else if (*run) {
            ExperimentConfig cfg;
            if (!run_config.empty()) {
                json j;
                try {
                    j = json::parse(detail::read_file(run_config));
                } catch (const json::parse_error& e) {
                    fail(ErrorCode::Parse, run_config + ": " + e.what());
                }
                cfg = config_from_json(j.contains("config") ? j["config"] : j);
            }
            if (app.count("--seed")) cfg.seed = seed;
            const fs::path out = run_out.empty() ? default_out_dir() / run_name : fs::path(run_out);
            cfg.out_dir = out.string();
            const auto rep = run_experiment(run_name, cfg);
            write_report(rep, out);
            std::cout << rep.summary.at("results").dump() << '\n';
        } else if (*list) {
            for (const auto& n : experiment_names()) std::cout << n << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
