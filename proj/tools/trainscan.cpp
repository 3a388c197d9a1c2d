// SPDX-License-Identifier: Apache-2.0
// trainscan: ingest, synth, detect, train, score, diel, serve, worker, bench.

#include "trainscan/bench.hpp"
#include "trainscan/classifier.hpp"
#include "trainscan/codec.hpp"
#include "trainscan/diel.hpp"
#include "trainscan/error.hpp"
#include "trainscan/net/api.hpp"
#include "trainscan/net/control.hpp"
#include "trainscan/pipeline.hpp"
#include "trainscan/scenes.hpp"
#include "trainscan/scheduler.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace trainscan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open '" + p.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw Error(ErrorCode::io, "cannot write '" + p.string() + "'");
    }
}

/// Appends timestamped lines to <out>/logs/<command>.log.
class RunLog {
public:
    void open(const fs::path& out, const std::string& command) {
        fs::create_directories(out / "logs");
        file_.open(out / "logs" / (command + ".log"), std::ios::app);
    }
    void operator()(const std::string& line) {
        if (file_) {
            const auto now = std::chrono::time_point_cast<Micros>(std::chrono::system_clock::now());
            file_ << format_iso8601(now) << '\t' << line << '\n';
            file_.flush();
        }
    }

private:
    std::ofstream file_;
};

struct Common {
    std::string out = "out";
};

struct AnalysisFlags {
    std::string config;
    std::string model;
    int fft_size = 0;
    int hop = 0;

    pipeline::AnalysisConfig build() const {
        pipeline::AnalysisConfig c;
        if (!config.empty()) {
            c = pipeline::AnalysisConfig::from_json(slurp(config));
        }
        if (fft_size > 0) c.stft.fft_size = fft_size;
        if (hop > 0) c.stft.hop = hop;
        if (!model.empty()) {
            c.model = detect::ClassifierModel::from_json(slurp(model));
        }
        c.validate();
        return c;
    }

    void add(CLI::App* app) {
        app->add_option("--config", config, "analysis config JSON (trainscan.analysis)");
        app->add_option("--model", model, "classifier model JSON; without one every train is kept");
        app->add_option("--fft-size", fft_size, "override the STFT size");
        app->add_option("--hop", hop, "override the STFT hop");
    }
};

std::optional<TimeSpan> span_from(const std::string& t0, const std::string& t1) {
    if (t0.empty() && t1.empty()) {
        return std::nullopt;
    }
    if (t0.empty() || t1.empty()) {
        throw Error(ErrorCode::invalid_argument, "--t0 and --t1 go together");
    }
    return TimeSpan::make(parse_iso8601_or_throw(t0), parse_iso8601_or_throw(t1));
}

Micros tz_from(const std::string& text) {
    if (text.empty() || text == "Z" || text == "UTC") return Micros{0};
    if ((text[0] == '+' || text[0] == '-') && text.size() == 6 && text[3] == ':') {
        const auto off = std::chrono::hours(std::stoi(text.substr(1, 2))) + std::chrono::minutes(std::stoi(text.substr(4, 2)));
        return text[0] == '-' ? -Micros(off) : Micros(off);
    }
    throw Error(ErrorCode::invalid_argument, "time zone offset must look like +HH:MM or -HH:MM");
}

/// TRAINSCAN_<FLAG> for every long flag of every subcommand.
void add_env_overrides(CLI::App& app) {
    for (CLI::Option* opt : app.get_options()) {
        const auto& names = opt->get_lnames();
        if (names.empty() || names.front() == "help") continue;
        std::string env = "TRAINSCAN_";
        for (char c : names.front()) {
            env += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        opt->envname(env);
    }
    for (CLI::App* sub : app.get_subcommands({})) {
        add_env_overrides(*sub);
    }
}

void write_outputs(const fs::path& out, const sched::MergedResult& merged) {
    fs::create_directories(out);
    store::save_table(out / "events.tsv", merged.events);
    pipeline::save_features(out / "features.tsv", merged.features);
}

json accounting_json(const sched::MergedResult& merged) {
    json units = json::array();
    for (const auto& u : merged.units) {
        units.push_back({{"unit_id", u.unit_id}, {"channel", u.channel}, {"processed_s", u.processed_s},
                         {"wall_s", u.wall_s}, {"attempts", u.attempts}});
    }
    return json{{"events", merged.events.size()}, {"trains", merged.features.size()},
                {"discarded_results", merged.discarded_results}, {"units", units}};
}

// ---------------------------------------------------------------------------

struct DetectFlags {
    std::string manifest;
    std::string mode = "standalone";
    int workers = 1;
    std::vector<int> channels;
    std::string t0, t1;
    double unit_core = 600.0;
    double overlap = 60.0;
    bool single_pass = false;
    std::string control;
    std::string server;
    std::string client_id = "cli";
    int timeout_ms = 30000;
};

sched::MergedResult detect_console(const sched::Job& job, const DetectFlags& f, const sched::LocalRunOptions& opts,
                                   RunLog& log) {
    auto head = std::make_shared<sched::HeadNode>(job, opts.scheduler);
    net::ControlServer control(net::Endpoint::parse(f.control), [head] { return head; });
    log("control channel on port " + std::to_string(control.port()));
    std::cerr << "control\t" << control.port() << std::endl;
    if (f.workers > 0) {
        sched::run_local_workers(*head, f.workers, opts);
    } else {
        while (!head->wait_for(opts.monitor_interval)) {
            head->check_timeouts();
        }
    }
    control.stop();
    return head->result();
}

sched::MergedResult detect_via_server(const DetectFlags& f, const pipeline::AnalysisConfig& config, RunLog& log) {
    const auto ep = net::Endpoint::parse(f.server);
    httplib::Client cli(ep.host, ep.port);
    cli.set_read_timeout(60, 0);
    httplib::Headers headers{{"X-Client-Id", f.client_id}};
    json body{{"manifest", fs::absolute(f.manifest).string()},
              {"channels", f.channels},
              {"config", json::parse(config.to_json())},
              {"chunking", {{"unit_core_s", f.unit_core}, {"overlap_s", f.overlap}}},
              {"local_workers", f.workers}};
    if (!f.t0.empty()) body["t0"] = f.t0;
    if (!f.t1.empty()) body["t1"] = f.t1;
    auto check = [&](const httplib::Result& r, const std::string& what) -> json {
        if (!r) {
            throw Error(ErrorCode::io, what + ": cannot reach " + f.server);
        }
        json j = json::parse(r->body, nullptr, false);
        if (r->status >= 400) {
            const std::string msg = j.is_object() ? j.value("error", r->body) : r->body;
            throw Error(r->status == 403 ? ErrorCode::permission : r->status == 404 ? ErrorCode::not_found
                                                                                   : ErrorCode::invalid_argument,
                        what + ": " + msg);
        }
        return j;
    };
    const json submitted = check(cli.Post("/jobs", headers, body.dump(), "application/json"), "submit");
    const std::string id = submitted.at("job_id");
    log("submitted " + id + " to " + f.server);
    std::cerr << "job\t" << id << std::endl;
    while (true) {
        json j = check(cli.Get("/jobs/" + id + "?events=1&features=1", headers), "status");
        const std::string state = j.value("state", "");
        if (state == "failed") {
            throw Error(ErrorCode::job_failed, j.value("error", std::string("job failed")));
        }
        if (state == "completed") {
            sched::MergedResult out;
            for (const auto& e : j.at("events")) {
                auto rec = codec::event_from_json(e);
                out.events.push_back(std::move(rec));
            }
            // Ids on the server are store-wide; a local table is numbered 1..n.
            std::uint64_t next = 1;
            for (auto& e : out.events) e.event_id = next++;
            for (const auto& r : j.value("features", json::array())) {
                out.features.push_back(codec::feature_row_from_json(r));
            }
            return out;
        }
        if (g_stop) {
            throw Error(ErrorCode::job_failed, "interrupted while waiting for " + id);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
}

int run_detect(const Common& c, const DetectFlags& f, const AnalysisFlags& af) {
    RunLog log;
    log.open(c.out, "detect");
    const auto config = af.build();
    if (f.mode != "standalone" && f.mode != "console" && f.mode != "server") {
        throw Error(ErrorCode::invalid_argument, "unknown mode '" + f.mode + "'");
    }
    if (f.mode == "server" && f.server.empty()) {
        throw Error(ErrorCode::invalid_argument, "--mode server needs --server host:port");
    }
    if (f.mode == "console" && f.control.empty()) {
        throw Error(ErrorCode::invalid_argument, "--mode console needs --control host:port");
    }
    if (f.mode == "standalone" && (!f.server.empty() || !f.control.empty())) {
        throw Error(ErrorCode::invalid_argument, "--mode standalone takes no --server or --control endpoint");
    }
    if (f.workers < (f.mode == "standalone" ? 1 : 0)) {
        throw Error(ErrorCode::invalid_argument, "--workers is out of range for this mode");
    }
    sched::LocalRunOptions opts;
    opts.scheduler.timeout = std::chrono::milliseconds(f.timeout_ms);
    log("mode " + f.mode + ", workers " + std::to_string(f.workers) + ", config " + config.config_hash());

    const auto t_start = std::chrono::steady_clock::now();
    sched::MergedResult merged;
    if (f.mode == "server") {
        merged = detect_via_server(f, config, log);
    } else {
        auto job = sched::make_job(f.manifest, f.channels, config, {f.unit_core, f.overlap}, span_from(f.t0, f.t1));
        job.manifest_path = fs::absolute(f.manifest);
        if (f.single_pass) {
            merged = sched::run_single_pass(job);
        } else if (f.mode == "console") {
            merged = detect_console(job, f, opts, log);
        } else {
            merged = sched::run_local(job, f.workers, opts);
        }
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_outputs(c.out, merged);
    json summary = accounting_json(merged);
    summary["wall_s"] = wall;
    summary["config_hash"] = config.config_hash();
    log("done " + summary.dump());
    std::cout << "events\t" << merged.events.size() << "\ntrains\t" << merged.features.size() << "\nwall_s\t" << wall
              << "\nconfig_hash\t" << config.config_hash() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
    std::vector<std::string> features;
    std::string truth;
    std::vector<std::string> signal;
    std::vector<std::string> noise;
    std::uint64_t seed = 1;
    int iterations = 500;
    double step = 0.1;
    double min_overlap = 0.5;
    bool no_bac1000 = false;
};

int run_train(const Common& c, const TrainFlags& f) {
    RunLog log;
    log.open(c.out, "train");
    std::vector<detect::FeatureVector> x;
    std::vector<char> y;
    auto add_rows = [&](const std::vector<pipeline::FeatureRow>& rows, std::optional<bool> forced) {
        for (const auto& r : rows) {
            x.push_back(r.features);
            y.push_back(forced ? *forced : pipeline::is_signal_label(r.label, !f.no_bac1000));
        }
    };
    if (!f.features.empty()) {
        std::optional<store::GroundTruthTable> truth;
        if (!f.truth.empty()) truth = store::GroundTruthTable::load(f.truth);
        for (const auto& p : f.features) {
            auto rows = pipeline::load_features(p);
            if (truth) {
                pipeline::label_by_truth(rows, *truth, f.min_overlap);
            } else if (std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.label.empty(); })) {
                throw Error(ErrorCode::invalid_argument, "'" + p + "' has unlabelled rows; pass --truth");
            }
            add_rows(rows, std::nullopt);
        }
    }
    for (const auto& p : f.signal) add_rows(pipeline::load_features(p), true);
    for (const auto& p : f.noise) add_rows(pipeline::load_features(p), false);
    if (x.empty()) {
        throw Error(ErrorCode::invalid_argument, "no training rows: give --features, --signal or --noise");
    }
    std::unique_ptr<bool[]> labels(new bool[y.size()]);
    for (std::size_t i = 0; i < y.size(); ++i) labels[i] = y[i] != 0;
    const std::span<const bool> ys(labels.get(), y.size());
    const auto model = detect::train_classifier(x, ys, f.seed, {f.iterations, f.step});
    const auto g = detect::training_gradient(model, x, ys);
    double g_inf = 0.0;
    for (double v : g) g_inf = std::max(g_inf, std::abs(v));
    spit(fs::path(c.out) / "model.json", model.to_json());
    log("trained on " + std::to_string(model.training.n_signal) + " signal / " +
        std::to_string(model.training.n_noise) + " noise rows; gradient inf-norm " + std::to_string(g_inf));
    std::cout << "signal\t" << model.training.n_signal << "\nnoise\t" << model.training.n_noise << "\nloss\t"
              << detect::training_loss(model, x, ys) << "\ngradient_inf\t" << g_inf << "\ndigest\t" << model.digest()
              << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

int main_impl(int argc, char** argv) {
    CLI::App app{"Pulse-train detection, classification and review for long acoustic recordings"};
    app.fallthrough();
    app.require_subcommand(1);
    Common common;
    app.add_option("--out", common.out, "output directory")->capture_default_str();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "index a directory of recordings into a manifest");
    std::string ingest_root, ingest_manifest;
    ingest->add_option("--root", ingest_root, "directory holding <station>_<channel>_<ISO8601>.wav files")->required();
    ingest->add_option("--manifest", ingest_manifest, "where to write the manifest (default <out>/manifest.json)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene with truth");
    std::string preset = "reference", scene_file, synth_dir;
    std::uint64_t synth_seed = 1;
    double file_seconds = 600.0;
    synth_cmd->add_option("--preset", preset, "scene preset")
        ->check(CLI::IsMember(scenes::preset_names()))
        ->capture_default_str();
    synth_cmd->add_option("--scene", scene_file, "scene spec JSON instead of a preset");
    synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
    synth_cmd->add_option("--dir", synth_dir, "dataset directory (default <out>/dataset)");
    synth_cmd->add_option("--file-seconds", file_seconds)->capture_default_str();

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "run the detector chain over a manifest");
    DetectFlags df;
    AnalysisFlags af;
    detect_cmd->add_option("--manifest", df.manifest)->required();
    detect_cmd->add_option("--mode", df.mode, "standalone | console | server")->capture_default_str();
    detect_cmd->add_option("--workers", df.workers, "local worker threads")->capture_default_str();
    detect_cmd->add_option("--channels", df.channels, "channels to analyse (default all)")->delimiter(',');
    detect_cmd->add_option("--t0", df.t0, "job start (ISO 8601)");
    detect_cmd->add_option("--t1", df.t1, "job end (ISO 8601)");
    detect_cmd->add_option("--unit-core", df.unit_core, "seconds owned by each work unit")->capture_default_str();
    detect_cmd->add_option("--overlap", df.overlap, "seconds of padding on each side of a unit")->capture_default_str();
    detect_cmd->add_flag("--single-pass", df.single_pass, "analyse each channel in one piece");
    detect_cmd->add_option("--control", df.control, "console mode: bind address for remote workers");
    detect_cmd->add_option("--server", df.server, "server mode: API address of a running serve");
    detect_cmd->add_option("--client-id", df.client_id, "server mode: X-Client-Id")->capture_default_str();
    detect_cmd->add_option("--timeout-ms", df.timeout_ms, "worker heartbeat timeout")->capture_default_str();
    af.add(detect_cmd);

    // train
    auto* train_cmd = app.add_subcommand("train", "fit the train classifier from labelled feature tables");
    TrainFlags tf;
    train_cmd->add_option("--features", tf.features, "feature tables, labelled by --truth or their label column");
    train_cmd->add_option("--truth", tf.truth, "truth table used to label --features");
    train_cmd->add_option("--signal", tf.signal, "feature tables whose rows are all signal");
    train_cmd->add_option("--noise", tf.noise, "feature tables whose rows are all noise");
    train_cmd->add_option("--seed", tf.seed)->capture_default_str();
    train_cmd->add_option("--iterations", tf.iterations)->capture_default_str();
    train_cmd->add_option("--step", tf.step)->capture_default_str();
    train_cmd->add_option("--min-overlap", tf.min_overlap)->capture_default_str();
    train_cmd->add_flag("--no-bac1000", tf.no_bac1000, "treat possible-minke (Bac_1000) truth as noise");

    // score
    auto* score_cmd = app.add_subcommand("score", "match detections against truth");
    std::string score_events, score_truth;
    store::ScoreOptions so;
    bool score_no_bac = false;
    score_cmd->add_option("--events", score_events)->required();
    score_cmd->add_option("--truth", score_truth)->required();
    score_cmd->add_option("--min-overlap", so.min_overlap_fraction)->capture_default_str();
    score_cmd->add_flag("--no-bac1000", score_no_bac, "do not count possible-minke (Bac_1000) truth as signal");

    // diel
    auto* diel_cmd = app.add_subcommand("diel", "aggregate events into a date x time-of-day grid");
    std::string diel_events, diel_t0, diel_t1, diel_tz, diel_svg;
    int diel_bins = 24;
    bool diel_layered = false;
    diel_cmd->add_option("--events", diel_events)->required();
    diel_cmd->add_option("--t0", diel_t0);
    diel_cmd->add_option("--t1", diel_t1);
    diel_cmd->add_option("--tz", diel_tz, "local offset, +HH:MM");
    diel_cmd->add_option("--bins", diel_bins)->capture_default_str();
    diel_cmd->add_flag("--layered", diel_layered, "one layer per tag");
    diel_cmd->add_option("--svg", diel_svg, "also render an SVG");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "run the head node: client API and worker control channel");
    std::string serve_root, serve_api = "127.0.0.1:8080", serve_control = "127.0.0.1:7070", serve_perms,
                            serve_manifest;
    int serve_timeout = 30000;
    AnalysisFlags serve_af;
    serve_cmd->add_option("--root", serve_root, "storage root (default <out>)");
    serve_cmd->add_option("--api", serve_api)->capture_default_str();
    serve_cmd->add_option("--control", serve_control)->capture_default_str();
    serve_cmd->add_option("--permissions", serve_perms, "permissions JSON; absent means open access");
    serve_cmd->add_option("--manifest", serve_manifest, "manifest for thumbnails of events loaded from storage");
    serve_cmd->add_option("--timeout-ms", serve_timeout)->capture_default_str();
    serve_af.add(serve_cmd);

    // worker
    auto* worker_cmd = app.add_subcommand("worker", "execute units for a head node");
    std::string worker_head;
    net::WorkerOptions wo;
    worker_cmd->add_option("--head", worker_head, "control address of the head")->required();
    worker_cmd->add_option("--name", wo.name)->capture_default_str();
    worker_cmd->add_option("--capacity", wo.capacity)->capture_default_str();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "scaling run: wall time per worker count");
    std::string bench_manifest;
    std::uint64_t bench_seed = 1;
    std::vector<int> bench_counts{1, 2, 4, 8};
    int bench_repeats = 3;
    std::string bench_json;
    AnalysisFlags bench_af;
    bench_cmd->add_option("--manifest", bench_manifest, "dataset (default: synthesize the reference scene)");
    bench_cmd->add_option("--seed", bench_seed, "reference scene seed")->capture_default_str();
    bench_cmd->add_option("--workers", bench_counts, "worker counts")->delimiter(',');
    bench_cmd->add_option("--repeats", bench_repeats)->capture_default_str();
    bench_cmd->add_option("--json", bench_json, "report path (default <out>/bench.json)");
    bench_af.add(bench_cmd);

    add_env_overrides(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << "error\tusage\t" << e.what() << '\n';
        return 2;
    }

    const fs::path out = common.out;
    if (ingest->parsed()) {
        const auto manifest = audio::build_manifest(ingest_root);
        const fs::path dest = ingest_manifest.empty() ? out / "manifest.json" : fs::path(ingest_manifest);
        if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
        manifest.save(dest);
        std::cout << "files\t" << manifest.entries().size() << "\nchannels\t" << manifest.channels().size()
                  << "\nmanifest\t" << dest.string() << '\n';
    } else if (synth_cmd->parsed()) {
        const auto spec = scene_file.empty() ? scenes::preset(preset, synth_seed) : synth::scene_from_json(slurp(scene_file));
        const fs::path dir = synth_dir.empty() ? out / "dataset" : fs::path(synth_dir);
        fs::create_directories(dir);
        const auto m = scenes::materialize(spec, synth_seed, dir, file_seconds);
        std::cout << "files\t" << m.files.size() << "\ntrains\t" << spec.events.size() << "\nmanifest\t"
                  << m.manifest.string() << "\ntruth\t" << m.truth.string() << '\n';
    } else if (detect_cmd->parsed()) {
        return run_detect(common, df, af);
    } else if (train_cmd->parsed()) {
        return run_train(common, tf);
    } else if (score_cmd->parsed()) {
        so.bac1000_as_signal = !score_no_bac;
        const auto report =
            store::match_and_score(store::load_table(score_events), store::GroundTruthTable::load(score_truth), so);
        std::printf("precision %.3f recall %.3f\n", report.precision, report.recall);
        std::printf("tp %zu fp %zu fn %zu\n", report.true_positives, report.false_positives, report.false_negatives);
    } else if (diel_cmd->parsed()) {
        const auto events = store::load_table(diel_events);
        auto span = span_from(diel_t0, diel_t1);
        if (!span) span = diel::begin_extent(events);
        diel::DielGrid grid;
        grid.bins_per_day = diel_bins;
        grid.tz_offset = tz_from(diel_tz);
        if (span) grid = diel::aggregate_diel(events, *span, tz_from(diel_tz), diel_layered, diel_bins);
        spit(out / "diel.json", diel::export_diel(grid));
        if (!diel_svg.empty()) spit(diel_svg, diel::render_svg(grid));
        std::cout << "dates\t" << grid.dates.size() << "\nevents\t" << grid.total() << '\n';
    } else if (serve_cmd->parsed()) {
        const fs::path root = serve_root.empty() ? out : fs::path(serve_root);
        sched::LocalRunOptions opts;
        opts.scheduler.timeout = std::chrono::milliseconds(serve_timeout);
        net::JobService jobs(root, serve_af.build(), opts);
        net::ApiOptions api_opts;
        if (!serve_perms.empty()) api_opts.policy = net::AccessPolicy::load(serve_perms);
        if (!serve_manifest.empty()) {
            api_opts.fallback_manifest =
                std::make_shared<const audio::RecordingManifest>(audio::RecordingManifest::load(serve_manifest));
        }
        net::ControlServer control(net::Endpoint::parse(serve_control), [&jobs] { return jobs.current_head(); });
        net::ApiServer api(jobs, api_opts);
        const auto api_ep = net::Endpoint::parse(serve_api);
        const int api_port = api.start(api_ep.host, api_ep.port);
        std::cout << "api\t" << api_ep.host << ':' << api_port << "\ncontrol\t" << control.port() << std::endl;
        std::signal(SIGINT, [](int) { g_stop = true; });
        std::signal(SIGTERM, [](int) { g_stop = true; });
        while (!g_stop) {
            std::this_thread::sleep_for(std::chrono::milliseconds(200));
        }
        api.stop();
        control.stop();
        jobs.shutdown();
    } else if (worker_cmd->parsed()) {
        net::WorkerClient client(net::Endpoint::parse(worker_head), wo);
        client.run();
        std::cout << "units\t" << client.units_completed() << '\n';
    } else if (bench_cmd->parsed()) {
        fs::path manifest = bench_manifest;
        if (manifest.empty()) {
            const fs::path dir = out / "bench-dataset";
            if (!fs::exists(dir / "manifest.json")) {
                fs::create_directories(dir);
                scenes::materialize(scenes::reference_scene(bench_seed), bench_seed, dir);
            }
            manifest = dir / "manifest.json";
        }
        auto job = sched::make_job(manifest, {}, bench_af.build());
        job.manifest_path = fs::absolute(manifest);
        bench::Options bo;
        bo.repeats = bench_repeats;
        const auto report = bench::run_scaling(job, bench_counts, bo);
        spit(bench_json.empty() ? out / "bench.json" : fs::path(bench_json), report.to_json() + "\n");
        std::cout << report.table();
        if (report.failed) {
            std::cerr << "error\tjob_failed\t" << report.failure << '\n';
            return 1;
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return main_impl(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error\t" << to_string(e.code()) << '\t' << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error\tinternal\t" << e.what() << '\n';
        return 1;
    }
}
