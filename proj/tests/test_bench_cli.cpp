// SPDX-License-Identifier: Apache-2.0
#include "cli_runner.hpp"

#include "trainscan/bench.hpp"
#include "trainscan/scenes.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>

using namespace trainscan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("trainscan-cli-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const scenes::Materialized& dataset() {
    static const auto m = scenes::materialize(scenes::chunking_scene(5, 900.0, 300.0), 3, scratch("data"), 300.0);
    return m;
}

using cli_runner::slurp;

cli_runner::Run cli(const std::string& args, const std::string& env = "") { return cli_runner::run(args, env); }

} // namespace

TEST(Bench, ReportArithmetic) {
    const auto job = sched::make_job(dataset().manifest, {}, {}, {30.0, 60.0});
    bench::Options opts;
    opts.repeats = 2;
    const auto report = bench::run_scaling(job, {3, 2}, opts);
    ASSERT_EQ(report.rows.size(), 3u);
    EXPECT_FALSE(report.failed) << report.failure;
    EXPECT_EQ(report.rows[0].n_workers, 1);
    EXPECT_EQ(report.rows[2].n_workers, 3);
    for (const auto& row : report.rows) {
        EXPECT_EQ(row.runs_s.size(), 2u);
        EXPECT_NEAR(row.speedup * row.wall_s, report.rows[0].wall_s, 1e-12);
        EXPECT_NEAR(row.efficiency, row.speedup / row.n_workers, 1e-12);
        EXPECT_EQ(row.table_digest, report.rows[0].table_digest);
        EXPECT_EQ(row.event_count, report.rows[0].event_count);
    }
    EXPECT_DOUBLE_EQ(report.rows[0].speedup, 1.0);
    EXPECT_NEAR(report.dataset_s, 900.0, 1e-9);
    const auto j = nlohmann::json::parse(report.to_json());
    EXPECT_EQ(j["status"], "ok");
    EXPECT_EQ(j["rows"].size(), 3u);
    EXPECT_NE(report.table().find("speedup"), std::string::npos);

    EXPECT_EQ(bench::run_scaling(job, {1}, {1, false, {}}).rows.size(), 1u);
}

TEST(Cli, WorkerCountDoesNotChangeTheTables) {
    const auto a = scratch("w1"), b = scratch("w4");
    const auto m = dataset().manifest.string();
    ASSERT_EQ(cli("--out " + a.string() + " detect --manifest " + m + " --workers 1 --unit-core 45").status, 0);
    const auto r = cli("--out " + b.string() + " detect --manifest " + m + " --workers 4 --unit-core 45");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_EQ(slurp(a / "events.tsv"), slurp(b / "events.tsv"));
    EXPECT_EQ(slurp(a / "features.tsv"), slurp(b / "features.tsv"));
    EXPECT_TRUE(fs::exists(b / "logs" / "detect.log"));
    const auto c = scratch("single");
    ASSERT_EQ(cli("--out " + c.string() + " detect --single-pass --manifest " + m).status, 0);
    EXPECT_EQ(slurp(a / "events.tsv"), slurp(c / "events.tsv"));
}

TEST(Cli, ScoringTruthAgainstItselfIsPerfect) {
    const auto dir = scratch("score");
    const auto truth = store::GroundTruthTable::load(dataset().truth);
    std::vector<store::EventRecord> events;
    for (const auto& t : store::signal_truth(truth, {})) {
        store::EventRecord e;
        e.event_id = events.size() + 1;
        e.channel = t.channel;
        e.begin_utc = t.begin_utc;
        e.end_utc = t.end_utc;
        e.detector_id = "truth";
        e.config_hash = "0";
        events.push_back(e);
    }
    ASSERT_FALSE(events.empty());
    store::save_table(dir / "events.tsv", events);
    const auto r = cli("score --events " + (dir / "events.tsv").string() + " --truth " + dataset().truth.string());
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("precision 1.000 recall 1.000"), std::string::npos) << r.out;
}

TEST(Cli, TrainingIsReproducible) {
    const auto det = scratch("train-detect");
    ASSERT_EQ(cli("--out " + det.string() + " detect --manifest " + dataset().manifest.string()).status, 0);
    const std::string args = " train --features " + (det / "features.tsv").string() + " --truth " +
                             dataset().truth.string() + " --seed 4";
    const auto a = scratch("train-a"), b = scratch("train-b");
    const auto ra = cli("--out " + a.string() + args);
    ASSERT_EQ(ra.status, 0) << ra.out;
    ASSERT_EQ(cli("--out " + b.string() + args).status, 0);
    EXPECT_FALSE(slurp(a / "model.json").empty());
    EXPECT_EQ(slurp(a / "model.json"), slurp(b / "model.json"));
}

TEST(Cli, EnvironmentOverridesAndErrorLines) {
    const auto out = scratch("env");
    const auto r = cli("ingest --root " + dataset().manifest.parent_path().string(), "TRAINSCAN_OUT=" + out.string());
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_TRUE(fs::exists(out / "manifest.json"));

    const auto missing = cli("score --events /no/such.tsv --truth /no/such.tsv");
    EXPECT_EQ(missing.status, 1);
    EXPECT_EQ(missing.out.rfind("error\tio\t", 0), 0u) << missing.out;
    const auto usage = cli("detect");
    EXPECT_EQ(usage.status, 2);
    EXPECT_NE(usage.out.find("error\tusage\t"), std::string::npos) << usage.out;
    const auto bad = cli("detect --manifest " + dataset().manifest.string() + " --overlap 5 --out " + out.string());
    EXPECT_EQ(bad.status, 1);
    EXPECT_NE(bad.out.find("error\tinvalid_argument\t"), std::string::npos) << bad.out;
}
