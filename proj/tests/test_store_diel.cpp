// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include "trainscan/diel.hpp"
#include "trainscan/error.hpp"
#include "trainscan/eventstore.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace trainscan;
using namespace std::chrono_literals;

namespace {

const UtcTime kT0 = parse_iso8601_or_throw("2008-09-17T00:00:00Z");

store::EventRecord random_record(std::mt19937_64& rng, std::uint64_t id) {
    std::uniform_int_distribution<std::int64_t> us(0, 86'400'000'000LL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    store::EventRecord e;
    e.event_id = id;
    e.channel = static_cast<int>(rng() % 4);
    e.begin_s = Micros{us(rng)};
    e.end_s = e.begin_s + Micros{1 + us(rng) % 30'000'000};
    e.begin_utc = kT0 + e.begin_s;
    e.end_utc = kT0 + e.end_s;
    // Awkward doubles: subnormal-ish, huge, long fractions.
    e.f_lo_hz = u(rng) * 1000.0 / 3.0;
    e.f_hi_hz = e.f_lo_hz + std::ldexp(u(rng), static_cast<int>(rng() % 40) - 20);
    e.n_pulses = static_cast<int>(rng() % 500);
    e.score = u(rng);
    e.detector_id = "pulse-train/v1";
    e.config_hash = "0123abcd";
    if (rng() % 3) e.tag = std::string(store::kTagVocabulary[rng() % store::kTagVocabulary.size()].code);
    if (e.tag) e.annotator = (rng() % 2) ? "anne\twith\\tab" : "bob\nsmith";
    for (std::size_t k = rng() % 3; k > 0; --k) e.sources.push_back("ch" + std::to_string(k) + "_20080917.wav");
    return e;
}

} // namespace

TEST(EventTable, ThousandRecordRoundTrip) {
    std::mt19937_64 rng(11);
    std::vector<store::EventRecord> events;
    for (std::uint64_t i = 1; i <= 1000; ++i) events.push_back(random_record(rng, i));
    const auto text = store::write_table(events);
    const auto back = store::read_table_string(text);
    ASSERT_EQ(back.size(), events.size());
    for (std::size_t i = 0; i < events.size(); ++i) ASSERT_EQ(back[i], events[i]) << "row " << i;
    EXPECT_EQ(store::write_table(back), text);
}

TEST(EventTable, HeaderAndEscapes) {
    const auto text = store::write_table({});
    std::string header;
    for (auto c : store::kEventColumns) header += (header.empty() ? "" : "\t") + std::string(c);
    EXPECT_EQ(text, header + "\n");
    EXPECT_EQ(store::escape_cell("a\tb\nc\\d"), "a\\tb\\nc\\\\d");
    EXPECT_EQ(store::unescape_cell(store::escape_cell("a\tb\nc\\d\\")), "a\tb\nc\\d\\");
}

TEST(EventTable, ErrorsNameTheLine) {
    std::mt19937_64 rng(3);
    std::vector<store::EventRecord> events{random_record(rng, 1), random_record(rng, 2), random_record(rng, 3)};
    auto text = store::write_table(events);
    // corrupt the third data row (line 4)
    auto pos = text.find('\n');
    for (int i = 0; i < 2; ++i) pos = text.find('\n', pos + 1);
    text.insert(pos + 1, "x");
    try {
        store::read_table_string(text);
        FAIL() << "accepted a bad row";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::format);
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    events[1].tag = "Whale_9";
    EXPECT_THROW(store::read_table_string(store::write_table(events)), Error);
}

TEST(Vocabulary, CodesAndClasses) {
    EXPECT_EQ(store::find_tag("Mel_1000")->description, "Haddock");
    EXPECT_EQ(store::find_tag("Bac_3100")->description, "Definite minke whale");
    EXPECT_FALSE(store::find_tag("bac_3100"));
    EXPECT_TRUE(store::is_noise_tag("Ano_3100"));
    EXPECT_TRUE(store::is_noise_tag("Hdd_3100"));
    EXPECT_FALSE(store::is_noise_tag("Bac_1000"));
    EXPECT_EQ(store::tag_order("Unid_1000"), 10u);
    EXPECT_EQ(store::tag_order("nope"), store::kTagVocabulary.size());
}

TEST(Store, TaggingIsJournalledAndPersisted) {
    const auto dir = std::filesystem::temp_directory_path() / "trainscan-store-test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(4);
    {
        store::EventStore s(dir / "events.tsv", dir / "journal.tsv");
        std::vector<store::EventRecord> batch;
        for (int i = 0; i < 5; ++i) batch.push_back(random_record(rng, 99));
        s.append(batch);
        s.append(batch);
        const auto snap = s.snapshot();
        ASSERT_EQ(snap->size(), 10u);
        for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ((*snap)[i].event_id, i + 1);

        const auto before = s.snapshot();
        s.set_tag(3, "Bac_3100", "ann", kT0);
        s.set_tag(3, "Mel_1000", "bob", kT0 + 1s);
        EXPECT_EQ(*s.get(3)->tag, "Mel_1000");
        EXPECT_EQ(s.get(3)->annotator, "bob");
        EXPECT_NE((*before)[2].tag, std::optional<std::string>("Mel_1000")); // old snapshot unchanged
        EXPECT_THROW(s.set_tag(3, "Whale", "x"), Error);
        EXPECT_THROW(s.set_tag(404, "Bac_3100", "x"), Error);
        EXPECT_EQ(*s.get(3)->tag, "Mel_1000");
        const auto j = s.journal();
        ASSERT_EQ(j.size(), 2u);
        EXPECT_EQ(j[1].previous, std::optional<std::string>("Bac_3100"));
    }
    store::EventStore reopened(dir / "events.tsv", dir / "journal.tsv");
    EXPECT_EQ(reopened.snapshot()->size(), 10u);
    EXPECT_EQ(*reopened.get(3)->tag, "Mel_1000");
    EXPECT_EQ(reopened.journal().size(), 2u);
    std::filesystem::remove_all(dir);
}

TEST(Scoring, MatchingIsMaximal) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        auto draw = [&](std::size_t n) {
            std::vector<store::Interval> v;
            for (std::size_t i = 0; i < n; ++i) {
                const std::int64_t b = static_cast<std::int64_t>(rng() % 20);
                v.push_back({static_cast<int>(rng() % 2), Micros{b}, Micros{b + 1 + static_cast<std::int64_t>(rng() % 6)},
                             static_cast<double>(rng() % 100) / 100.0});
            }
            return v;
        };
        const auto det = draw(rng() % 8);
        const auto tru = draw(rng() % 8);
        for (double fraction : {0.0001, 0.5, 1.0}) {
            const auto r = store::match_intervals(det, tru, fraction);
            ASSERT_EQ(r.true_positives, oracle::max_matching(det, tru, fraction)) << trial;
            EXPECT_EQ(r.true_positives + r.false_positives, det.size());
            EXPECT_EQ(r.true_positives + r.false_negatives, tru.size());
            std::vector<int> seen(tru.size());
            for (const auto& m : r.matches) {
                EXPECT_TRUE(store::intervals_match(det[m.detection], tru[m.truth], fraction));
                EXPECT_EQ(++seen[m.truth], 1);
            }
        }
    }
}

TEST(Scoring, NoiseTruthIsNotSignal) {
    std::vector<store::TruthEvent> rows;
    for (auto label : {"Bac_3100", "Ano_3100", "Hdd_3100", "Bac_1000", "signal"}) {
        rows.push_back({1, kT0, kT0 + 1s, 0, 0, label});
    }
    const store::GroundTruthTable t(rows);
    EXPECT_EQ(store::signal_truth(t, {}).size(), 3u);
    EXPECT_EQ(store::signal_truth(t, {0.5, false}).size(), 2u);
    std::stringstream ss;
    t.write(ss);
    EXPECT_EQ(store::GroundTruthTable::read(ss).events(), t.events());
}

// ---------------------------------------------------------------------------

namespace {

std::vector<store::EventRecord> nocturnal(std::size_t days, std::mt19937_64& rng) {
    std::vector<store::EventRecord> out;
    for (std::size_t d = 0; d < days; ++d) {
        for (int k = 0; k < 40; ++k) {
            store::EventRecord e = random_record(rng, out.size() + 1);
            // 20:00 .. 04:00 local
            const auto sec = (20 * 3600 + static_cast<std::int64_t>(rng() % (8 * 3600))) % 86400;
            e.begin_utc = kT0 + std::chrono::days(d) + std::chrono::seconds(sec);
            e.end_utc = e.begin_utc + 2s;
            out.push_back(e);
        }
    }
    return out;
}

} // namespace

TEST(Diel, NocturnalCallingLeavesDaytimeEmpty) {
    std::mt19937_64 rng(8);
    const auto events = nocturnal(6, rng);
    const auto span = TimeSpan::make(kT0, kT0 + std::chrono::days(6));
    const auto g = diel::aggregate_diel(events, span, Micros{0}, false);
    ASSERT_EQ(g.dates.size(), 6u);
    EXPECT_EQ(diel::format_date(g.dates[0]), "2008-09-17");
    for (std::size_t d = 0; d < g.dates.size(); ++d) {
        for (int h = 4; h < 20; ++h) EXPECT_EQ(g.at(d, h), 0) << d << " " << h;
    }
    EXPECT_EQ(g.total(), static_cast<std::int64_t>(events.size()));

    // A -4 h zone shifts the activity window to 16:00 .. 24:00 local.
    const auto shifted = diel::aggregate_diel(events, span, -std::chrono::hours(4), false);
    EXPECT_EQ(shifted.dates.size(), 7u);
    for (std::size_t d = 0; d < shifted.dates.size(); ++d) {
        for (int h = 0; h < 16; ++h) EXPECT_EQ(shifted.at(d, h), 0);
    }
    EXPECT_EQ(shifted.total(), static_cast<std::int64_t>(events.size()));
}

TEST(Diel, LayersConserveCounts) {
    std::mt19937_64 rng(9);
    const auto events = nocturnal(3, rng);
    const auto span = TimeSpan::make(kT0, kT0 + std::chrono::days(3));
    for (int bins : {24, 48, 96, 1}) {
        const auto g = diel::aggregate_diel(events, span, Micros{0}, true, bins);
        std::vector<std::int64_t> sum(g.counts.size(), 0);
        std::set<std::string> names;
        for (const auto& e : events) names.insert(e.tag ? *e.tag : diel::kUntagged);
        ASSERT_EQ(g.layers.size(), names.size());
        for (const auto& l : g.layers) {
            EXPECT_TRUE(names.count(l.name));
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += l.counts[i];
        }
        EXPECT_EQ(sum, g.counts);
        EXPECT_EQ(g.layers.back().name, diel::kUntagged);
        EXPECT_EQ(diel::import_diel(diel::export_diel(g)), g);

        const auto svg = diel::render_svg(g);
        std::size_t entries = 0;
        for (auto p = svg.find("class=\"legend-"); p != std::string::npos; p = svg.find("class=\"legend-", p + 1)) ++entries;
        EXPECT_EQ(entries, names.size());
    }
}

TEST(Diel, Validation) {
    std::mt19937_64 rng(10);
    const auto events = nocturnal(2, rng);
    const auto span = TimeSpan::make(kT0, kT0 + std::chrono::days(1));
    EXPECT_THROW(diel::aggregate_diel(events, span, Micros{0}, false), Error);
    const auto full = TimeSpan::make(kT0, kT0 + std::chrono::days(2));
    EXPECT_THROW(diel::aggregate_diel(events, full, Micros{0}, false, 7), Error);
    EXPECT_NO_THROW(diel::aggregate_diel({}, full, Micros{0}, false, 7200));
    EXPECT_EQ(diel::ramp_index(0, 10), 0u);
    EXPECT_EQ(diel::ramp_index(10, 10), diel::kRamp.size() - 1);
    EXPECT_GT(diel::ramp_index(1, 10), 0u);
    const auto ext = diel::begin_extent(events);
    ASSERT_TRUE(ext);
    EXPECT_TRUE(ext->contains(events.back().begin_utc));
}
