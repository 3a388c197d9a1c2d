// SPDX-License-Identifier: Apache-2.0
#include "trainscan/audio.hpp"
#include "trainscan/error.hpp"
#include "trainscan/synth.hpp"
#include "trainscan/time.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

using namespace trainscan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("trainscan_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string bytes_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

audio::AudioClip noise_clip(std::size_t n, int rate, UtcTime start, int channel, std::uint64_t seed) {
    audio::AudioClip c;
    c.sample_rate_hz = rate;
    c.start_utc = start;
    c.channel_id = channel;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(-20000, 20000);
    for (std::size_t i = 0; i < n; ++i) {
        c.samples.push_back(static_cast<float>(d(rng)) / 32768.0f);
    }
    return c;
}

} // namespace

TEST(Time, IsoFormsParseToTheSameInstant) {
    const auto a = parse_iso8601("2008-09-17T13:05:00Z");
    const auto b = parse_iso8601("20080917T130500Z");
    const auto c = parse_iso8601("2008-09-17T13:05:00.000000");
    ASSERT_TRUE(a && b && c);
    EXPECT_EQ(*a, *b);
    EXPECT_EQ(*a, *c);
    EXPECT_EQ(format_iso8601(*a), "2008-09-17T13:05:00Z");
    EXPECT_FALSE(parse_iso8601("2008-13-17T13:05:00Z"));
    EXPECT_FALSE(parse_iso8601("yesterday"));
    EXPECT_THROW(parse_iso8601_or_throw("nope"), Error);
}

TEST(Time, FractionalSecondsRoundTrip) {
    const auto t = parse_iso8601_or_throw("2008-09-17T00:00:01.250001Z");
    EXPECT_EQ(format_iso8601(t), "2008-09-17T00:00:01.250001Z");
    EXPECT_EQ(format_seconds6(Micros{1250001}), "1.250001");
    EXPECT_EQ(parse_seconds6("1.250001"), Micros{1250001});
    EXPECT_EQ(format_seconds6(Micros{-5}), "-0.000005");
}

TEST(Time, SampleGrid) {
    const int rate = 2000;
    const UtcTime t0{};
    EXPECT_EQ(sample_index_at_or_after(t0, rate), 0);
    EXPECT_EQ(sample_index_at_or_after(t0 + Micros{1}, rate), 1);
    EXPECT_EQ(sample_index_at_or_after(t0 + Micros{500}, rate), 1);
    EXPECT_EQ(sample_index_at_or_after(t0 + Micros{501}, rate), 2);
    for (std::int64_t k : {0LL, 1LL, 7LL, 1234567LL}) {
        EXPECT_EQ(sample_index_at_or_after(sample_time(k, rate), rate), k);
    }
    // A rate that does not divide a second evenly.
    for (std::int64_t k = 0; k < 100; ++k) {
        EXPECT_EQ(sample_index_at_or_after(sample_time(k, 3), 3), k);
    }
}

TEST(Time, SpanRules) {
    const UtcTime a{Micros{0}}, b{Micros{10}};
    EXPECT_THROW(TimeSpan::make(b, a), Error);
    EXPECT_THROW(TimeSpan::make(a, a), Error);
    const auto s = TimeSpan::make(a, b);
    EXPECT_TRUE(s.contains(a));
    EXPECT_FALSE(s.contains(b));
    EXPECT_FALSE(s.intersects(TimeSpan::make(b, b + Micros{1})));
}

TEST(Audio, FileNameConvention) {
    const auto start = parse_iso8601_or_throw("2008-09-17T13:05:00Z");
    const auto name = audio::make_file_name("NOPP6", 3, start);
    const auto info = audio::parse_file_name(name);
    ASSERT_TRUE(info);
    EXPECT_EQ(info->station, "NOPP6");
    EXPECT_EQ(info->channel_id, 3);
    EXPECT_EQ(info->start_utc, start);
    EXPECT_FALSE(audio::parse_file_name("random.wav"));
}

TEST(Audio, WavRoundTripKeepsPcmBytes) {
    const auto dir = scratch("wav");
    const auto clip = noise_clip(5000, 2000, parse_iso8601_or_throw("2008-09-17T00:00:00Z"), 0, 3);
    const auto first = dir / audio::make_file_name("SYN", 0, clip.start_utc);
    audio::write_wav(first, clip);
    const auto back = audio::read_wav(first);
    EXPECT_EQ(back.sample_rate_hz, 2000);
    EXPECT_EQ(back.start_utc, clip.start_utc);
    ASSERT_EQ(back.samples.size(), clip.samples.size());
    const auto second = dir / "copy.wav";
    audio::write_wav(second, back);
    const auto a = bytes_of(first), b = bytes_of(second);
    const auto info = audio::read_wav_info(first);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.substr(info.data_offset), b.substr(info.data_offset));
}

TEST(Audio, Float32AndPartialReads) {
    const auto dir = scratch("wavf");
    auto clip = noise_clip(4000, 2000, UtcTime{}, 0, 5);
    audio::write_wav(dir / "f.wav", clip, audio::SampleFormat::float32);
    const auto info = audio::read_wav_info(dir / "f.wav");
    EXPECT_EQ(info.format, audio::SampleFormat::float32);
    EXPECT_EQ(info.frames, 4000);
    const auto part = audio::read_wav_frames(dir / "f.wav", 1000, 10);
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(part[i], clip.samples[1000 + i]);
    }
}

TEST(Audio, RejectsGarbage) {
    const auto dir = scratch("bad");
    std::ofstream(dir / "x.wav") << "not a wave file";
    EXPECT_THROW(audio::read_wav(dir / "x.wav"), Error);
    EXPECT_THROW(audio::read_wav(dir / "missing.wav"), Error);
}

TEST(Audio, StitchedSpanEqualsSliceOfConcatenation) {
    const auto dir = scratch("stitch");
    const int rate = 2000;
    const auto start = parse_iso8601_or_throw("2008-09-17T00:00:00Z");
    // Three abutting files cut from one stream.
    const auto whole = noise_clip(3 * 6000, rate, start, 2, 9);
    for (int f = 0; f < 3; ++f) {
        audio::AudioClip part = whole;
        part.samples.assign(whole.samples.begin() + f * 6000, whole.samples.begin() + (f + 1) * 6000);
        part.start_utc = sample_time(sample_index_at_or_after(start, rate) + f * 6000, rate);
        audio::write_wav(dir / audio::make_file_name("SYN", 2, part.start_utc), part);
    }
    const auto manifest = audio::build_manifest(dir);
    ASSERT_EQ(manifest.entries().size(), 3u);
    const std::int64_t k0 = sample_index_at_or_after(start, rate);
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::int64_t first = std::uniform_int_distribution<std::int64_t>(0, 17000)(rng);
        const std::int64_t count = std::uniform_int_distribution<std::int64_t>(1, 18000 - first)(rng);
        const auto ex = audio::extract_samples(manifest, 2, k0 + first, count);
        ASSERT_EQ(static_cast<std::int64_t>(ex.clip.samples.size()), count);
        // pcm16 quantization is the only difference from the float source
        for (std::int64_t i = 0; i < count; ++i) {
            ASSERT_NEAR(ex.clip.samples[i], whole.samples[first + i], 1.0 / 32768.0);
        }
        EXPECT_TRUE(ex.gaps.empty());
    }
}

TEST(Audio, GapsAreZeroFilledAndReported) {
    const auto dir = scratch("gaps");
    const int rate = 2000;
    const auto start = parse_iso8601_or_throw("2008-09-17T00:00:00Z");
    auto a = noise_clip(2000, rate, start, 0, 1);
    auto b = noise_clip(2000, rate, start + std::chrono::seconds(3), 0, 2);
    audio::write_wav(dir / audio::make_file_name("SYN", 0, a.start_utc), a);
    audio::write_wav(dir / audio::make_file_name("SYN", 0, b.start_utc), b);
    const auto m = audio::build_manifest(dir);
    const auto ex = audio::extract_span(m, 0, TimeSpan::make(start, start + std::chrono::seconds(4)));
    ASSERT_EQ(ex.clip.samples.size(), 8000u);
    ASSERT_EQ(ex.gaps.size(), 1u);
    EXPECT_EQ(ex.gaps[0].t0, start + std::chrono::seconds(1));
    EXPECT_EQ(ex.gaps[0].t1, start + std::chrono::seconds(3));
    for (std::size_t i = 2000; i < 6000; ++i) {
        ASSERT_EQ(ex.clip.samples[i], 0.0f);
    }
    EXPECT_EQ(ex.sources.size(), 2u);
    EXPECT_THROW(audio::extract_span(m, 0, TimeSpan::make(start + std::chrono::seconds(10), start + std::chrono::seconds(11))),
                 Error);
    EXPECT_THROW(audio::extract_span(m, 5, TimeSpan::make(start, start + std::chrono::seconds(1))), Error);
}

TEST(Audio, OverlappingFilesAreRejectedNamingBoth) {
    const auto start = parse_iso8601_or_throw("2008-09-17T00:00:00Z");
    audio::ManifestEntry a{"a.wav", "S", 0, start, 4000, 2000, 0};
    audio::ManifestEntry b{"b.wav", "S", 0, start + std::chrono::seconds(1), 4000, 2000, 0};
    try {
        audio::RecordingManifest m({a, b});
        FAIL() << "overlap accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::overlap);
        EXPECT_NE(std::string(e.what()).find("a.wav"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("b.wav"), std::string::npos);
    }
    audio::ManifestEntry c{"c.wav", "S", 0, start + std::chrono::seconds(2), 4000, 1000, 0};
    EXPECT_THROW(audio::RecordingManifest({a, c}), Error);
}

TEST(Audio, ManifestJsonRoundTrip) {
    const auto start = parse_iso8601_or_throw("2008-09-17T00:00:00Z");
    audio::RecordingManifest m({{"a.wav", "S", 0, start, 4000, 2000, 0}, {"b.wav", "S", 1, start, 4000, 2000, 1}});
    const auto back = audio::RecordingManifest::from_json(m.to_json());
    EXPECT_EQ(back.to_json(), m.to_json());
    EXPECT_EQ(back.channels(), (std::vector<int>{0, 1}));
    EXPECT_EQ(back.channel_extent(1).duration_s(), 2.0);
}

TEST(Synth, TwelvePulseTrainTruth) {
    synth::SceneSpec spec;
    spec.duration_s = 30;
    spec.noise = {synth::NoiseKind::white, 0.01};
    synth::EventSpec ev;
    ev.t_start_s = 5.0;
    ev.n_pulses = 12;
    ev.ipi_s = 0.5;
    ev.pulse_duration_s = 0.2;
    spec.events.push_back(ev);
    const auto scene = synth::synth_generate(spec, 1);
    ASSERT_EQ(scene.truth.size(), 1u);
    const auto& t = scene.truth[0];
    EXPECT_EQ(t.pulses.size(), 12u);
    EXPECT_NEAR(t.end_s - t.begin_s, 11 * 0.5 + 0.2, 1.0 / 2000);
    EXPECT_EQ(scene.clip.sample_rate_hz, 2000);
}

TEST(Synth, DeterministicAndRejectsImpossibleLevels) {
    synth::SceneSpec spec;
    spec.duration_s = 10;
    spec.noise = {synth::NoiseKind::white, 0.01};
    synth::EventSpec ev;
    ev.t_start_s = 1;
    ev.n_pulses = 3;
    spec.events.push_back(ev);
    EXPECT_EQ(synth::synth_generate(spec, 4).clip.samples, synth::synth_generate(spec, 4).clip.samples);
    EXPECT_NE(synth::synth_generate(spec, 4).clip.samples, synth::synth_generate(spec, 5).clip.samples);
    spec.noise.kind = synth::NoiseKind::none;
    EXPECT_THROW(synth::synth_generate(spec, 1), Error);
    spec.noise.kind = synth::NoiseKind::white;
    spec.events[0].t_start_s = 9.5;
    EXPECT_THROW(synth::synth_generate(spec, 1), Error);
    EXPECT_EQ(synth::scene_to_json(synth::scene_from_json(synth::scene_to_json(spec))), synth::scene_to_json(spec));
}
