// SPDX-License-Identifier: Apache-2.0
#include "trainscan/template_match.hpp"

#include "trainscan/error.hpp"
#include "trainscan/fft.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>

namespace trainscan::detect {

using nlohmann::json;

TemplateModel make_template(std::string name, double f_lo_hz, double f_hi_hz, std::size_t frames,
                            std::size_t bins, std::vector<double> raw) {
    if (frames == 0 || bins == 0 || raw.size() != frames * bins) {
        throw Error(ErrorCode::invalid_argument, "template patch must be a nonempty frames x bins matrix");
    }
    double mean = 0.0;
    for (double v : raw) {
        mean += v;
    }
    mean /= static_cast<double>(raw.size());
    double ss = 0.0;
    for (auto& v : raw) {
        v -= mean;
        ss += v * v;
    }
    if (!(ss > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "template patch has zero variance");
    }
    const double norm = std::sqrt(ss);
    for (auto& v : raw) {
        v /= norm;
    }
    TemplateModel tpl;
    tpl.name = std::move(name);
    tpl.f_lo_hz = f_lo_hz;
    tpl.f_hi_hz = f_hi_hz;
    tpl.frames = frames;
    tpl.bins = bins;
    tpl.patch = std::move(raw);
    return tpl;
}

TemplateModel cut_template(const dsp::Spectrogram& spec, std::size_t first, std::size_t n, double f_lo_hz,
                           double f_hi_hz, std::string name) {
    const std::size_t b0 = spec.bin_of(f_lo_hz);
    const std::size_t b1 = spec.bin_of(f_hi_hz);
    if (n == 0 || first + n > spec.frames || b1 < b0) {
        throw Error(ErrorCode::out_of_range, "template cut lies outside the spectrogram");
    }
    const std::size_t bins = b1 - b0 + 1;
    std::vector<double> raw(n * bins);
    for (std::size_t f = 0; f < n; ++f) {
        for (std::size_t b = 0; b < bins; ++b) {
            raw[f * bins + b] = spec.at(first + f, b0 + b);
        }
    }
    return make_template(std::move(name), f_lo_hz, f_hi_hz, n, bins, std::move(raw));
}

std::size_t template_first_bin(const dsp::Spectrogram& spec, const TemplateModel& tpl) {
    const std::size_t b0 = spec.bin_of(tpl.f_lo_hz);
    if (tpl.f_lo_hz < 0.0 || tpl.f_hi_hz > spec.params.sample_rate_hz / 2.0 * (1.0 + 1e-12) || b0 + tpl.bins > spec.bins ||
        spec.bin_of(tpl.f_hi_hz) != b0 + tpl.bins - 1) {
        throw Error(ErrorCode::out_of_range, "template band does not fit the spectrogram");
    }
    return b0;
}

std::vector<double> correlation_scores(const dsp::Spectrogram& spec, const TemplateModel& tpl) {
    if (tpl.frames > spec.frames) {
        throw Error(ErrorCode::invalid_argument, "template is longer than the spectrogram");
    }
    const std::size_t b0 = template_first_bin(spec, tpl);
    const std::size_t F = spec.frames;
    const std::size_t m = tpl.frames;
    const std::size_t offsets = F - m + 1;
    const std::size_t L = dsp::next_power_of_two(F + m);

    dsp::RealFft fft(L);
    const std::size_t nb = L / 2 + 1;
    std::vector<std::complex<double>> acc(nb, {0.0, 0.0});
    std::vector<std::complex<double>> tspec(nb);
    for (std::size_t b = 0; b < tpl.bins; ++b) {
        auto in = fft.real();
        std::fill(in.begin(), in.end(), 0.0);
        for (std::size_t k = 0; k < m; ++k) {
            in[k] = tpl.at(k, b);
        }
        fft.forward();
        std::copy(fft.spectrum().begin(), fft.spectrum().end(), tspec.begin());
        std::fill(in.begin(), in.end(), 0.0);
        for (std::size_t f = 0; f < F; ++f) {
            in[f] = spec.at(f, b0 + b);
        }
        fft.forward();
        const auto xs = fft.spectrum();
        for (std::size_t k = 0; k < nb; ++k) {
            acc[k] += xs[k] * std::conj(tspec[k]);
        }
    }
    std::copy(acc.begin(), acc.end(), fft.spectrum().begin());
    fft.inverse();
    const auto corr = fft.real();

    // window statistics from prefix sums of per-frame band sums
    std::vector<long double> s1(F + 1, 0.0L);
    std::vector<long double> s2(F + 1, 0.0L);
    for (std::size_t f = 0; f < F; ++f) {
        long double a = 0.0L;
        long double q = 0.0L;
        for (std::size_t b = 0; b < tpl.bins; ++b) {
            const long double v = spec.at(f, b0 + b);
            a += v;
            q += v * v;
        }
        s1[f + 1] = s1[f] + a;
        s2[f + 1] = s2[f] + q;
    }
    const long double n = static_cast<long double>(m * tpl.bins);
    std::vector<double> scores(offsets, 0.0);
    for (std::size_t g = 0; g < offsets; ++g) {
        const long double sum = s1[g + m] - s1[g];
        const long double energy = s2[g + m] - s2[g];
        const long double var_sum = energy - sum * sum / n;
        if (!(energy > 0.0L) || var_sum <= kZeroVarianceFraction * energy) {
            continue;
        }
        const double num = corr[g] / static_cast<double>(L);
        scores[g] = std::clamp(num / std::sqrt(static_cast<double>(var_sum)), -1.0, 1.0);
    }
    return scores;
}

std::vector<std::size_t> pick_peaks(const std::vector<double>& scores, std::size_t radius, double threshold) {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < scores.size(); ++g) {
        if (!(scores[g] >= threshold)) {
            continue;
        }
        const std::size_t lo = g >= radius ? g - radius : 0;
        const std::size_t hi = std::min(scores.size() - 1, g + radius);
        bool is_max = true;
        for (std::size_t j = lo; j <= hi && is_max; ++j) {
            if (j < g) {
                is_max = scores[j] < scores[g];
            } else if (j > g) {
                is_max = scores[j] <= scores[g];
            }
        }
        if (is_max) {
            out.push_back(g);
        }
    }
    return out;
}

std::vector<TemplateDetection> correlate_template(const dsp::Spectrogram& spec, const TemplateModel& tpl,
                                                  double threshold) {
    const std::vector<double> scores = correlation_scores(spec, tpl);
    std::vector<TemplateDetection> out;
    for (std::size_t g : pick_peaks(scores, tpl.frames, threshold)) {
        out.push_back({g, spec.frame_times_s[g], scores[g]});
    }
    return out;
}

std::string TemplateModel::to_json() const {
    json j;
    j["format"] = "trainscan.template";
    j["version"] = 1;
    j["name"] = name;
    j["f_lo_hz"] = f_lo_hz;
    j["f_hi_hz"] = f_hi_hz;
    j["frames"] = frames;
    j["bins"] = bins;
    j["patch"] = patch;
    return j.dump(2) + "\n";
}

TemplateModel TemplateModel::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != "trainscan.template" || j.at("version").get<int>() != 1) {
            throw Error(ErrorCode::format, "template: unsupported format or version");
        }
        TemplateModel t;
        t.name = j.at("name").get<std::string>();
        t.f_lo_hz = j.at("f_lo_hz").get<double>();
        t.f_hi_hz = j.at("f_hi_hz").get<double>();
        t.frames = j.at("frames").get<std::size_t>();
        t.bins = j.at("bins").get<std::size_t>();
        t.patch = j.at("patch").get<std::vector<double>>();
        if (t.frames == 0 || t.bins == 0 || t.patch.size() != t.frames * t.bins) {
            throw Error(ErrorCode::format, "template: patch size does not match frames x bins");
        }
        return t;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("template: ") + ex.what());
    }
}

} // namespace trainscan::detect
