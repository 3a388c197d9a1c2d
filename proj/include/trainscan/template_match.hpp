// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/dsp.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace trainscan::detect {

/// Spectrogram image patch used as a matched filter. The patch is stored
/// zero-mean and unit-norm; `bins` covers [f_lo_hz, f_hi_hz] on the grid of
/// the spectrogram it was cut from.
struct TemplateModel {
    std::string name;
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<double> patch; ///< frame-major, frames x bins

    double at(std::size_t f, std::size_t b) const { return patch[f * bins + b]; }

    std::string to_json() const;
    static TemplateModel from_json(const std::string& text);
};

/// Normalizes a raw frames x bins patch. Throws on a zero-variance patch.
TemplateModel make_template(std::string name, double f_lo_hz, double f_hi_hz, std::size_t frames,
                            std::size_t bins, std::vector<double> raw_patch);

/// Cuts frames [first, first + n) of the band [f_lo, f_hi] out of `spec`.
TemplateModel cut_template(const dsp::Spectrogram& spec, std::size_t first, std::size_t n, double f_lo_hz,
                           double f_hi_hz, std::string name);

/// First spectrogram bin of the template band; throws when the band does not
/// fit the spectrogram's bin grid.
std::size_t template_first_bin(const dsp::Spectrogram& spec, const TemplateModel& tpl);

/// Windows whose sum of squared deviations falls below this fraction of their
/// energy score 0.
inline constexpr double kZeroVarianceFraction = 1e-10;

/// Normalized cross-correlation at every frame offset 0..frames-tpl.frames,
/// computed with FFTs along time and prefix sums for the window statistics.
std::vector<double> correlation_scores(const dsp::Spectrogram& spec, const TemplateModel& tpl);

struct TemplateDetection {
    std::size_t frame = 0; ///< offset of the template's first frame
    double t_s = 0.0;      ///< centre time of that frame
    double score = 0.0;

    friend bool operator==(const TemplateDetection&, const TemplateDetection&) = default;
};

/// Offsets scoring >= threshold that are the maximum within +-tpl.frames
/// (the earlier offset wins a tie).
std::vector<TemplateDetection> correlate_template(const dsp::Spectrogram& spec, const TemplateModel& tpl,
                                                  double threshold);

/// Same peak picking applied to precomputed scores.
std::vector<std::size_t> pick_peaks(const std::vector<double>& scores, std::size_t radius, double threshold);

} // namespace trainscan::detect
