// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/audio.hpp"
#include "trainscan/dsp.hpp"
#include "trainscan/eventstore.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace trainscan::net {

/// 8-bit grayscale raster, row 0 at the top.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct ThumbnailOptions {
    int width = 160;
    int height = 96;
    double pad_s = 1.0;
    double range_db = 60.0;
    dsp::StftParams stft{256, 64, dsp::WindowKind::hann, 0}; ///< rate from the manifest
};

/// dB spectrogram mapped to gray: the image maximum is white, everything
/// `range_db` or more below it black. An all-zero spectrogram is all black.
/// Low frequencies at the bottom; nearest-neighbour resampling.
GrayImage render_spectrogram(const dsp::Spectrogram& spec, int width, int height, double range_db = 60.0);

/// Spectrogram of the event's span padded by pad_s on each side. Throws
/// Error(not_found) listing the gaps when part of the event itself was never
/// recorded; unrecorded padding is rendered as silence.
GrayImage render_event(const audio::RecordingManifest& manifest, const store::EventRecord& event,
                       const ThumbnailOptions& options = {});

/// Deterministic PNG (no timestamps or text chunks).
std::string encode_png(const GrayImage& image);
GrayImage decode_png(const std::string& bytes);

} // namespace trainscan::net
