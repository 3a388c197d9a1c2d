// SPDX-License-Identifier: Apache-2.0
#include "trainscan/net/thumbnail.hpp"

#include "trainscan/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace trainscan::net {

GrayImage render_spectrogram(const dsp::Spectrogram& spec, int width, int height, double range_db) {
    if (width < 1 || height < 1 || width > 4096 || height > 4096) {
        throw Error(ErrorCode::invalid_argument, "thumbnail size must be within 1..4096");
    }
    GrayImage img{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
    if (spec.frames == 0 || spec.bins == 0) {
        return img;
    }
    const double peak = *std::max_element(spec.magnitudes.begin(), spec.magnitudes.end());
    if (!(peak > 0.0)) {
        return img;
    }
    const double top = dsp::to_db(peak);
    for (int y = 0; y < height; ++y) {
        const auto bin = static_cast<std::size_t>(height - 1 - y) * spec.bins / height;
        for (int x = 0; x < width; ++x) {
            const auto frame = static_cast<std::size_t>(x) * spec.frames / width;
            const double rel = (dsp::to_db(spec.at(frame, bin)) - top + range_db) / range_db;
            img.pixels[static_cast<std::size_t>(y) * width + x] =
                static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(rel, 0.0, 1.0)));
        }
    }
    return img;
}

GrayImage render_event(const audio::RecordingManifest& manifest, const store::EventRecord& event,
                       const ThumbnailOptions& options) {
    const TimeSpan padded{event.begin_utc - seconds_to_micros(options.pad_s),
                          event.end_utc + seconds_to_micros(options.pad_s)};
    audio::ExtractedSpan ex;
    try {
        ex = audio::extract_span(manifest, event.channel, padded);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::out_of_range) {
            throw Error(ErrorCode::not_found, "no audio recorded for event " + std::to_string(event.event_id) +
                                                  " on channel " + std::to_string(event.channel) + " in [" +
                                                  format_iso8601(padded.t0) + ", " + format_iso8601(padded.t1) + ")");
        }
        throw;
    }
    const TimeSpan own{event.begin_utc, event.end_utc};
    std::string missing;
    for (const auto& g : ex.gaps) {
        if (g.intersects(own)) {
            missing += (missing.empty() ? "" : ", ") + std::string("[") + format_iso8601(g.t0) + ", " +
                       format_iso8601(g.t1) + ")";
        }
    }
    if (!missing.empty()) {
        throw Error(ErrorCode::not_found,
                    "audio of event " + std::to_string(event.event_id) + " is incomplete; gaps: " + missing);
    }
    dsp::StftParams p = options.stft;
    p.sample_rate_hz = ex.clip.sample_rate_hz;
    p.fft_size = std::min(p.fft_size, 1 << static_cast<int>(std::floor(std::log2(std::max<std::size_t>(16, ex.clip.samples.size())))));
    p.hop = std::min(p.hop, p.fft_size);
    return render_spectrogram(dsp::stft(ex.clip, p), options.width, options.height, options.range_db);
}

namespace {

void on_write(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

void on_flush(png_structp) {}

struct Reader {
    const std::string* bytes;
    std::size_t pos = 0;
};

void on_read(png_structp png, png_bytep data, png_size_t n) {
    auto* r = static_cast<Reader*>(png_get_io_ptr(png));
    if (r->pos + n > r->bytes->size()) {
        png_error(png, "truncated PNG");
        return;
    }
    std::memcpy(data, r->bytes->data() + r->pos, n);
    r->pos += n;
}

// libpng reports failure by longjmp; the message is parked here first.
thread_local std::string png_message;

void on_error(png_structp png, png_const_charp msg) {
    png_message = msg;
    png_longjmp(png, 1);
}
void on_warning(png_structp, png_const_charp) {}

} // namespace

std::string encode_png(const GrayImage& image) {
    if (image.width < 1 || image.height < 1 ||
        image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
        throw Error(ErrorCode::invalid_argument, "image dimensions do not match its pixels");
    }
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_error, on_warning);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::io, "png: " + png_message);
    }
    {
        png_set_write_fn(png, &out, on_write, on_flush);
        png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < image.height; ++y) {
            png_write_row(png, image.pixels.data() + static_cast<std::size_t>(y) * image.width);
        }
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

GrayImage decode_png(const std::string& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        throw Error(ErrorCode::format, "not a PNG");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_error, on_warning);
    png_infop info = png_create_info_struct(png);
    Reader reader{&bytes};
    GrayImage img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::format, "png: " + png_message);
    }
    png_set_read_fn(png, &reader, on_read);
    png_read_info(png, info);
    const bool gray8 = png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) == 8;
    if (gray8) {
        img.width = static_cast<int>(png_get_image_width(png, info));
        img.height = static_cast<int>(png_get_image_height(png, info));
        img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
        for (int y = 0; y < img.height; ++y) {
            png_read_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.width, nullptr);
        }
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!gray8) {
        throw Error(ErrorCode::format, "expected 8-bit grayscale PNG");
    }
    return img;
}

} // namespace trainscan::net
