#pragma once

// Images, flow fields, and their file formats.
//
// Coordinates: x is the column (left to right), y is the row (top to
// bottom). Flow (u, v) at pixel (x, y) of frame 1 points to (x + u, y + v)
// in frame 2.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace gofl {

using Bytes = std::vector<std::uint8_t>;

/// Row-major, channel-interleaved intensities in [0, 1]. One or three channels.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 1, float fill = 0.0f)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  std::size_t pixel_count() const { return height * width; }
  float& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return data[(y * width + x) * channels + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

/// Per-pixel displacement in pixels. `valid` is empty for dense fields;
/// otherwise it holds one flag per pixel (1 = ground truth present).
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> u;
  std::vector<float> v;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(std::size_t h, std::size_t w, float fill_u = 0.0f, float fill_v = 0.0f)
      : height(h), width(w), u(h * w, fill_u), v(h * w, fill_v) {}

  std::size_t pixel_count() const { return height * width; }
  bool has_mask() const { return !valid.empty(); }
  bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }
  bool operator==(const FlowField&) const = default;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Middlebury .flo: "PIEH" magic (float 202021.25), int32 width, int32
/// height, then row-major interleaved float32 (u, v); little-endian.
FlowField read_flo(std::span<const std::uint8_t> bytes);
/// Throws FormatError for fields carrying a valid mask; the format has none.
Bytes write_flo(const FlowField& flow);
FlowField read_flo_file(const std::filesystem::path& path);
void write_flo_file(const std::filesystem::path& path, const FlowField& flow);

/// Binary PGM (P5) or PPM (P6) with maxval 255.
Image read_image(std::span<const std::uint8_t> bytes);
/// Quantizes with round-half-up after clamping to [0, 1].
Bytes write_image(const Image& image);
Image read_image_file(const std::filesystem::path& path);
void write_image_file(const std::filesystem::path& path, const Image& image);

/// Luma (0.299, 0.587, 0.114) for RGB; copies single-channel images.
Image to_grayscale(const Image& image);

/// Middlebury color-wheel rendering. Hue follows the direction
/// atan2(-v, -u); saturation is |flow| / max_magnitude clamped to 1. Without
/// an explicit maximum the 99th-percentile magnitude is used; a zero maximum
/// renders white. Pixels outside a valid mask are black.
Image flow_to_color(const FlowField& flow, std::optional<float> max_magnitude = std::nullopt);

/// The 55-entry color wheel as RGB in [0, 1].
const std::vector<std::array<float, 3>>& color_wheel();

}  // namespace gofl
