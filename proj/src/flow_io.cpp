#include "gofl/flow_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "gofl/errors.hpp"

namespace gofl {

namespace {

constexpr std::array<std::uint8_t, 4> kFloMagic{'P', 'I', 'E', 'H'};

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

void put_f32(Bytes& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

float get_f32(std::span<const std::uint8_t> in, std::size_t at) {
  return std::bit_cast<float>(get_u32(in, at));
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

FlowField read_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) {
    throw LengthError(".flo: header needs 12 bytes, got " + std::to_string(bytes.size()));
  }
  if (!std::equal(kFloMagic.begin(), kFloMagic.end(), bytes.begin())) {
    throw FormatError(".flo: bad magic (expected 202021.25)");
  }
  const auto width = static_cast<std::int32_t>(get_u32(bytes, 4));
  const auto height = static_cast<std::int32_t>(get_u32(bytes, 8));
  if (width <= 0 || height <= 0) {
    throw FormatError(".flo: non-positive extents " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const std::size_t expected = 12 + 8 * n;
  if (bytes.size() != expected) {
    throw LengthError(".flo: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  FlowField flow(static_cast<std::size_t>(height), static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < n; ++i) {
    flow.u[i] = get_f32(bytes, 12 + 8 * i);
    flow.v[i] = get_f32(bytes, 16 + 8 * i);
  }
  return flow;
}

Bytes write_flo(const FlowField& flow) {
  if (flow.has_mask()) throw FormatError(".flo cannot encode a valid mask");
  if (flow.width == 0 || flow.height == 0) throw FormatError(".flo: empty flow field");
  Bytes out(kFloMagic.begin(), kFloMagic.end());
  out.reserve(12 + 8 * flow.pixel_count());
  put_u32(out, static_cast<std::uint32_t>(flow.width));
  put_u32(out, static_cast<std::uint32_t>(flow.height));
  for (std::size_t i = 0; i < flow.pixel_count(); ++i) {
    put_f32(out, flow.u[i]);
    put_f32(out, flow.v[i]);
  }
  return out;
}

FlowField read_flo_file(const std::filesystem::path& path) {
  try {
    return read_flo(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const LengthError& e) {
    throw LengthError(path.string() + ": " + e.what());
  }
}

void write_flo_file(const std::filesystem::path& path, const FlowField& flow) {
  write_file(path, write_flo(flow));
}

namespace {

class PnmHeaderReader {
 public:
  explicit PnmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t next_number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw FormatError("PNM: malformed header");
    }
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1u << 24)) throw FormatError("PNM: header value out of range");
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("PNM: missing separator before raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Image read_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("PNM: unsupported magic (need P5 or P6)");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  PnmHeaderReader header(bytes);
  const std::size_t width = header.next_number();
  const std::size_t height = header.next_number();
  const std::size_t maxval = header.next_number();
  if (maxval != 255) throw FormatError("PNM: unsupported maxval " + std::to_string(maxval));
  if (width == 0 || height == 0) throw FormatError("PNM: empty image");
  const std::size_t offset = header.raster_offset();
  const std::size_t n = width * height * channels;
  if (bytes.size() < offset + n) {
    throw LengthError("PNM: raster needs " + std::to_string(n) + " bytes, got " +
                      std::to_string(bytes.size() - std::min(bytes.size(), offset)));
  }
  Image image(height, width, channels);
  for (std::size_t i = 0; i < n; ++i) image.data[i] = static_cast<float>(bytes[offset + i]) / 255.0f;
  return image;
}

Bytes write_image(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw FormatError("PNM: only 1 or 3 channels, got " + std::to_string(image.channels));
  }
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + image.data.size());
  for (float v : image.data) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<std::uint8_t>(std::floor(clamped * 255.0f + 0.5f)));
  }
  return out;
}

Image read_image_file(const std::filesystem::path& path) {
  try {
    return read_image(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const LengthError& e) {
    throw LengthError(path.string() + ": " + e.what());
  }
}

void write_image_file(const std::filesystem::path& path, const Image& image) {
  write_file(path, write_image(image));
}

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw FormatError("to_grayscale: expected 1 or 3 channels");
  Image gray(image.height, image.width, 1);
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    const float* p = &image.data[3 * i];
    gray.data[i] = std::clamp(0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2], 0.0f, 1.0f);
  }
  return gray;
}

const std::vector<std::array<float, 3>>& color_wheel() {
  static const std::vector<std::array<float, 3>> wheel = [] {
    constexpr int kRY = 15, kYG = 6, kGC = 4, kCB = 11, kBM = 13, kMR = 6;
    std::vector<std::array<float, 3>> w;
    auto ramp = [](int i, int n) { return std::floor(255.0f * i / n); };
    for (int i = 0; i < kRY; ++i) w.push_back({255.0f, ramp(i, kRY), 0.0f});
    for (int i = 0; i < kYG; ++i) w.push_back({255.0f - ramp(i, kYG), 255.0f, 0.0f});
    for (int i = 0; i < kGC; ++i) w.push_back({0.0f, 255.0f, ramp(i, kGC)});
    for (int i = 0; i < kCB; ++i) w.push_back({0.0f, 255.0f - ramp(i, kCB), 255.0f});
    for (int i = 0; i < kBM; ++i) w.push_back({ramp(i, kBM), 0.0f, 255.0f});
    for (int i = 0; i < kMR; ++i) w.push_back({255.0f, 0.0f, 255.0f - ramp(i, kMR)});
    for (auto& c : w) {
      for (float& x : c) x /= 255.0f;
    }
    return w;
  }();
  return wheel;
}

Image flow_to_color(const FlowField& flow, std::optional<float> max_magnitude) {
  const std::size_t n = flow.pixel_count();
  std::vector<float> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::hypot(flow.u[i], flow.v[i]);

  float max_mag = 0.0f;
  if (max_magnitude) {
    max_mag = *max_magnitude;
  } else {
    std::vector<float> valid_mags;
    valid_mags.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (flow.is_valid(i)) valid_mags.push_back(mags[i]);
    }
    if (!valid_mags.empty()) {
      const std::size_t k = static_cast<std::size_t>(0.99 * static_cast<double>(valid_mags.size() - 1));
      std::nth_element(valid_mags.begin(), valid_mags.begin() + k, valid_mags.end());
      max_mag = valid_mags[k];
    }
  }

  const auto& wheel = color_wheel();
  const auto ncols = static_cast<double>(wheel.size());
  Image out(flow.height, flow.width, 3, 1.0f);
  for (std::size_t i = 0; i < n; ++i) {
    float* px = &out.data[3 * i];
    if (!flow.is_valid(i)) {
      px[0] = px[1] = px[2] = 0.0f;
      continue;
    }
    if (!(max_mag > 0.0f)) continue;  // white
    const double rad = std::min(1.0, static_cast<double>(mags[i]) / max_mag);
    const double angle = std::atan2(-static_cast<double>(flow.v[i]), -static_cast<double>(flow.u[i])) /
                         std::numbers::pi;
    // Angles of +pi and -pi land on the same wheel entry.
    double fk = (angle + 1.0) / 2.0 * ncols;
    if (fk >= ncols) fk -= ncols;
    const auto k0 = static_cast<std::size_t>(std::floor(fk)) % wheel.size();
    const std::size_t k1 = (k0 + 1) % wheel.size();
    const double f = fk - std::floor(fk);
    for (int c = 0; c < 3; ++c) {
      const double col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
      px[c] = static_cast<float>(std::clamp(1.0 - rad * (1.0 - col), 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace gofl
