#include "gofl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "gofl/errors.hpp"
#include "gofl/parallel.hpp"
#include "gofl/random.hpp"
#include "gofl/warping.hpp"

namespace gofl {

namespace fs = std::filesystem;

std::string_view split_name(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "' (expected train or test)");
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : root / p;
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

const ManifestEntry& DatasetManifest::find(std::string_view pair_id) const {
  for (const auto& e : entries) {
    if (e.pair_id == pair_id) return e;
  }
  throw DataError("no manifest entry named '" + std::string(pair_id) + "'");
}

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.emplace_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view text, const fs::path& root) {
  DatasetManifest manifest;
  manifest.root = root;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto fields = split_tabs(line);
    if (fields.size() < 4 || fields.size() > 6) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 4 to 6 fields, got " +
                        std::to_string(fields.size()));
    }
    ManifestEntry entry;
    entry.pair_id = fields[0];
    if (entry.pair_id.empty()) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": empty pair id");
    }
    try {
      entry.split = parse_split(fields[1]);
    } catch (const ConfigError& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    entry.img1 = fields[2];
    entry.img2 = fields[3];
    if (fields.size() > 4 && fields[4] != "-" && !fields[4].empty()) entry.gt = fields[4];
    if (fields.size() > 5 && fields[5] != "-" && !fields[5].empty()) entry.proxy = fields[5];
    if (!ids.insert(entry.pair_id).second) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": duplicate pair id '" +
                        entry.pair_id + "'");
    }
    manifest.entries.push_back(std::move(entry));
    if (end == text.size()) break;
  }
  return manifest;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out = "# pair_id\tsplit\timg1\timg2\t[gt]\t[proxy]\n";
  for (const auto& e : manifest.entries) {
    out += e.pair_id;
    out += '\t';
    out += split_name(e.split);
    out += '\t' + e.img1.generic_string() + '\t' + e.img2.generic_string();
    if (e.gt || e.proxy) out += '\t' + (e.gt ? e.gt->generic_string() : std::string("-"));
    if (e.proxy) out += '\t' + e.proxy->generic_string();
    out += '\n';
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& file) {
  const Bytes bytes = read_file(file);
  const std::string text(bytes.begin(), bytes.end());
  fs::path root = file.parent_path();
  if (root.empty()) root = ".";
  DatasetManifest manifest = parse_manifest(text, root);
  for (const auto& e : manifest.entries) {
    for (const fs::path* p : {&e.img1, &e.img2}) {
      if (!fs::exists(manifest.resolve(*p))) {
        throw DataError("manifest entry '" + e.pair_id + "': missing image " +
                        manifest.resolve(*p).string());
      }
    }
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
  const std::string text = format_manifest(manifest);
  write_file(file, Bytes(text.begin(), text.end()));
}

DatasetManifest rebase_manifest(const DatasetManifest& manifest, const fs::path& new_root) {
  const fs::path target = fs::absolute(new_root).lexically_normal();
  auto rebase = [&](const fs::path& p) {
    const fs::path abs = fs::absolute(manifest.resolve(p)).lexically_normal();
    fs::path rel = abs.lexically_relative(target);
    return rel.empty() ? abs : rel;
  };
  DatasetManifest out;
  out.root = new_root;
  for (const auto& e : manifest.entries) {
    ManifestEntry r = e;
    r.img1 = rebase(e.img1);
    r.img2 = rebase(e.img2);
    if (e.gt) r.gt = rebase(*e.gt);
    if (e.proxy) r.proxy = rebase(*e.proxy);
    out.entries.push_back(std::move(r));
  }
  return out;
}

SamplePair load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                       const LoadOptions& options) {
  SamplePair sample;
  sample.pair_id = entry.pair_id;
  auto fail = [&](const std::string& what) {
    return DataError("manifest entry '" + entry.pair_id + "': " + what);
  };
  auto read_flow = [&](const std::optional<fs::path>& p, const char* kind) {
    if (!p) throw fail(std::string("no ") + kind + " flow listed");
    try {
      return read_flo_file(manifest.resolve(*p));
    } catch (const std::exception& e) {
      throw fail(std::string("cannot read ") + kind + " flow: " + e.what());
    }
  };
  try {
    sample.i1 = read_image_file(manifest.resolve(entry.img1));
    sample.i2 = read_image_file(manifest.resolve(entry.img2));
  } catch (const std::exception& e) {
    throw fail(std::string("cannot read image: ") + e.what());
  }
  if (options.grayscale) {
    sample.i1 = to_grayscale(sample.i1);
    sample.i2 = to_grayscale(sample.i2);
  }
  if (sample.i1.height != sample.i2.height || sample.i1.width != sample.i2.width ||
      sample.i1.channels != sample.i2.channels) {
    throw fail("frames differ in extents");
  }
  auto check = [&](const FlowField& f, const char* kind) {
    if (f.height != sample.i1.height || f.width != sample.i1.width) {
      throw fail(std::string(kind) + " flow extents differ from the frames");
    }
  };
  if (options.gt) {
    sample.gt = read_flow(entry.gt, "ground-truth");
    check(*sample.gt, "ground-truth");
  }
  if (options.proxy) {
    sample.proxy = read_flow(entry.proxy, "proxy");
    check(*sample.proxy, "proxy");
  }
  return sample;
}

FlowField downsample_flow(const FlowField& flow, std::size_t factor) {
  if (factor == 0 || flow.height % factor != 0 || flow.width % factor != 0) {
    throw ShapeError("downsample_flow: " + std::to_string(flow.height) + "x" +
                     std::to_string(flow.width) + " not divisible by " + std::to_string(factor));
  }
  FlowField out(flow.height / factor, flow.width / factor);
  if (flow.has_mask()) out.valid.assign(out.pixel_count(), 0);
  const double scale = static_cast<double>(factor);
  for (std::size_t oy = 0; oy < out.height; ++oy) {
    for (std::size_t ox = 0; ox < out.width; ++ox) {
      double su = 0.0, sv = 0.0;
      std::size_t count = 0;
      for (std::size_t dy = 0; dy < factor; ++dy) {
        for (std::size_t dx = 0; dx < factor; ++dx) {
          const std::size_t i = (oy * factor + dy) * flow.width + ox * factor + dx;
          if (!flow.is_valid(i)) continue;
          su += flow.u[i];
          sv += flow.v[i];
          ++count;
        }
      }
      const std::size_t o = oy * out.width + ox;
      if (count == 0) continue;
      out.u[o] = static_cast<float>(su / static_cast<double>(count) / scale);
      out.v[o] = static_cast<float>(sv / static_cast<double>(count) / scale);
      if (flow.has_mask()) out.valid[o] = 1;
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& flow, std::size_t height, std::size_t width) {
  if (flow.height == 0 || flow.width == 0 || height == 0 || width == 0) {
    throw ShapeError("resize_flow: empty extents");
  }
  FlowField out(height, width);
  const double sx = static_cast<double>(flow.width) / static_cast<double>(width);
  const double sy = static_cast<double>(flow.height) / static_cast<double>(height);
  const double ku = static_cast<double>(width) / static_cast<double>(flow.width);
  const double kv = static_cast<double>(height) / static_cast<double>(flow.height);
  for (std::size_t y = 0; y < height; ++y) {
    const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < width; ++x) {
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const std::size_t o = y * width + x;
      out.u[o] = static_cast<float>(
          ku * sample_bilinear(flow.u.data(), flow.height, flow.width, src_x, src_y));
      out.v[o] = static_cast<float>(
          kv * sample_bilinear(flow.v.data(), flow.height, flow.width, src_x, src_y));
    }
  }
  return out;
}

FlowField upsample_flow(const FlowField& flow, std::size_t factor) {
  if (factor == 0) throw ShapeError("upsample_flow: factor must be positive");
  return resize_flow(flow, flow.height * factor, flow.width * factor);
}

// --- synthetic scenes ---------------------------------------------------------

namespace {

double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::uint64_t octave) {
  const std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL ^
                                                static_cast<std::uint64_t>(iy),
                                      octave + 1);
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(std::uint64_t seed, double x, double y, double period, std::uint64_t octave) {
  const double gx = x / period;
  const double gy = y / period;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = fade(gx - fx);
  const double ty = fade(gy - fy);
  const double a = lattice_value(seed, ix, iy, octave);
  const double b = lattice_value(seed, ix + 1, iy, octave);
  const double c = lattice_value(seed, ix, iy + 1, octave);
  const double d = lattice_value(seed, ix + 1, iy + 1, octave);
  const double top = a + tx * (b - a);
  const double bottom = c + tx * (d - c);
  return top + ty * (bottom - top);
}

}  // namespace

double TextureSpec::at(double x, double y) const {
  constexpr std::array<double, 3> kPeriods{16.0, 8.0, 4.0};
  constexpr std::array<double, 3> kAmps{1.0, 0.5, 0.25};
  double n = 0.0;
  for (std::size_t o = 0; o < kPeriods.size(); ++o) {
    n += kAmps[o] * value_noise(seed, x, y, kPeriods[o], o);
  }
  return std::clamp(mean + contrast * n / 1.75, 0.0, 1.0);
}

std::array<double, 2> LayerMotion::apply(double x, double y) const {
  const auto d = displacement(x, y);
  return {x + d[0], y + d[1]};
}

std::array<double, 2> LayerMotion::displacement(double x, double y) const {
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double c = scale * std::cos(th);
  const double s = scale * std::sin(th);
  const double dx = x - cx;
  const double dy = y - cy;
  // (s R - I)(p - center) + t
  return {(c - 1.0) * dx - s * dy + tx, s * dx + (c - 1.0) * dy + ty};
}

std::array<double, 2> LayerMotion::inverse(double x, double y) const {
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th) / scale;
  const double s = std::sin(th) / scale;
  const double dx = x - cx - tx;
  const double dy = y - cy - ty;
  return {cx + c * dx + s * dy, cy - s * dx + c * dy};
}

bool Sprite::contains(double x, double y) const {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = polygon[i];
    const auto& b = polygon[j];
    if ((a[1] > y) != (b[1] > y)) {
      const double xc = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
      if (x < xc) inside = !inside;
    }
  }
  return inside;
}

namespace {

LayerMotion sample_motion(Rng& rng, double cx, double cy) {
  LayerMotion m;
  const double radius = 12.0 * rng.uniform();
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  m.tx = radius * std::cos(phi);
  m.ty = radius * std::sin(phi);
  m.rotation_deg = rng.uniform(-10.0, 10.0);
  m.scale = rng.uniform(0.95, 1.05);
  m.cx = cx;
  m.cy = cy;
  return m;
}

// Index of the topmost layer covering frame-2 point (x, y); 0 is background.
std::size_t top_layer_frame2(const SceneSpec& scene, double x, double y,
                             std::array<double, 2>* source) {
  for (std::size_t s = scene.sprites.size(); s-- > 0;) {
    const Sprite& sp = scene.sprites[s];
    const auto p = sp.motion.inverse(x, y);
    if (sp.contains(p[0], p[1])) {
      if (source) *source = p;
      return s + 1;
    }
  }
  if (source) *source = scene.background_motion.inverse(x, y);
  return 0;
}

std::size_t top_layer_frame1(const SceneSpec& scene, double x, double y) {
  for (std::size_t s = scene.sprites.size(); s-- > 0;) {
    if (scene.sprites[s].contains(x, y)) return s + 1;
  }
  return 0;
}

}  // namespace

SceneSpec sample_scene(std::size_t height, std::size_t width, std::uint64_t seed,
                       std::uint64_t index) {
  Rng rng(derive_seed(seed, index, 0x5ce4e));
  SceneSpec scene;
  scene.height = height;
  scene.width = width;
  const double size = static_cast<double>(std::min(height, width)) / 64.0;
  scene.background = {rng.next(), rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.55)};
  scene.background_motion =
      sample_motion(rng, 0.5 * (static_cast<double>(width) - 1.0), 0.5 * (static_cast<double>(height) - 1.0));
  const std::size_t count = 1 + rng.below(3);
  for (std::size_t k = 0; k < count; ++k) {
    Sprite sp;
    const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(width);
    const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(height);
    const double radius = rng.uniform(8.0, 18.0) * size;
    const std::size_t verts = 3 + rng.below(6);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < verts; ++i) {
      const double th = phase + 2.0 * std::numbers::pi *
                                    (static_cast<double>(i) + rng.uniform(-0.3, 0.3)) /
                                    static_cast<double>(verts);
      const double r = radius * rng.uniform(0.55, 1.0);
      sp.polygon.push_back({cx + r * std::cos(th), cy + r * std::sin(th)});
    }
    double mean = rng.uniform(0.15, 0.85);
    if (std::abs(mean - scene.background.mean) < 0.15) mean = mean < 0.5 ? mean + 0.3 : mean - 0.3;
    sp.texture = {rng.next(), mean, rng.uniform(0.3, 0.5)};
    sp.motion = sample_motion(rng, cx, cy);
    scene.sprites.push_back(std::move(sp));
  }
  return scene;
}

RenderedPair render_scene(const SceneSpec& scene) {
  RenderedPair out;
  out.i1 = Image(scene.height, scene.width, 1);
  out.i2 = Image(scene.height, scene.width, 1);
  out.flow = FlowField(scene.height, scene.width);
  out.visible.assign(scene.height * scene.width, 0);
  const double xmax = static_cast<double>(scene.width) - 1.0;
  const double ymax = static_cast<double>(scene.height) - 1.0;
  for (std::size_t y = 0; y < scene.height; ++y) {
    for (std::size_t x = 0; x < scene.width; ++x) {
      const double px = static_cast<double>(x);
      const double py = static_cast<double>(y);
      const std::size_t i = y * scene.width + x;

      const std::size_t layer = top_layer_frame1(scene, px, py);
      const TextureSpec& tex = layer == 0 ? scene.background : scene.sprites[layer - 1].texture;
      const LayerMotion& motion =
          layer == 0 ? scene.background_motion : scene.sprites[layer - 1].motion;
      out.i1.data[i] = static_cast<float>(tex.at(px, py));
      const auto d = motion.displacement(px, py);
      out.flow.u[i] = static_cast<float>(d[0]);
      out.flow.v[i] = static_cast<float>(d[1]);

      const double qx = px + d[0];
      const double qy = py + d[1];
      if (qx >= 0.0 && qx <= xmax && qy >= 0.0 && qy <= ymax &&
          top_layer_frame2(scene, qx, qy, nullptr) == layer) {
        out.visible[i] = 1;
      }

      std::array<double, 2> src{};
      const std::size_t layer2 = top_layer_frame2(scene, px, py, &src);
      const TextureSpec& tex2 = layer2 == 0 ? scene.background : scene.sprites[layer2 - 1].texture;
      out.i2.data[i] = static_cast<float>(tex2.at(src[0], src[1]));
    }
  }
  return out;
}

DatasetManifest generate_synthetic(const SyntheticOptions& options, const fs::path& out_dir) {
  if (options.height == 0 || options.width == 0 || options.height % 64 != 0 ||
      options.width % 64 != 0) {
    throw ShapeError("generate_synthetic: extents " + std::to_string(options.height) + "x" +
                     std::to_string(options.width) + " must be positive multiples of 64");
  }
  const std::size_t total = options.train_count + options.test_count;
  if (total == 0) throw ConfigError("generate_synthetic: count must be at least 1");

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.entries.resize(total);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "flow");
  parallel_for(total, [&](std::size_t index) {
    char id[32];
    std::snprintf(id, sizeof(id), "pair_%05zu", index);
    const SceneSpec scene = sample_scene(options.height, options.width, options.seed, index);
    const RenderedPair pair = render_scene(scene);
    ManifestEntry& e = manifest.entries[index];
    e.pair_id = id;
    e.split = index < options.train_count ? Split::train : Split::test;
    e.img1 = fs::path("images") / (std::string(id) + "_1.pgm");
    e.img2 = fs::path("images") / (std::string(id) + "_2.pgm");
    e.gt = fs::path("flow") / (std::string(id) + ".flo");
    write_image_file(out_dir / e.img1, pair.i1);
    write_image_file(out_dir / e.img2, pair.i2);
    write_flo_file(out_dir / *e.gt, pair.flow);
  });
  save_manifest(manifest, out_dir / "manifest.txt");
  return manifest;
}

// --- augmentation -------------------------------------------------------------

namespace {

Image mirror(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
      }
    }
  }
  return out;
}

FlowField mirror(const FlowField& f) {
  FlowField out(f.height, f.width);
  if (f.has_mask()) out.valid.resize(f.pixel_count());
  for (std::size_t y = 0; y < f.height; ++y) {
    for (std::size_t x = 0; x < f.width; ++x) {
      const std::size_t src = y * f.width + (f.width - 1 - x);
      const std::size_t dst = y * f.width + x;
      out.u[dst] = -f.u[src];
      out.v[dst] = f.v[src];
      if (f.has_mask()) out.valid[dst] = f.valid[src];
    }
  }
  return out;
}

Image crop_image(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  Image out(h, w, img.channels);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(img.data.begin() + ((y0 + y) * img.width + x0) * img.channels, w * img.channels,
                out.data.begin() + y * w * img.channels);
  }
  return out;
}

FlowField crop_flow(const FlowField& f, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  FlowField out(h, w);
  if (f.has_mask()) out.valid.resize(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t src = (y0 + y) * f.width + x0 + x;
      out.u[y * w + x] = f.u[src];
      out.v[y * w + x] = f.v[src];
      if (f.has_mask()) out.valid[y * w + x] = f.valid[src];
    }
  }
  return out;
}

}  // namespace

SamplePair flip_horizontal(const SamplePair& sample) {
  SamplePair out;
  out.pair_id = sample.pair_id;
  out.i1 = mirror(sample.i1);
  out.i2 = mirror(sample.i2);
  if (sample.gt) out.gt = mirror(*sample.gt);
  if (sample.proxy) out.proxy = mirror(*sample.proxy);
  return out;
}

SamplePair crop(const SamplePair& sample, std::size_t y0, std::size_t x0, std::size_t height,
                std::size_t width) {
  if (y0 + height > sample.i1.height || x0 + width > sample.i1.width || height == 0 || width == 0) {
    throw ShapeError("crop: window " + std::to_string(height) + "x" + std::to_string(width) +
                     " at (" + std::to_string(y0) + "," + std::to_string(x0) + ") exceeds " +
                     std::to_string(sample.i1.height) + "x" + std::to_string(sample.i1.width));
  }
  SamplePair out;
  out.pair_id = sample.pair_id;
  out.i1 = crop_image(sample.i1, y0, x0, height, width);
  out.i2 = crop_image(sample.i2, y0, x0, height, width);
  if (sample.gt) out.gt = crop_flow(*sample.gt, y0, x0, height, width);
  if (sample.proxy) out.proxy = crop_flow(*sample.proxy, y0, x0, height, width);
  return out;
}

SamplePair augment(const SamplePair& sample, std::uint64_t seed, const AugmentConfig& config) {
  if (!sample.gt && !sample.proxy) throw DataError("augment: sample has no flow label");
  const std::size_t h = sample.i1.height;
  const std::size_t w = sample.i1.width;
  const std::size_t ch = config.crop_height == 0 ? h : config.crop_height;
  const std::size_t cw = config.crop_width == 0 ? w : config.crop_width;
  if (ch > h || cw > w) {
    throw ShapeError("augment: crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                     " larger than image " + std::to_string(h) + "x" + std::to_string(w));
  }
  Rng rng(seed);
  const bool flip = rng.bernoulli(config.flip_probability);
  const std::size_t y0 = rng.below(h - ch + 1);
  const std::size_t x0 = rng.below(w - cw + 1);
  const double brightness = rng.uniform(config.brightness_min, config.brightness_max);
  const double sigma = rng.uniform(0.0, config.noise_sigma_max);

  SamplePair out = flip ? flip_horizontal(sample) : sample;
  if (ch != h || cw != w) out = crop(out, y0, x0, ch, cw);
  for (Image* img : {&out.i1, &out.i2}) {
    for (float& v : img->data) {
      const double noisy = v * brightness + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
      v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
  }
  return out;
}

// --- batching -----------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t size, std::size_t batch_size, std::uint64_t seed,
                           bool shuffle)
    : size_(size), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (size == 0) throw DataError("batch sampler over an empty set");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  start_epoch();
}

void BatchSampler::start_epoch() {
  order_.resize(size_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle_) {
    Rng rng(derive_seed(seed_, epoch_, 0xba7c4));
    for (std::size_t i = size_; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ >= size_) {
    ++epoch_;
    start_epoch();
  }
  const std::size_t end = std::min(size_, cursor_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  return batch;
}

std::size_t BatchSampler::batches_per_epoch() const {
  return (size_ + batch_size_ - 1) / batch_size_;
}

namespace {

std::vector<SamplePair> load_split(const DatasetManifest& manifest, Split split,
                                   const LoadOptions& options) {
  const auto entries = manifest.select(split);
  if (entries.empty()) {
    throw DataError("manifest has no " + std::string(split_name(split)) + " entries");
  }
  std::vector<SamplePair> samples(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    samples[i] = load_sample(manifest, *entries[i], options);
  });
  return samples;
}

}  // namespace

DataLoader::DataLoader(const DatasetManifest& manifest, Split split, const LoadOptions& options,
                       std::size_t batch_size, std::uint64_t seed)
    : samples_(load_split(manifest, split, options)),
      sampler_(samples_.size(), batch_size, seed) {}

std::vector<const SamplePair*> DataLoader::next_batch() {
  std::vector<const SamplePair*> batch;
  for (std::size_t i : sampler_.next()) batch.push_back(&samples_[i]);
  return batch;
}

}  // namespace gofl
