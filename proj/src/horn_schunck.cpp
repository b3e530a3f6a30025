#include "gofl/horn_schunck.hpp"

#include <algorithm>
#include <cmath>

#include "gofl/errors.hpp"
#include "gofl/parallel.hpp"
#include "gofl/warping.hpp"

namespace gofl {

void HSConfig::validate() const {
  if (!(smoothness_alpha > 0.0) || !std::isfinite(smoothness_alpha)) {
    throw ConfigError("hs: smoothness_alpha must be positive");
  }
  if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0)) {
    throw ConfigError("hs: pyramid_scale must lie in (0, 1)");
  }
  if (warps_per_level == 0) throw ConfigError("hs: warps_per_level must be positive");
}

namespace {

constexpr double kIntensityScale = 255.0;

struct Plane {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> v;

  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

void check_pair(const Image& i1, const Image& i2, const char* who) {
  if (i1.channels != 1 || i2.channels != 1) {
    throw ShapeError(std::string(who) + ": frames must be single-channel");
  }
  if (i1.height != i2.height || i1.width != i2.width) {
    throw ShapeError(std::string(who) + ": frame extents differ (" + std::to_string(i1.height) +
                     "x" + std::to_string(i1.width) + " vs " + std::to_string(i2.height) + "x" +
                     std::to_string(i2.width) + ")");
  }
}

void check_flow(const Image& img, const FlowField& flow, const char* who) {
  if (flow.height != img.height || flow.width != img.width) {
    throw ShapeError(std::string(who) + ": flow extents differ from the frames");
  }
}

struct Derivatives {
  std::vector<double> ix, iy, it;
};

Derivatives derivatives(const Image& i1, const Image& i2) {
  const std::size_t h = i1.height;
  const std::size_t w = i1.width;
  Derivatives d;
  d.ix.resize(h * w);
  d.iy.resize(h * w);
  d.it.resize(h * w);
  auto px = [&](const Image& img, std::size_t y, std::size_t x) {
    return kIntensityScale * static_cast<double>(img.data[y * w + x]);
  };
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t yu = y == 0 ? 0 : y - 1;
    const std::size_t yd = y + 1 == h ? y : y + 1;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xl = x == 0 ? 0 : x - 1;
      const std::size_t xr = x + 1 == w ? x : x + 1;
      const std::size_t i = y * w + x;
      d.ix[i] = 0.25 * ((px(i1, y, xr) - px(i1, y, xl)) + (px(i2, y, xr) - px(i2, y, xl)));
      d.iy[i] = 0.25 * ((px(i1, yd, x) - px(i1, yu, x)) + (px(i2, yd, x) - px(i2, yu, x)));
      d.it[i] = px(i2, y, x) - px(i1, y, x);
    }
  }
  return d;
}

// Linearization of i2 warped by `init`; the data term vanishes where the
// sample point leaves the frame.
Derivatives linearize(const Image& i1, const Image& i2, const FlowField& init) {
  Derivatives d = derivatives(i1, warp_image(i2, init));
  const std::size_t h = i1.height;
  const std::size_t w = i1.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double tx = static_cast<double>(x) + init.u[i];
      const double ty = static_cast<double>(y) + init.v[i];
      if (tx < 0.0 || ty < 0.0 || tx > static_cast<double>(w - 1) || ty > static_cast<double>(h - 1)) {
        d.ix[i] = d.iy[i] = d.it[i] = 0.0;
      }
    }
  }
  return d;
}

FlowField median3(const FlowField& f) {
  const std::size_t h = f.height;
  const std::size_t w = f.width;
  FlowField out(h, w);
  float a[9], b[9];
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const std::size_t yy = std::clamp<long>(static_cast<long>(y) + dy, 0, static_cast<long>(h) - 1);
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t xx = std::clamp<long>(static_cast<long>(x) + dx, 0, static_cast<long>(w) - 1);
          a[n] = f.u[yy * w + xx];
          b[n] = f.v[yy * w + xx];
          ++n;
        }
      }
      std::nth_element(a, a + 4, a + 9);
      std::nth_element(b, b + 4, b + 9);
      out.u[y * w + x] = a[4];
      out.v[y * w + x] = b[4];
    }
  }
  return out;
}

void neighbor_average(const std::vector<double>& f, std::size_t h, std::size_t w,
                      std::vector<double>& out) {
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t yu = y == 0 ? 0 : y - 1;
    const std::size_t yd = y + 1 == h ? y : y + 1;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xl = x == 0 ? 0 : x - 1;
      const std::size_t xr = x + 1 == w ? x : x + 1;
      out[y * w + x] =
          0.25 * ((f[y * w + xl] + f[y * w + xr]) + (f[yu * w + x] + f[yd * w + x]));
    }
  }
}

Image to_image(const Plane& p) {
  Image img(p.h, p.w, 1);
  for (std::size_t i = 0; i < p.v.size(); ++i) img.data[i] = static_cast<float>(p.v[i]);
  return img;
}

Plane to_plane(const Image& img) {
  Plane p{img.height, img.width, std::vector<double>(img.data.begin(), img.data.end())};
  return p;
}

// Separable [1 4 6 4 1] / 16 with replicated borders.
Plane binomial_smooth(const Plane& in) {
  constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  auto clampi = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(n) - 1));
  };
  Plane tmp{in.h, in.w, std::vector<double>(in.v.size())};
  for (std::size_t y = 0; y < in.h; ++y) {
    for (std::size_t x = 0; x < in.w; ++x) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += k[t + 2] * in.at(y, clampi(static_cast<long>(x) + t, in.w));
      tmp.v[y * in.w + x] = s;
    }
  }
  Plane out{in.h, in.w, std::vector<double>(in.v.size())};
  for (std::size_t y = 0; y < in.h; ++y) {
    for (std::size_t x = 0; x < in.w; ++x) {
      double s = 0.0;
      for (int t = -2; t <= 2; ++t) s += k[t + 2] * tmp.at(clampi(static_cast<long>(y) + t, in.h), x);
      out.v[y * in.w + x] = s;
    }
  }
  return out;
}

std::size_t scaled_extent(std::size_t n, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * scale)));
}

// Half-pixel bilinear resampling; an exact halving averages 2x2 blocks.
Plane resample(const Plane& in, std::size_t h, std::size_t w) {
  Plane out{h, w, std::vector<double>(h * w)};
  const double sy = static_cast<double>(in.h) / static_cast<double>(h);
  const double sx = static_cast<double>(in.w) / static_cast<double>(w);
  for (std::size_t y = 0; y < h; ++y) {
    const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < w; ++x) {
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      out.v[y * w + x] = sample_bilinear(in.v.data(), in.h, in.w, src_x, src_y);
    }
  }
  return out;
}

std::vector<Image> build_pyramid(const Image& img, std::size_t levels, double scale) {
  std::vector<Image> pyr{img};
  Plane cur = to_plane(img);
  for (std::size_t k = 1; k < levels; ++k) {
    cur = resample(binomial_smooth(cur), scaled_extent(cur.h, scale), scaled_extent(cur.w, scale));
    pyr.push_back(to_image(cur));
  }
  return pyr;
}

}  // namespace

FlowField horn_schunck_level(const Image& i1, const Image& i2, const FlowField& init,
                             const HSConfig& cfg) {
  cfg.validate();
  check_pair(i1, i2, "horn_schunck_level");
  check_flow(i1, init, "horn_schunck_level");
  if (cfg.iterations_per_level == 0) return init;

  const std::size_t h = i1.height;
  const std::size_t w = i1.width;
  const std::size_t n = h * w;
  const Derivatives d = linearize(i1, i2, init);
  const double a2 = cfg.smoothness_alpha * cfg.smoothness_alpha;
  std::vector<double> denom(n);
  for (std::size_t i = 0; i < n; ++i) denom[i] = a2 + d.ix[i] * d.ix[i] + d.iy[i] * d.iy[i];

  const std::vector<double> u0(init.u.begin(), init.u.end());
  const std::vector<double> v0(init.v.begin(), init.v.end());
  std::vector<double> u = u0, v = v0;
  std::vector<double> ub(n), vb(n);
  for (std::size_t it = 0; it < cfg.iterations_per_level; ++it) {
    neighbor_average(u, h, w, ub);
    neighbor_average(v, h, w, vb);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = (d.ix[i] * (ub[i] - u0[i]) + d.iy[i] * (vb[i] - v0[i]) + d.it[i]) / denom[i];
      u[i] = ub[i] - d.ix[i] * r;
      v[i] = vb[i] - d.iy[i] * r;
    }
  }
  FlowField out(h, w);
  for (std::size_t i = 0; i < n; ++i) {
    out.u[i] = static_cast<float>(u[i]);
    out.v[i] = static_cast<float>(v[i]);
  }
  return out;
}

double horn_schunck_energy(const Image& i1, const Image& i2, const FlowField& init,
                           const FlowField& flow, const HSConfig& cfg) {
  check_pair(i1, i2, "horn_schunck_energy");
  check_flow(i1, init, "horn_schunck_energy");
  check_flow(i1, flow, "horn_schunck_energy");
  const std::size_t h = i1.height;
  const std::size_t w = i1.width;
  const Derivatives d = linearize(i1, i2, init);
  double data = 0.0;
  for (std::size_t i = 0; i < h * w; ++i) {
    const double du = static_cast<double>(flow.u[i]) - init.u[i];
    const double dv = static_cast<double>(flow.v[i]) - init.v[i];
    const double r = d.ix[i] * du + d.iy[i] * dv + d.it[i];
    data += r * r;
  }
  double smooth = 0.0;
  auto edge = [&](std::size_t a, std::size_t b) {
    const double du = static_cast<double>(flow.u[a]) - flow.u[b];
    const double dv = static_cast<double>(flow.v[a]) - flow.v[b];
    smooth += du * du + dv * dv;
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (x + 1 < w) edge(y * w + x, y * w + x + 1);
      if (y + 1 < h) edge(y * w + x, (y + 1) * w + x);
    }
  }
  return data + 0.25 * cfg.smoothness_alpha * cfg.smoothness_alpha * smooth;
}

std::size_t pyramid_level_count(std::size_t height, std::size_t width, const HSConfig& cfg) {
  cfg.validate();
  if (cfg.pyramid_levels == 0) {
    std::size_t levels = 1;
    std::size_t h = height, w = width;
    while (true) {
      const std::size_t nh = scaled_extent(h, cfg.pyramid_scale);
      const std::size_t nw = scaled_extent(w, cfg.pyramid_scale);
      if (nh < kMinPyramidExtent || nw < kMinPyramidExtent) break;
      h = nh;
      w = nw;
      ++levels;
    }
    return levels;
  }
  std::size_t h = height, w = width;
  for (std::size_t k = 1; k < cfg.pyramid_levels; ++k) {
    h = scaled_extent(h, cfg.pyramid_scale);
    w = scaled_extent(w, cfg.pyramid_scale);
  }
  if (h < kMinPyramidExtent || w < kMinPyramidExtent) {
    throw ConfigError("hs: " + std::to_string(cfg.pyramid_levels) + " levels shrink " +
                      std::to_string(height) + "x" + std::to_string(width) + " below " +
                      std::to_string(kMinPyramidExtent) + "x" + std::to_string(kMinPyramidExtent));
  }
  return cfg.pyramid_levels;
}

FlowField pyramid_flow(const Image& i1, const Image& i2, const HSConfig& cfg) {
  check_pair(i1, i2, "pyramid_flow");
  if (i1.height < 16 || i1.width < 16) {
    throw ShapeError("pyramid_flow: frames must be at least 16x16");
  }
  const std::size_t levels = pyramid_level_count(i1.height, i1.width, cfg);
  const auto p1 = build_pyramid(i1, levels, cfg.pyramid_scale);
  const auto p2 = build_pyramid(i2, levels, cfg.pyramid_scale);

  FlowField flow(p1.back().height, p1.back().width);
  for (std::size_t k = levels; k-- > 0;) {
    const Image& a = p1[k];
    const Image& b = p2[k];
    if (flow.height != a.height || flow.width != a.width) flow = resize_flow(flow, a.height, a.width);
    for (std::size_t warp = 0; warp < cfg.warps_per_level; ++warp) {
      flow = horn_schunck_level(a, b, flow, cfg);
      if (cfg.median_filter) flow = median3(flow);
    }
  }
  return flow;
}

ProxyReport generate_proxy(const DatasetManifest& manifest, const HSConfig& cfg,
                           const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const std::size_t n = manifest.entries.size();
  std::vector<std::string> failure(n);
  std::vector<char> ok(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    try {
      const SamplePair s = load_sample(manifest, e, LoadOptions{});
      const FlowField flow = pyramid_flow(s.i1, s.i2, cfg);
      write_flo_file(out_dir / (e.pair_id + ".flo"), flow);
      ok[i] = 1;
    } catch (const std::exception& ex) {
      failure[i] = ex.what();
    }
  });

  DatasetManifest kept;
  kept.root = manifest.root;
  ProxyReport report;
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (!ok[i]) {
      report.skipped.emplace_back(e.pair_id, failure[i]);
      continue;
    }
    ManifestEntry r = e;
    r.proxy = std::filesystem::absolute(out_dir / (e.pair_id + ".flo"));
    kept.entries.push_back(std::move(r));
    report.written.push_back(e.pair_id);
  }
  report.manifest = rebase_manifest(kept, out_dir);
  save_manifest(report.manifest, out_dir / "manifest.txt");
  return report;
}

}  // namespace gofl
