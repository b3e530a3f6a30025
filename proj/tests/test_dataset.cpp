#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gofl/dataset.hpp"
#include "gofl/errors.hpp"
#include "gofl/warping.hpp"
#include "support.hpp"

using namespace gofl;

namespace {

SamplePair random_sample(Rng& rng, std::size_t h, std::size_t w) {
  SamplePair s;
  s.pair_id = "x";
  s.i1 = Image(h, w);
  s.i2 = Image(h, w);
  for (auto& v : s.i1.data) v = static_cast<float>(rng.uniform());
  for (auto& v : s.i2.data) v = static_cast<float>(rng.uniform());
  FlowField f(h, w);
  for (auto& v : f.u) v = static_cast<float>(rng.uniform(-4, 4));
  for (auto& v : f.v) v = static_cast<float>(rng.uniform(-4, 4));
  s.gt = f;
  s.proxy = f;
  return s;
}

double rho(double x) { return std::pow(x * x + 1e-6, 0.25); }

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("background-only translation has constant flow") {
    SceneSpec scene;
    scene.background.seed = 3;
    scene.background_motion.tx = 3;
    scene.background_motion.ty = -2;
    const RenderedPair r = render_scene(scene);
    for (std::size_t i = 0; i < r.flow.pixel_count(); ++i) {
      REQUIRE(r.flow.u[i] == 3.0f);
      REQUIRE(r.flow.v[i] == -2.0f);
    }
    // Frame 2 is frame 1 moved: I2(x + 3, y - 2) = I1(x, y).
    for (std::size_t y = 2; y < 64; ++y) {
      for (std::size_t x = 0; x + 3 < 64; ++x) {
        REQUIRE(r.i2.at(y - 2, x + 3) == doctest::Approx(r.i1.at(y, x)).epsilon(1e-6));
      }
    }
    CHECK(r.visible[0 * 64 + 63] == 0);
    CHECK(r.visible[10 * 64 + 10] == 1);
  }

  TEST_CASE("scenes are deterministic in seed and index") {
    const RenderedPair a = render_scene(sample_scene(64, 64, 5, 2));
    const RenderedPair b = render_scene(sample_scene(64, 64, 5, 2));
    const RenderedPair c = render_scene(sample_scene(64, 64, 5, 3));
    CHECK(a.i1 == b.i1);
    CHECK(a.i2 == b.i2);
    CHECK(a.flow == b.flow);
    CHECK(a.visible == b.visible);
    CHECK_FALSE(a.i1 == c.i1);
  }

  TEST_CASE("sampled scenes stay within their motion ranges") {
    for (std::uint64_t index = 0; index < 40; ++index) {
      const SceneSpec s = sample_scene(64, 64, 11, index);
      CHECK(s.sprites.size() >= 1);
      CHECK(s.sprites.size() <= 3);
      std::vector<LayerMotion> motions{s.background_motion};
      for (const auto& sp : s.sprites) motions.push_back(sp.motion);
      for (const auto& m : motions) {
        CHECK(std::hypot(m.tx, m.ty) <= 12.0 + 1e-9);
        CHECK(std::abs(m.rotation_deg) <= 10.0);
        CHECK(m.scale >= 0.95);
        CHECK(m.scale <= 1.05);
        const auto p = m.apply(20.0, 30.0);
        const auto q = m.inverse(p[0], p[1]);
        CHECK(q[0] == doctest::Approx(20.0));
        CHECK(q[1] == doctest::Approx(30.0));
        const auto d = m.displacement(20.0, 30.0);
        CHECK(d[0] == doctest::Approx(p[0] - 20.0));
      }
    }
  }

  TEST_CASE("ground truth reconstructs frame 1 on visible pixels") {
    for (std::uint64_t index = 0; index < 8; ++index) {
      const RenderedPair r = render_scene(sample_scene(64, 64, 21, index));
      const Image warped = warp_image(r.i2, r.flow);
      double acc = 0.0;
      std::size_t n = 0;
      for (std::size_t y = 1; y < 63; ++y) {
        for (std::size_t x = 1; x < 63; ++x) {
          const std::size_t i = y * 64 + x;
          if (!r.visible[i]) continue;
          acc += rho(r.i1.data[i] - warped.data[i]);
          ++n;
        }
      }
      REQUIRE(n > 64 * 64 / 4);
      CHECK(acc / double(n) < 2 * rho(0.02));
    }
  }

  TEST_CASE("flip and crop keep labels consistent") {
    Rng rng(3);
    const SamplePair s = random_sample(rng, 6, 7);
    const SamplePair ff = flip_horizontal(flip_horizontal(s));
    CHECK(ff.i1 == s.i1);
    CHECK(ff.i2 == s.i2);
    CHECK(*ff.gt == *s.gt);
    CHECK(*ff.proxy == *s.proxy);

    const SamplePair f = flip_horizontal(s);
    for (std::size_t y = 0; y < 6; ++y) {
      for (std::size_t x = 0; x < 7; ++x) {
        const std::size_t i = y * 7 + x, j = y * 7 + (6 - x);
        REQUIRE(f.i1.data[i] == s.i1.data[j]);
        REQUIRE(f.gt->u[i] == -s.gt->u[j]);
        REQUIRE(f.gt->v[i] == s.gt->v[j]);
      }
    }

    const SamplePair c = crop(s, 1, 2, 3, 4);
    CHECK(c.i1.height == 3);
    CHECK(c.i1.width == 4);
    for (std::size_t y = 0; y < 3; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        REQUIRE(c.gt->u[y * 4 + x] == s.gt->u[(y + 1) * 7 + x + 2]);
        REQUIRE(c.i2.at(y, x) == s.i2.at(y + 1, x + 2));
      }
    }
    CHECK_THROWS_AS(crop(s, 4, 0, 3, 4), ShapeError);
  }

  TEST_CASE("flipping a uniform field negates u") {
    SamplePair s;
    s.i1 = Image(4, 4);
    s.i2 = Image(4, 4);
    s.gt = FlowField(4, 4, 2.0f, 1.0f);
    const SamplePair f = flip_horizontal(s);
    CHECK(*f.gt == FlowField(4, 4, -2.0f, 1.0f));
  }

  TEST_CASE("augmentation is a photometric map when geometry is off") {
    Rng rng(8);
    const SamplePair s = random_sample(rng, 8, 8);
    AugmentConfig cfg;
    cfg.flip_probability = 0;
    cfg.noise_sigma_max = 0;
    cfg.brightness_min = cfg.brightness_max = 1.2;
    const SamplePair a = augment(s, 99, cfg);
    CHECK(*a.gt == *s.gt);
    for (std::size_t i = 0; i < 64; ++i) {
      REQUIRE(a.i1.data[i] == static_cast<float>(std::clamp(s.i1.data[i] * 1.2, 0.0, 1.0)));
    }
  }

  TEST_CASE("augmentation is deterministic and stays in range") {
    Rng rng(9);
    const SamplePair s = random_sample(rng, 16, 16);
    AugmentConfig cfg;
    cfg.crop_height = 8;
    cfg.crop_width = 12;
    std::set<bool> flips;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const SamplePair a = augment(s, seed, cfg);
      const SamplePair b = augment(s, seed, cfg);
      REQUIRE(a.i1 == b.i1);
      REQUIRE(*a.gt == *b.gt);
      REQUIRE(a.i1.height == 8);
      REQUIRE(a.gt->width == 12);
      for (float v : a.i2.data) REQUIRE((v >= 0.0f && v <= 1.0f));
      // Labels are a crop of either the original or the mirrored field.
      const float u0 = a.gt->u[0];
      bool found_plain = false, found_flip = false;
      for (std::size_t i = 0; i < 256; ++i) {
        found_plain |= s.gt->u[i] == u0;
        found_flip |= -s.gt->u[i] == u0;
      }
      REQUIRE((found_plain || found_flip));
      flips.insert(found_flip && !found_plain);
    }
    CHECK(flips.size() == 2);
    cfg.crop_height = 32;
    CHECK_THROWS_AS(augment(s, 0, cfg), ShapeError);
  }

  TEST_CASE("flow downsampling") {
    CHECK(downsample_flow(FlowField(8, 8, 4.0f, 8.0f), 4) == FlowField(2, 2, 1.0f, 2.0f));
    Rng rng(10);
    FlowField f(8, 12);
    for (auto& v : f.u) v = static_cast<float>(rng.uniform(-5, 5));
    for (auto& v : f.v) v = static_cast<float>(rng.uniform(-5, 5));
    CHECK(downsample_flow(f, 1) == f);
    const FlowField d = downsample_flow(f, 2);
    for (std::size_t oy = 0; oy < 4; ++oy) {
      for (std::size_t ox = 0; ox < 6; ++ox) {
        double su = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) su += f.u[(oy * 2 + dy) * 12 + ox * 2 + dx];
        }
        REQUIRE(d.u[oy * 6 + ox] == doctest::Approx(su / 4 / 2).epsilon(1e-6));
      }
    }
    CHECK_THROWS_AS(downsample_flow(f, 5), ShapeError);
  }

  TEST_CASE("masked downsampling averages valid pixels only") {
    FlowField f(2, 2, 0.0f, 0.0f);
    f.u = {2, 100, 4, 100};
    f.valid = {1, 0, 1, 0};
    const FlowField d = downsample_flow(f, 2);
    CHECK(d.u[0] == doctest::Approx(1.5));
    CHECK(d.valid == std::vector<std::uint8_t>{1});
  }

  TEST_CASE("constant flow survives a down and up round trip") {
    const FlowField f(16, 16, 2.5f, -1.0f);
    for (std::size_t factor : {2u, 4u}) {
      const FlowField r = upsample_flow(downsample_flow(f, factor), factor);
      REQUIRE(r.height == 16);
      for (std::size_t i = 0; i < r.pixel_count(); ++i) {
        REQUIRE(r.u[i] == doctest::Approx(2.5f));
        REQUIRE(r.v[i] == doctest::Approx(-1.0f));
      }
    }
    const FlowField r = resize_flow(FlowField(4, 4, 1.0f, 1.0f), 8, 16);
    CHECK(r.u[5] == doctest::Approx(4.0f));
    CHECK(r.v[5] == doctest::Approx(2.0f));
  }

  TEST_CASE("manifest parsing and formatting") {
    const std::string text =
        "# comment\n"
        "a\ttrain\ti/a1.pgm\ti/a2.pgm\n"
        "b\ttest\ti/b1.pgm\ti/b2.pgm\tf/b.flo\n"
        "c\ttrain\ti/c1.pgm\ti/c2.pgm\t-\tp/c.flo\n";
    const DatasetManifest m = parse_manifest(text, "/data");
    REQUIRE(m.entries.size() == 3);
    CHECK_FALSE(m.entries[0].gt);
    CHECK(m.entries[1].split == Split::test);
    CHECK(*m.entries[1].gt == "f/b.flo");
    CHECK_FALSE(m.entries[2].gt);
    CHECK(*m.entries[2].proxy == "p/c.flo");
    CHECK(m.resolve("i/a1.pgm") == std::filesystem::path("/data/i/a1.pgm"));
    CHECK(m.select(Split::train).size() == 2);
    CHECK(m.find("b").img1 == "i/b1.pgm");
    CHECK_THROWS_AS(m.find("zzz"), DataError);

    const DatasetManifest again = parse_manifest(format_manifest(m), "/data");
    REQUIRE(again.entries.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(again.entries[i].pair_id == m.entries[i].pair_id);
      CHECK(again.entries[i].gt == m.entries[i].gt);
      CHECK(again.entries[i].proxy == m.entries[i].proxy);
    }
  }

  TEST_CASE("malformed manifests are rejected") {
    CHECK_THROWS_AS(parse_manifest("a\ttrain\tx.pgm\n", "."), FormatError);
    CHECK_THROWS_AS(parse_manifest("a\tvalidation\tx\ty\n", "."), FormatError);
    CHECK_THROWS_AS(parse_manifest("a\ttrain\tx\ty\na\ttest\tx\ty\n", "."), FormatError);
    CHECK_THROWS_AS(parse_manifest("a\ttrain\tx\ty\tg\tp\textra\n", "."), FormatError);
    CHECK_THROWS_AS(parse_split("val"), ConfigError);
  }

  TEST_CASE("missing files name the entry") {
    test::ScratchDir dir("manifest");
    const std::string text = "only\ttrain\tnope1.pgm\tnope2.pgm\n";
    write_file(dir / "m.txt", Bytes(text.begin(), text.end()));
    try {
      load_manifest(dir / "m.txt");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("only") != std::string::npos);
    }
    const DatasetManifest m = parse_manifest(text, dir.path());
    try {
      load_sample(m, m.entries[0], {});
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("only") != std::string::npos);
    }
  }

  TEST_CASE("synthetic generation writes a loadable dataset") {
    test::ScratchDir dir("synth");
    SyntheticOptions opt;
    opt.train_count = 3;
    opt.test_count = 2;
    opt.seed = 12;
    const DatasetManifest m = generate_synthetic(opt, dir / "d");
    const DatasetManifest loaded = load_manifest(dir / "d/manifest.txt");
    REQUIRE(loaded.entries.size() == 5);
    CHECK(loaded.select(Split::test).size() == 2);
    const SamplePair s = load_sample(loaded, loaded.find("pair_00001"), {.gt = true});
    const RenderedPair r = render_scene(sample_scene(64, 64, 12, 1));
    CHECK(*s.gt == r.flow);
    for (std::size_t i = 0; i < r.i1.data.size(); ++i) {
      REQUIRE(std::abs(s.i1.data[i] - r.i1.data[i]) <= 0.5f / 255 + 1e-6f);
    }
    CHECK_THROWS_AS(load_sample(loaded, loaded.entries[0], {.proxy = true}), DataError);

    const DatasetManifest moved = rebase_manifest(loaded, dir / "elsewhere");
    CHECK(moved.resolve(moved.entries[0].img1).lexically_normal() ==
          loaded.resolve(loaded.entries[0].img1).lexically_normal());

    opt.height = 96;
    CHECK_THROWS_AS(generate_synthetic(opt, dir / "bad"), ShapeError);
  }

  TEST_CASE("batch sampler") {
    BatchSampler single(3, 1, 7);
    std::set<std::size_t> seen;
    for (int i = 0; i < 3; ++i) {
      const auto b = single.next();
      REQUIRE(b.size() == 1);
      seen.insert(b[0]);
    }
    CHECK(seen.size() == 3);
    CHECK(single.batches_per_epoch() == 3);

    BatchSampler a(10, 4, 5), b(10, 4, 5);
    std::vector<std::size_t> sizes;
    for (int i = 0; i < 6; ++i) {
      const auto x = a.next();
      CHECK(x == b.next());
      sizes.push_back(x.size());
    }
    CHECK(sizes == std::vector<std::size_t>{4, 4, 2, 4, 4, 2});
    CHECK(a.epoch() == 1);

    BatchSampler ordered(5, 5, 0, false);
    CHECK(ordered.next() == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(BatchSampler(0, 1, 0), DataError);
    CHECK_THROWS_AS(BatchSampler(3, 0, 0), ConfigError);
  }

  TEST_CASE("data loader draws from one split") {
    test::ScratchDir dir("loader");
    SyntheticOptions opt;
    opt.train_count = 3;
    opt.test_count = 1;
    const DatasetManifest m = generate_synthetic(opt, dir / "d");
    DataLoader loader(m, Split::test, {.gt = true}, 2, 1);
    CHECK(loader.samples().size() == 1);
    const auto batch = loader.next_batch();
    REQUIRE(batch.size() == 1);
    CHECK(batch[0]->pair_id == "pair_00003");
    DataLoader train(m, Split::train, {}, 2, 1);
    CHECK(train.batches_per_epoch() == 2);
    DatasetManifest none = m;
    none.entries.resize(3);
    CHECK_THROWS_AS(DataLoader(none, Split::test, {}, 1, 0), DataError);
  }
}
