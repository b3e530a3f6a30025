#include <doctest.h>

#include <cmath>

#include "gofl/errors.hpp"
#include "gofl/trainer.hpp"
#include "support.hpp"

using namespace gofl;

namespace {

// Synthetic pairs whose proxy column points at the exact ground truth.
DatasetManifest labelled_dataset(const test::ScratchDir& dir, std::size_t train_count,
                                 std::size_t test_count, std::uint64_t seed = 1) {
  SyntheticOptions opt;
  opt.train_count = train_count;
  opt.test_count = test_count;
  opt.seed = seed;
  DatasetManifest m = generate_synthetic(opt, dir / "data");
  for (auto& e : m.entries) e.proxy = e.gt;
  return m;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.model.base_channels = 4;
  cfg.batch_size = 2;
  cfg.max_iters = 6;
  cfg.schedule_start = 1000;
  cfg.augment = false;
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("learning-rate schedule") {
    const TrainConfig paper = TrainConfig::profile("paper");
    CHECK(lr_schedule(0, paper) == 1e-4);
    CHECK(lr_schedule(299999, paper) == 1e-4);
    CHECK(lr_schedule(300000, paper) == 5e-5);
    CHECK(lr_schedule(399999, paper) == 5e-5);
    CHECK(lr_schedule(400000, paper) == 2.5e-5);
    CHECK(lr_schedule(599999, paper) == doctest::Approx(6.25e-6));
    const TrainConfig ft = TrainConfig::profile("paper-finetune");
    CHECK(ft.max_iters == 10000);
    CHECK(lr_schedule(0, ft) == 1e-6);
    CHECK(lr_schedule(9999, ft) == 1e-6);
    const TrainConfig desk = TrainConfig::profile("desk");
    CHECK(desk.max_iters == 6000);
    CHECK(lr_schedule(0, desk) == 1.6e-3);
    CHECK(lr_schedule(3000, desk) == 8e-4);
    CHECK(TrainConfig::profile("desk-finetune").max_iters == 1000);
    CHECK_THROWS_AS(TrainConfig::profile("fast"), ConfigError);
  }

  TEST_CASE("learning rate never increases") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      TrainConfig cfg;
      cfg.base_lr = rng.uniform(1e-6, 1e-2);
      cfg.schedule_start = rng.below(500);
      cfg.schedule_period = 1 + rng.below(200);
      double prev = lr_schedule(0, cfg);
      for (std::size_t it = 1; it < 2000; it += 1 + rng.below(20)) {
        const double lr = lr_schedule(it, cfg);
        REQUIRE(lr <= prev);
        REQUIRE(lr >= 0.0);
        prev = lr;
      }
    }
  }

  TEST_CASE("config text round trip") {
    TrainConfig cfg = parse_train_config(
        "# comment\n"
        "profile = desk\n"
        "base_lr = 0.0003\n"
        "seed = 42   # trailing\n"
        "scale_weights = 1, 2, 3, 4, 5\n"
        "augment = false\n");
    CHECK(cfg.base_lr == 3e-4);
    CHECK(cfg.seed == 42);
    CHECK(cfg.max_iters == 6000);
    CHECK(cfg.loss_weights.scale_weights[4] == 5.0);
    CHECK_FALSE(cfg.augment);
    const TrainConfig again = parse_train_config(format_train_config(cfg));
    CHECK(format_train_config(again) == format_train_config(cfg));
    CHECK(again.base_lr == cfg.base_lr);

    const TrainConfig later_profile = parse_train_config("max_iters = 5\nprofile = desk-finetune\n");
    CHECK(later_profile.max_iters == 5);
    CHECK(later_profile.stage == TrainStage::finetune);
  }

  TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_train_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("seed = 1\nseed = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("base_lr = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("base_lr = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("max_iters = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("scale_weights = 1,2,3\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("lambda = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("just words\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("stage = later\n"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("brightness_min = 2\nbrightness_max = 1\n"), ConfigError);
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    test::ScratchDir dir("tr_lr0");
    const DatasetManifest m = labelled_dataset(dir, 2, 0);
    const auto before = init_model<float>({.base_channels = 4}, 3);
    auto params = before.clone();
    auto adam = AdamState<float>::for_params(params.tensors);
    std::vector<SamplePair> batch;
    for (const auto& e : m.entries) batch.push_back(load_sample(m, e, {.proxy = true}));
    const double loss = train_step(params, adam, batch, LossMode::finetune, {}, 0.0f);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
      REQUIRE(test::max_abs_diff(params.tensors[i].values(), before.tensors[i].values()) == 0.0);
    }
  }

  TEST_CASE("returned loss is the combined objective before the update") {
    test::ScratchDir dir("tr_loss");
    const DatasetManifest m = labelled_dataset(dir, 2, 0);
    auto params = init_model<float>({.base_channels = 4}, 5);
    std::vector<SamplePair> batch;
    for (const auto& e : m.entries) batch.push_back(load_sample(m, e, {.proxy = true}));

    std::vector<const Image*> i1, i2;
    std::vector<const FlowField*> proxy;
    for (const auto& s : batch) {
      i1.push_back(&s.i1);
      i2.push_back(&s.i2);
      proxy.push_back(&*s.proxy);
    }
    MultiscaleInputs<float> in;
    in.i1 = images_to_tensor<float>(i1);
    in.i2 = images_to_tensor<float>(i2);
    in.proxy = flows_to_tensor<float>(proxy);
    in.preds = forward(params.clone(false), in.i1, in.i2);
    const LossWeights w;
    const auto terms = multiscale_terms(in, w, LossMode::finetune);
    double expect = 0.0;
    for (std::size_t k = 0; k < kPredictionScales; ++k) {
      expect += w.scale_weights[k] * (terms.epe[k].item() + 0.1 * terms.reconstruction[k].item());
    }
    auto adam = AdamState<float>::for_params(params.tensors);
    const double loss = train_step(params, adam, batch, LossMode::finetune, w, 1e-4f);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-5));
  }

  TEST_CASE("training overfits a handful of pairs") {
    test::ScratchDir dir("tr_overfit");
    const DatasetManifest m = labelled_dataset(dir, 4, 0, 7);
    TrainConfig cfg = small_config();
    cfg.model.base_channels = 8;
    cfg.batch_size = 4;
    cfg.max_iters = 500;
    cfg.base_lr = 1e-3;
    const TrainResult r = train_guided(m, cfg);
    REQUIRE(r.report.losses.size() == 500);
    double tail = 0.0;
    for (std::size_t i = 490; i < 500; ++i) tail += r.report.losses[i];
    tail /= 10;
    MESSAGE("first loss " << r.report.losses.front() << ", final " << tail);
    CHECK(tail < 0.2 * r.report.losses.front());
  }

  TEST_CASE("ground-truth paths are never read during training") {
    test::ScratchDir dir("tr_nogt");
    DatasetManifest m = labelled_dataset(dir, 2, 0);
    for (auto& e : m.entries) e.gt = std::filesystem::path("does/not/exist.flo");
    TrainConfig cfg = small_config();
    cfg.max_iters = 2;
    CHECK_NOTHROW(train_guided(m, cfg));
  }

  TEST_CASE("a missing proxy stops training before the first step") {
    test::ScratchDir dir("tr_noproxy");
    DatasetManifest m = labelled_dataset(dir, 3, 0);
    m.entries[2].proxy.reset();
    std::size_t steps = 0;
    TrainOptions opt;
    opt.on_iteration = [&](std::size_t, double, double) { ++steps; };
    try {
      train_guided(m, small_config(), opt);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("pair_00002") != std::string::npos);
    }
    CHECK(steps == 0);
  }

  TEST_CASE("fine-tuning without reconstruction matches guided continuation") {
    test::ScratchDir dir("tr_lambda0");
    const DatasetManifest m = labelled_dataset(dir, 3, 0);
    const auto start = init_model<float>({.base_channels = 4}, 8);
    TrainConfig guided = small_config();
    guided.augment = true;
    guided.base_lr = 1e-4;
    guided.loss_weights.lambda = 0.0;
    TrainConfig ft = guided;
    ft.stage = TrainStage::finetune;
    const TrainResult a = train(start.clone(), m, guided);
    const TrainResult b = finetune(start, m, ft);
    CHECK(a.report.losses == b.report.losses);
    for (std::size_t i = 0; i < a.params.tensors.size(); ++i) {
      REQUIRE(test::max_abs_diff(a.params.tensors[i].values(), b.params.tensors[i].values()) == 0.0);
    }
  }

  TEST_CASE("training is deterministic and writes its outputs") {
    test::ScratchDir dir("tr_det");
    const DatasetManifest m = labelled_dataset(dir, 3, 2);
    TrainConfig cfg = small_config();
    cfg.augment = true;
    cfg.eval_every = 3;
    cfg.checkpoint_every = 2;
    const TrainResult a = train_guided(m, cfg, {.out_dir = dir / "a"});
    const TrainResult b = train_guided(m, cfg, {.out_dir = dir / "b"});
    CHECK(a.report.losses == b.report.losses);
    CHECK(a.report.eval_epe.size() == 2);
    CHECK(a.report.eval_epe == b.report.eval_epe);
    CHECK(read_file(dir / "a/final.gofl") == read_file(dir / "b/final.gofl"));
    CHECK(read_file(dir / "a/train_log.txt") == read_file(dir / "b/train_log.txt"));
    CHECK(std::filesystem::exists(dir / "a/ckpt_000002.gofl"));
    CHECK(std::filesystem::exists(dir / "a/ckpt_000004.gofl"));
    CHECK_FALSE(std::filesystem::exists(dir / "a/ckpt_000006.gofl"));
    CHECK(std::filesystem::exists(dir / "a/summary.tsv"));
    const Checkpoint c = load_checkpoint(dir / "a/final.gofl");
    CHECK(c.adam.has_value());
    CHECK(c.adam->step == 6);

    TrainConfig other = cfg;
    other.seed = 1;
    CHECK(train_guided(m, other).report.losses != a.report.losses);
  }

  TEST_CASE("evaluation with stub predictors") {
    test::ScratchDir dir("tr_eval");
    Image img(4, 4);
    write_image_file(dir / "a.pgm", img);
    write_flo_file(dir / "g1.flo", FlowField(4, 4, 3.0f, 4.0f));
    FlowField mixed(4, 4);
    for (std::size_t i = 0; i < 16; ++i) mixed.u[i] = float(i);
    write_flo_file(dir / "g2.flo", mixed);
    const DatasetManifest m = parse_manifest(
        "p1\ttest\ta.pgm\ta.pgm\tg1.flo\n"
        "p2\ttest\ta.pgm\ta.pgm\tg2.flo\n"
        "p3\ttrain\ta.pgm\ta.pgm\n",
        dir.path());

    const EvalReport exact = evaluate([](const SamplePair& s) { return *s.gt; }, m, Split::test);
    CHECK(exact.mean_epe == 0.0);
    REQUIRE(exact.pairs.size() == 2);
    CHECK(exact.pairs[0].zero_flow_epe == doctest::Approx(5.0));
    CHECK(exact.pairs[1].zero_flow_epe == doctest::Approx(7.5));
    CHECK(exact.zero_flow_epe == doctest::Approx(6.25));

    const EvalReport zero =
        evaluate([](const SamplePair& s) { return FlowField(s.i1.height, s.i1.width); }, m, Split::test);
    CHECK(zero.pairs[0].epe == doctest::Approx(5.0));
    CHECK(std::abs(zero.mean_epe - (zero.pairs[0].epe + zero.pairs[1].epe) / 2) < 1e-9);

    try {
      evaluate([](const SamplePair& s) { return *s.gt; }, m, Split::train);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("p3") != std::string::npos);
    }
    CHECK(format_eval_summary(zero).find("mean_epe\t") != std::string::npos);
    CHECK(format_eval_table(zero).find("p2") != std::string::npos);
  }

  TEST_CASE("evaluating exact proxies gives zero error") {
    test::ScratchDir dir("tr_evalproxy");
    const DatasetManifest m = labelled_dataset(dir, 1, 2);
    const EvalReport r = evaluate_proxy(m, Split::test);
    CHECK(r.mean_epe == 0.0);
    CHECK(r.pairs.size() == 2);
    const EvalReport net = evaluate(init_model<float>({.base_channels = 4}, 1), m, Split::test);
    CHECK(std::isfinite(net.mean_epe));
    CHECK(net.zero_flow_epe == r.zero_flow_epe);
  }
}
