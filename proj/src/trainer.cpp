#include "gofl/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "gofl/errors.hpp"
#include "gofl/parallel.hpp"
#include "gofl/random.hpp"

namespace gofl {

namespace fs = std::filesystem;

std::string_view stage_name(TrainStage stage) {
  switch (stage) {
    case TrainStage::guided: return "guided";
    case TrainStage::finetune: return "finetune";
    case TrainStage::joint: return "joint";
  }
  return "guided";
}

TrainStage parse_stage(std::string_view text) {
  if (text == "guided") return TrainStage::guided;
  if (text == "finetune") return TrainStage::finetune;
  if (text == "joint") return TrainStage::joint;
  throw ConfigError("unknown stage '" + std::string(text) + "' (expected guided, finetune or joint)");
}

void TrainConfig::validate() const {
  if (max_iters == 0) throw ConfigError("max_iters must be positive");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (stage != TrainStage::finetune && schedule_period == 0) {
    throw ConfigError("schedule_period must be positive");
  }
  loss_weights.validate();
  model.validate();
  const AugmentConfig& a = augmentation;
  if (!(a.flip_probability >= 0.0 && a.flip_probability <= 1.0)) {
    throw ConfigError("flip_probability must lie in [0, 1]");
  }
  if (!(a.noise_sigma_max >= 0.0)) throw ConfigError("noise_sigma_max must be non-negative");
  if (!(a.brightness_min > 0.0 && a.brightness_min <= a.brightness_max)) {
    throw ConfigError("brightness range must satisfy 0 < brightness_min <= brightness_max");
  }
}

TrainConfig TrainConfig::profile(std::string_view name) {
  TrainConfig cfg;
  if (name == "paper") {
    cfg.base_lr = 1e-4;
    cfg.max_iters = 600000;
    cfg.schedule_start = 300000;
    cfg.schedule_period = 100000;
  } else if (name == "desk") {
    // defaults
  } else if (name == "paper-finetune" || name == "desk-finetune") {
    cfg.stage = TrainStage::finetune;
    cfg.base_lr = 1e-6;
    cfg.max_iters = name == "paper-finetune" ? 10000 : 1000;
  } else {
    throw ConfigError("unknown profile '" + std::string(name) +
                      "' (expected paper, paper-finetune, desk or desk-finetune)");
  }
  return cfg;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename N>
N parse_number(std::string_view key, std::string_view text) {
  N value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true or false");
}

std::string number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    kv.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }

  TrainConfig cfg;
  for (const auto& [k, v] : kv) {
    if (k == "profile") cfg = TrainConfig::profile(v);
  }
  std::map<std::string, bool> seen;
  for (const auto& [key, value] : kv) {
    if (seen[key]) throw ConfigError("config key '" + key + "' given twice");
    seen[key] = true;
    auto size = [&] { return parse_number<std::size_t>(key, value); };
    auto real = [&] { return parse_number<double>(key, value); };
    if (key == "profile") {
    } else if (key == "stage") {
      cfg.stage = parse_stage(value);
    } else if (key == "base_lr") {
      cfg.base_lr = real();
    } else if (key == "max_iters") {
      cfg.max_iters = size();
    } else if (key == "schedule_start") {
      cfg.schedule_start = size();
    } else if (key == "schedule_period") {
      cfg.schedule_period = size();
    } else if (key == "batch_size") {
      cfg.batch_size = size();
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "eval_every") {
      cfg.eval_every = size();
    } else if (key == "checkpoint_every") {
      cfg.checkpoint_every = size();
    } else if (key == "lambda") {
      cfg.loss_weights.lambda = real();
    } else if (key == "alpha") {
      cfg.loss_weights.alpha = real();
    } else if (key == "epsilon") {
      cfg.loss_weights.epsilon = real();
    } else if (key == "scale_weights") {
      std::string_view rest = value;
      for (std::size_t i = 0; i < kPredictionScales; ++i) {
        const auto comma = rest.find(',');
        if ((comma == std::string_view::npos) != (i + 1 == kPredictionScales)) {
          throw ConfigError("config key 'scale_weights': expected 5 comma-separated values");
        }
        cfg.loss_weights.scale_weights[i] = parse_number<double>(key, trim(rest.substr(0, comma)));
        if (comma != std::string_view::npos) rest = rest.substr(comma + 1);
      }
    } else if (key == "base_channels") {
      cfg.model.base_channels = size();
    } else if (key == "image_channels") {
      cfg.model.image_channels = size();
    } else if (key == "augment") {
      cfg.augment = parse_bool(key, value);
    } else if (key == "flip_probability") {
      cfg.augmentation.flip_probability = real();
    } else if (key == "crop_height") {
      cfg.augmentation.crop_height = size();
    } else if (key == "crop_width") {
      cfg.augmentation.crop_width = size();
    } else if (key == "noise_sigma_max") {
      cfg.augmentation.noise_sigma_max = real();
    } else if (key == "brightness_min") {
      cfg.augmentation.brightness_min = real();
    } else if (key == "brightness_max") {
      cfg.augmentation.brightness_max = real();
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const fs::path& path) {
  const Bytes bytes = read_file(path);
  return parse_train_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string out;
  auto line = [&](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  line("stage", std::string(stage_name(cfg.stage)));
  line("base_lr", number(cfg.base_lr));
  line("max_iters", std::to_string(cfg.max_iters));
  line("schedule_start", std::to_string(cfg.schedule_start));
  line("schedule_period", std::to_string(cfg.schedule_period));
  line("batch_size", std::to_string(cfg.batch_size));
  line("seed", std::to_string(cfg.seed));
  line("eval_every", std::to_string(cfg.eval_every));
  line("checkpoint_every", std::to_string(cfg.checkpoint_every));
  line("lambda", number(cfg.loss_weights.lambda));
  line("alpha", number(cfg.loss_weights.alpha));
  line("epsilon", number(cfg.loss_weights.epsilon));
  std::string weights;
  for (std::size_t i = 0; i < kPredictionScales; ++i) {
    if (i) weights += ',';
    weights += number(cfg.loss_weights.scale_weights[i]);
  }
  line("scale_weights", weights);
  line("base_channels", std::to_string(cfg.model.base_channels));
  line("image_channels", std::to_string(cfg.model.image_channels));
  line("augment", cfg.augment ? "true" : "false");
  line("flip_probability", number(cfg.augmentation.flip_probability));
  line("crop_height", std::to_string(cfg.augmentation.crop_height));
  line("crop_width", std::to_string(cfg.augmentation.crop_width));
  line("noise_sigma_max", number(cfg.augmentation.noise_sigma_max));
  line("brightness_min", number(cfg.augmentation.brightness_min));
  line("brightness_max", number(cfg.augmentation.brightness_max));
  return out;
}

double lr_schedule(std::size_t iter, const TrainConfig& cfg) {
  if (cfg.stage == TrainStage::finetune || iter < cfg.schedule_start) return cfg.base_lr;
  const std::size_t halvings = (iter - cfg.schedule_start) / cfg.schedule_period + 1;
  return std::ldexp(cfg.base_lr, -static_cast<int>(std::min<std::size_t>(halvings, 2000)));
}

// --- training -----------------------------------------------------------------

double train_step(ModelParams<float>& params, AdamState<float>& adam,
                  const std::vector<SamplePair>& batch, LossMode mode, const LossWeights& weights,
                  float lr) {
  std::vector<const Image*> i1, i2;
  std::vector<const FlowField*> proxy;
  for (const auto& s : batch) {
    if (!s.proxy) throw DataError("train_step: sample '" + s.pair_id + "' has no proxy flow");
    i1.push_back(&s.i1);
    i2.push_back(&s.i2);
    proxy.push_back(&*s.proxy);
  }
  MultiscaleInputs<float> in;
  in.i1 = images_to_tensor<float>(i1);
  in.i2 = images_to_tensor<float>(i2);
  in.proxy = flows_to_tensor<float>(proxy);
  params.zero_grad();
  in.preds = forward(params, in.i1, in.i2);
  const Tensor<float> loss = multiscale_loss(in, weights, mode);
  backward(loss);
  adam_step(params.tensors, adam, lr);
  return static_cast<double>(loss.item());
}

namespace {

double proxy_epe(const ModelParams<float>& params, const std::vector<SamplePair>& samples) {
  const ModelParams<float> frozen = params.clone(false);
  std::vector<double> epe(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    epe[i] = epe_metric(predict_full(frozen, samples[i].i1, samples[i].i2), *samples[i].proxy);
  });
  double total = 0.0;
  for (double e : epe) total += e;
  return total / static_cast<double>(epe.size());
}

}  // namespace

TrainResult train(ModelParams<float> params, const DatasetManifest& manifest,
                  const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  for (const ManifestEntry* e : manifest.select(Split::train)) {
    if (!e->proxy) throw DataError("train entry '" + e->pair_id + "' has no proxy flow");
  }
  LoadOptions load;
  load.proxy = true;
  load.grayscale = params.config.image_channels == 1;

  std::vector<SamplePair> eval_samples;
  if (cfg.eval_every > 0) {
    for (const ManifestEntry* e : manifest.select(Split::test)) {
      if (e->proxy) eval_samples.push_back(load_sample(manifest, *e, load));
    }
    if (eval_samples.empty()) {
      throw DataError("eval_every is set but no test entry carries a proxy flow");
    }
  }
  DataLoader loader(manifest, Split::train, load, cfg.batch_size, derive_seed(cfg.seed, 0xda7a));

  const LossMode mode = cfg.stage == TrainStage::guided ? LossMode::guided : LossMode::finetune;
  TrainResult result;
  result.adam = AdamState<float>::for_params(params.tensors);
  TrainReport& report = result.report;
  if (options.out_dir) fs::create_directories(*options.out_dir);

  const auto start = std::chrono::steady_clock::now();
  std::vector<SamplePair> batch;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const auto picked = loader.next_batch();
    batch.clear();
    for (std::size_t slot = 0; slot < picked.size(); ++slot) {
      batch.push_back(cfg.augment
                          ? augment(*picked[slot], derive_seed(cfg.seed, it, slot), cfg.augmentation)
                          : *picked[slot]);
    }
    const double lr = lr_schedule(it, cfg);
    const double loss = train_step(params, result.adam, batch, mode, cfg.loss_weights,
                                   static_cast<float>(lr));
    report.losses.push_back(loss);
    report.learning_rates.push_back(lr);
    if (options.on_iteration) options.on_iteration(it, loss, lr);
    const std::size_t done = it + 1;
    if (cfg.eval_every > 0 && done % cfg.eval_every == 0) {
      report.eval_epe.emplace_back(done, proxy_epe(params, eval_samples));
    }
    if (options.out_dir && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 &&
        done != cfg.max_iters) {
      char name[48];
      std::snprintf(name, sizeof(name), "ckpt_%06zu.gofl", done);
      save_checkpoint(*options.out_dir / name, params, &result.adam);
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (options.out_dir) {
    report.final_checkpoint = *options.out_dir / "final.gofl";
    save_checkpoint(report.final_checkpoint, params, &result.adam);
    const std::string log = format_train_log(report);
    write_file(*options.out_dir / "train_log.txt", Bytes(log.begin(), log.end()));
    const std::string summary = format_train_summary(report, cfg);
    write_file(*options.out_dir / "summary.tsv", Bytes(summary.begin(), summary.end()));
  }
  result.params = std::move(params);
  return result;
}

TrainResult train_guided(const DatasetManifest& manifest, const TrainConfig& cfg,
                         const TrainOptions& options) {
  cfg.validate();
  return train(init_model<float>(cfg.model, cfg.seed), manifest, cfg, options);
}

TrainResult finetune(const ModelParams<float>& params, const DatasetManifest& manifest,
                     const TrainConfig& cfg, const TrainOptions& options) {
  return train(params.clone(true), manifest, cfg, options);
}

// --- evaluation ---------------------------------------------------------------

namespace {

EvalReport evaluate_with(const FlowPredictor& predict, const DatasetManifest& manifest, Split split,
                         LoadOptions load) {
  const auto entries = manifest.select(split);
  if (entries.empty()) {
    throw DataError("manifest has no " + std::string(split_name(split)) + " entries");
  }
  for (const ManifestEntry* e : entries) {
    if (!e->gt) throw DataError("pair '" + e->pair_id + "' has no ground-truth flow");
  }
  load.gt = true;
  EvalReport report;
  report.split = split;
  report.pairs.resize(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const SamplePair sample = load_sample(manifest, *entries[i], load);
    const FlowField pred = predict(sample);
    if (pred.height != sample.gt->height || pred.width != sample.gt->width) {
      throw ShapeError("pair '" + sample.pair_id + "': prediction extents differ from ground truth");
    }
    PairEpe& p = report.pairs[i];
    p.pair_id = sample.pair_id;
    p.epe = epe_metric(pred, *sample.gt);
    p.zero_flow_epe = epe_metric(FlowField(pred.height, pred.width), *sample.gt);
  });
  for (const PairEpe& p : report.pairs) {
    report.mean_epe += p.epe;
    report.zero_flow_epe += p.zero_flow_epe;
  }
  report.mean_epe /= static_cast<double>(report.pairs.size());
  report.zero_flow_epe /= static_cast<double>(report.pairs.size());
  return report;
}

}  // namespace

EvalReport evaluate(const FlowPredictor& predict, const DatasetManifest& manifest, Split split) {
  return evaluate_with(predict, manifest, split, LoadOptions{});
}

EvalReport evaluate(const ModelParams<float>& params, const DatasetManifest& manifest, Split split) {
  const ModelParams<float> frozen = params.clone(false);
  LoadOptions load;
  load.grayscale = params.config.image_channels == 1;
  return evaluate_with(
      [&](const SamplePair& s) { return predict_full(frozen, s.i1, s.i2); }, manifest, split, load);
}

EvalReport evaluate_proxy(const DatasetManifest& manifest, Split split) {
  for (const ManifestEntry* e : manifest.select(split)) {
    if (!e->proxy) throw DataError("pair '" + e->pair_id + "' has no proxy flow");
  }
  LoadOptions load;
  load.proxy = true;
  return evaluate_with([](const SamplePair& s) { return *s.proxy; }, manifest, split, load);
}

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string format_eval_summary(const EvalReport& report) {
  std::string out = "metric\tvalue\n";
  out += "split\t" + std::string(split_name(report.split)) + "\n";
  out += "pairs\t" + std::to_string(report.pairs.size()) + "\n";
  out += "mean_epe\t" + fixed(report.mean_epe) + "\n";
  out += "zero_flow_epe\t" + fixed(report.zero_flow_epe) + "\n";
  return out;
}

std::string format_eval_table(const EvalReport& report) {
  std::string out = "pair_id\tepe\tzero_flow_epe\n";
  for (const PairEpe& p : report.pairs) {
    out += p.pair_id + "\t" + fixed(p.epe) + "\t" + fixed(p.zero_flow_epe) + "\n";
  }
  return out;
}

std::string format_train_summary(const TrainReport& report, const TrainConfig& cfg) {
  std::string out = "metric\tvalue\n";
  out += "stage\t" + std::string(stage_name(cfg.stage)) + "\n";
  out += "iterations\t" + std::to_string(report.losses.size()) + "\n";
  if (!report.losses.empty()) {
    out += "first_loss\t" + fixed(report.losses.front(), 9) + "\n";
    out += "final_loss\t" + fixed(report.losses.back(), 9) + "\n";
    out += "final_lr\t" + number(report.learning_rates.back()) + "\n";
  }
  if (!report.eval_epe.empty()) {
    out += "final_proxy_epe\t" + fixed(report.eval_epe.back().second) + "\n";
  }
  out += "checkpoint\t" + report.final_checkpoint.filename().string() + "\n";
  out += "wall_seconds\t" + fixed(report.wall_seconds, 3) + "\n";
  return out;
}

std::string format_train_log(const TrainReport& report) {
  std::string out = "iter\tloss\tlr\n";
  char buf[96];
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.9g\t%.9g\n", i + 1, report.losses[i],
                  report.learning_rates[i]);
    out += buf;
  }
  for (const auto& [iter, epe] : report.eval_epe) {
    std::snprintf(buf, sizeof(buf), "# eval %zu proxy_epe %.6f\n", iter, epe);
    out += buf;
  }
  return out;
}

}  // namespace gofl
