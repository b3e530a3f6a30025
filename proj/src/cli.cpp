#include "gofl/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>

#include "gofl/dataset.hpp"
#include "gofl/errors.hpp"
#include "gofl/gradient_suite.hpp"
#include "gofl/horn_schunck.hpp"
#include "gofl/model.hpp"
#include "gofl/trainer.hpp"

namespace gofl {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw UsageError("--size expects HxW, got '" + text + "'");
  try {
    std::size_t used = 0;
    const std::size_t h = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("");
    const std::string rest = text.substr(x + 1);
    const std::size_t w = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("");
    return {h, w};
  } catch (const std::logic_error&) {
    throw UsageError("--size expects HxW, got '" + text + "'");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, Bytes(text.begin(), text.end()));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

struct Options {
  // gen-data
  std::size_t count = 512;
  std::size_t test_count = 64;
  std::string size = "64x64";
  std::uint64_t seed = 0;
  // shared
  std::string out;
  std::string manifest;
  std::string config;
  std::string init;
  std::string ckpt;
  std::string split = "test";
  bool proxy_eval = false;
  std::size_t progress = 0;
  // proxy
  double hs_alpha = HSConfig{}.smoothness_alpha;
  std::size_t hs_iters = HSConfig{}.iterations_per_level;
  std::size_t levels = 0;
  std::size_t hs_warps = HSConfig{}.warps_per_level;
  bool hs_median = HSConfig{}.median_filter;
  // viz
  std::string flo;
  std::string pair;
  double max_flow = 0.0;
  // gradcheck
  std::size_t points = GradientSuiteOptions{}.points;
};

TrainOptions train_options(const Options& o, std::ostream& out) {
  TrainOptions t;
  t.out_dir = o.out;
  if (o.progress > 0) {
    const std::size_t every = o.progress;
    t.on_iteration = [&out, every](std::size_t it, double loss, double lr) {
      if ((it + 1) % every == 0) {
        out << "iter " << it + 1 << "\tloss " << fmt("%.6f", loss) << "\tlr " << lr << '\n';
      }
    };
  }
  return t;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const auto [h, w] = parse_size(o.size);
  SyntheticOptions s;
  s.train_count = o.count;
  s.test_count = o.test_count;
  s.height = h;
  s.width = w;
  s.seed = o.seed;
  if (h == 0 || w == 0 || h % kExtentMultiple != 0 || w % kExtentMultiple != 0) {
    throw UsageError("--size must be a positive multiple of 64 in both extents");
  }
  if (o.count + o.test_count == 0) throw UsageError("--count and --test-count are both zero");
  const DatasetManifest m = generate_synthetic(s, o.out);
  out << "wrote " << m.entries.size() << " pairs to " << (fs::path(o.out) / "manifest.txt").string()
      << '\n';
  return kExitOk;
}

int cmd_proxy(const Options& o, std::ostream& out, std::ostream& err) {
  HSConfig cfg;
  cfg.smoothness_alpha = o.hs_alpha;
  cfg.iterations_per_level = o.hs_iters;
  cfg.pyramid_levels = o.levels;
  cfg.warps_per_level = o.hs_warps;
  cfg.median_filter = o.hs_median;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const DatasetManifest m = load_manifest(o.manifest);
  const ProxyReport r = generate_proxy(m, cfg, o.out);
  for (const auto& [id, why] : r.skipped) err << "skipped " << id << ": " << why << '\n';
  out << "wrote " << r.written.size() << " proxy flows, skipped " << r.skipped.size() << '\n';
  return kExitOk;
}

TrainConfig read_config(const Options& o) {
  try {
    return load_train_config(o.config);
  } catch (const ConfigError& e) {
    throw UsageError(o.config + ": " + e.what());
  }
}

int cmd_train(const Options& o, std::ostream& out) {
  const TrainConfig cfg = read_config(o);
  const DatasetManifest m = load_manifest(o.manifest);
  TrainResult r;
  if (cfg.stage == TrainStage::finetune) {
    throw UsageError("train: config stage is finetune; use the finetune command");
  }
  r = train_guided(m, cfg, train_options(o, out));
  out << "trained " << r.report.losses.size() << " iterations, final loss "
      << fmt("%.6f", r.report.losses.back()) << ", checkpoint " << r.report.final_checkpoint.string()
      << '\n';
  return kExitOk;
}

int cmd_finetune(const Options& o, std::ostream& out) {
  TrainConfig cfg = read_config(o);
  if (cfg.stage != TrainStage::finetune) {
    throw UsageError("finetune: config stage must be finetune");
  }
  const DatasetManifest m = load_manifest(o.manifest);
  const Checkpoint init = load_checkpoint(o.init);
  const TrainResult r = finetune(init.params, m, cfg, train_options(o, out));
  out << "fine-tuned " << r.report.losses.size() << " iterations, final loss "
      << fmt("%.6f", r.report.losses.back()) << ", checkpoint " << r.report.final_checkpoint.string()
      << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  Split split;
  try {
    split = parse_split(o.split);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (o.proxy_eval == !o.ckpt.empty()) throw UsageError("eval: give exactly one of --ckpt or --proxy");
  const DatasetManifest m = load_manifest(o.manifest);
  const EvalReport r = o.proxy_eval ? evaluate_proxy(m, split)
                                    : evaluate(load_checkpoint(o.ckpt).params, m, split);
  fs::path dir = o.out;
  if (dir.empty()) dir = o.proxy_eval ? fs::path(o.manifest).parent_path() : fs::path(o.ckpt).parent_path();
  if (dir.empty()) dir = ".";
  const std::string stem = std::string(o.proxy_eval ? "eval_proxy_" : "eval_") + o.split;
  const std::string table = format_eval_table(r);
  const std::string summary = format_eval_summary(r);
  write_text(dir / (stem + "_pairs.tsv"), table);
  write_text(dir / (stem + "_summary.tsv"), summary);
  out << table << '\n' << summary;
  return kExitOk;
}

int cmd_viz(const Options& o) {
  const bool from_flo = !o.flo.empty();
  const bool from_model = !o.ckpt.empty() || !o.pair.empty() || !o.manifest.empty();
  if (from_flo == from_model) {
    throw UsageError("viz: give either --flo, or --ckpt with --manifest and --pair");
  }
  if (from_model && (o.ckpt.empty() || o.pair.empty() || o.manifest.empty())) {
    throw UsageError("viz: --ckpt needs --manifest and --pair");
  }
  FlowField flow;
  if (from_flo) {
    flow = read_flo_file(o.flo);
  } else {
    const DatasetManifest m = load_manifest(o.manifest);
    const Checkpoint ck = load_checkpoint(o.ckpt);
    LoadOptions load;
    load.grayscale = ck.params.config.image_channels == 1;
    const SamplePair s = load_sample(m, m.find(o.pair), load);
    flow = predict_full(ck.params.clone(false), s.i1, s.i2);
  }
  std::optional<float> max;
  if (o.max_flow > 0.0) max = static_cast<float>(o.max_flow);
  write_image_file(o.out, flow_to_color(flow, max));
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  GradientSuiteOptions g;
  g.points = o.points;
  bool ok = true;
  for (const GradcheckReport& r : run_gradient_suite(g)) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-40s points %3zu  max rel err %.3e  %s\n", r.name.c_str(),
                  r.points_checked, r.max_relative_error, r.passed ? "ok" : "FAIL");
    out << line;
    ok = ok && r.passed;
  }
  out << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Guided optical flow learning toolkit", "gofl"};
  app.require_subcommand(1, 1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic dataset with exact ground truth");
  gen->add_option("--count", o.count, "Training pairs")->capture_default_str();
  gen->add_option("--test-count", o.test_count, "Test pairs")->capture_default_str();
  gen->add_option("--size", o.size, "Frame extents HxW (multiples of 64)")->capture_default_str();
  gen->add_option("--seed", o.seed, "Dataset seed")->capture_default_str();
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* proxy = app.add_subcommand("proxy", "Estimate proxy flow with pyramidal Horn-Schunck");
  proxy->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  proxy->add_option("--out", o.out, "Output directory")->required();
  proxy->add_option("--hs-alpha", o.hs_alpha, "Smoothness weight")->capture_default_str();
  proxy->add_option("--hs-iters", o.hs_iters, "Jacobi sweeps per level")->capture_default_str();
  proxy->add_option("--levels", o.levels, "Pyramid levels (0 = automatic)")->capture_default_str();
  proxy->add_option("--hs-warps", o.hs_warps, "Warps per pyramid level")->capture_default_str();
  proxy->add_option("--hs-median", o.hs_median, "3x3 median filter after each warp (true/false)")
      ->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Stage 1: train on proxy flow");
  train_cmd->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", o.out, "Output directory")->required();
  train_cmd->add_option("--progress", o.progress, "Print the loss every N iterations");

  auto* ft = app.add_subcommand("finetune", "Stage 2: add the reconstruction loss");
  ft->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  ft->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  ft->add_option("--init", o.init, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  ft->add_option("--out", o.out, "Output directory")->required();
  ft->add_option("--progress", o.progress, "Print the loss every N iterations");

  auto* ev = app.add_subcommand("eval", "Average endpoint error against ground truth");
  ev->add_option("--manifest", o.manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("--ckpt", o.ckpt, "Model checkpoint")->check(CLI::ExistingFile);
  ev->add_flag("--proxy", o.proxy_eval, "Score the manifest's proxy flows instead of a model");
  ev->add_option("--split", o.split, "train or test")->capture_default_str();
  ev->add_option("--out", o.out, "Directory for the summary files (default: next to the checkpoint)");

  auto* viz = app.add_subcommand("viz", "Render flow with the color wheel");
  viz->add_option("--flo", o.flo, "Flow file")->check(CLI::ExistingFile);
  viz->add_option("--ckpt", o.ckpt, "Model checkpoint")->check(CLI::ExistingFile);
  viz->add_option("--manifest", o.manifest)->check(CLI::ExistingFile);
  viz->add_option("--pair", o.pair, "Pair id in the manifest");
  viz->add_option("--max", o.max_flow, "Magnitude mapped to full saturation (default: 99th percentile)");
  viz->add_option("--out", o.out, "Output PPM image")->required();

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--points", o.points, "Probed coordinates per check")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (proxy->parsed()) return cmd_proxy(o, out, err);
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (ft->parsed()) return cmd_finetune(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (viz->parsed()) return cmd_viz(o);
    if (gc->parsed()) return cmd_gradcheck(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace gofl
