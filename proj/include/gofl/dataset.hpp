#pragma once

// Synthetic training pairs with exact ground truth, manifests, augmentation
// and batching.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gofl/flow_io.hpp"

namespace gofl {

enum class Split { train, test };

std::string_view split_name(Split split);
/// Throws ConfigError for anything but "train" / "test".
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string pair_id;
  Split split = Split::train;
  std::filesystem::path img1;
  std::filesystem::path img2;
  std::optional<std::filesystem::path> gt;
  std::optional<std::filesystem::path> proxy;
};

/// Entries with paths relative to `root` (the manifest's directory) unless
/// absolute.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::vector<const ManifestEntry*> select(Split split) const;
  const ManifestEntry& find(std::string_view pair_id) const;
};

/// Line format: pair_id TAB split TAB img1 TAB img2 [TAB gt] [TAB proxy].
/// "-" stands for an absent gt when a proxy column follows; '#' starts a
/// comment line. Throws FormatError on malformed lines or duplicate ids.
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root);
std::string format_manifest(const DatasetManifest& manifest);

/// Parses the file and checks that every entry's image files exist. Label
/// files are checked by whoever reads them, so a consumer that never touches
/// ground truth never needs it to exist.
DatasetManifest load_manifest(const std::filesystem::path& file);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

/// Rebases every path of `manifest` so it resolves from `new_root`.
DatasetManifest rebase_manifest(const DatasetManifest& manifest,
                                const std::filesystem::path& new_root);

struct SamplePair {
  std::string pair_id;
  Image i1;
  Image i2;
  std::optional<FlowField> gt;
  std::optional<FlowField> proxy;
};

struct LoadOptions {
  bool gt = false;
  bool proxy = false;
  bool grayscale = true;
};

/// Reads one entry. Throws DataError naming the entry when a requested file
/// is missing or unreadable.
SamplePair load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                       const LoadOptions& options);

// --- flow pyramid utilities -------------------------------------------------

/// Block-mean over factor x factor cells, values divided by factor.
FlowField downsample_flow(const FlowField& flow, std::size_t factor);
/// Half-pixel bilinear resampling to (height, width); u and v are scaled by
/// the width and height ratios respectively.
FlowField resize_flow(const FlowField& flow, std::size_t height, std::size_t width);
/// resize_flow to factor times the extents (values times factor).
FlowField upsample_flow(const FlowField& flow, std::size_t factor);

// --- synthetic scenes ---------------------------------------------------------

/// Smooth band-limited value-noise texture.
struct TextureSpec {
  std::uint64_t seed = 0;
  double mean = 0.5;
  double contrast = 0.4;

  double at(double x, double y) const;
};

/// Similarity motion about `center`: x -> center + scale * R(rotation) * (x - center) + translation.
struct LayerMotion {
  double tx = 0.0;
  double ty = 0.0;
  double rotation_deg = 0.0;
  double scale = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  std::array<double, 2> apply(double x, double y) const;
  std::array<double, 2> inverse(double x, double y) const;
  /// apply(x, y) - (x, y), computed without cancellation for pure translations.
  std::array<double, 2> displacement(double x, double y) const;
};

struct Sprite {
  std::vector<std::array<double, 2>> polygon;  // frame-1 pixel coordinates
  TextureSpec texture;
  LayerMotion motion;

  bool contains(double x, double y) const;
};

struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  TextureSpec background;
  LayerMotion background_motion;
  std::vector<Sprite> sprites;  // bottom to top
};

struct RenderedPair {
  Image i1;
  Image i2;
  FlowField flow;  // exact: motion of the topmost layer at each frame-1 pixel
  /// 1 where the frame-1 layer is still the topmost layer at its frame-2
  /// position inside the image (not occluded, not leaving the frame).
  std::vector<std::uint8_t> visible;
};

/// Random scene for pair `index` of dataset `seed`: background plus 1-3
/// sprites, translations up to 12 px, rotations up to 10 degrees, scales in
/// [0.95, 1.05].
SceneSpec sample_scene(std::size_t height, std::size_t width, std::uint64_t seed,
                       std::uint64_t index);
RenderedPair render_scene(const SceneSpec& scene);

struct SyntheticOptions {
  std::size_t train_count = 512;
  std::size_t test_count = 64;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;
};

/// Renders every pair into `out_dir` (PGM frames, .flo ground truth) and
/// writes `out_dir/manifest.txt`. Extents must be multiples of 64.
DatasetManifest generate_synthetic(const SyntheticOptions& options,
                                   const std::filesystem::path& out_dir);

// --- augmentation -------------------------------------------------------------

struct AugmentConfig {
  double flip_probability = 0.5;
  std::size_t crop_height = 0;  // 0 keeps the full extent
  std::size_t crop_width = 0;
  double noise_sigma_max = 0.04;
  double brightness_min = 0.8;
  double brightness_max = 1.25;
};

/// Mirrors all grids left-right and negates u.
SamplePair flip_horizontal(const SamplePair& sample);
/// Throws ShapeError when the window leaves the image.
SamplePair crop(const SamplePair& sample, std::size_t y0, std::size_t x0, std::size_t height,
                std::size_t width);
/// Random flip, crop, brightness scale (both frames) and Gaussian noise,
/// deterministic in `seed`. Flow labels follow the geometry.
SamplePair augment(const SamplePair& sample, std::uint64_t seed, const AugmentConfig& config);

// --- batching -----------------------------------------------------------------

/// Endless stream of index batches over `size` items. Each epoch is a
/// permutation that depends only on (seed, epoch); the final batch of an
/// epoch may be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t size, std::size_t batch_size, std::uint64_t seed, bool shuffle = true);

  std::vector<std::size_t> next();
  std::size_t batches_per_epoch() const;
  std::size_t epoch() const { return epoch_; }

 private:
  void start_epoch();

  std::size_t size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

/// In-memory samples of one split plus a batch sampler over them.
class DataLoader {
 public:
  DataLoader(const DatasetManifest& manifest, Split split, const LoadOptions& options,
             std::size_t batch_size, std::uint64_t seed);

  std::vector<const SamplePair*> next_batch();
  std::size_t batches_per_epoch() const { return sampler_.batches_per_epoch(); }
  std::size_t epoch() const { return sampler_.epoch(); }
  const std::vector<SamplePair>& samples() const { return samples_; }

 private:
  std::vector<SamplePair> samples_;
  BatchSampler sampler_;
};

}  // namespace gofl
