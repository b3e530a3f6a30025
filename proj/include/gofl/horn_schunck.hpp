#pragma once

// Pyramidal Horn-Schunck with warping, used to produce proxy labels.

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gofl/dataset.hpp"
#include "gofl/flow_io.hpp"

namespace gofl {

/// Intensities are rescaled to [0, 255] internally, so smoothness_alpha is
/// on the usual 8-bit scale.
struct HSConfig {
  double smoothness_alpha = 15.0;
  std::size_t iterations_per_level = 100;
  std::size_t pyramid_levels = 0;  // 0 picks the deepest pyramid with a coarsest level >= 8x8
  double pyramid_scale = 0.5;
  std::size_t warps_per_level = 3;
  bool median_filter = true;  // 3x3 median on the flow after every warp

  /// Throws ConfigError for alpha <= 0, a scale outside (0, 1) or zero warps.
  void validate() const;
};

inline constexpr std::size_t kMinPyramidExtent = 8;

/// One warp: i2 is warped by `init` and brightness constancy is linearized
/// there, then Jacobi sweeps run on the total flow starting from `init`.
/// Derivatives are central differences averaged over i1 and the warped i2;
/// pixels whose `init` target lies outside the frame get no data term.
/// Neighbor averages replicate the border. Single-channel images only.
FlowField horn_schunck_level(const Image& i1, const Image& i2, const FlowField& init,
                             const HSConfig& cfg);

/// The energy those sweeps descend, with w = flow - init:
/// sum (Ix w_u + Iy w_v + It)^2 + alpha^2 / 4 * sum over neighbor pairs |flow_a - flow_b|^2.
double horn_schunck_energy(const Image& i1, const Image& i2, const FlowField& init,
                           const FlowField& flow, const HSConfig& cfg);

/// Number of levels used for an image of the given extents.
std::size_t pyramid_level_count(std::size_t height, std::size_t width, const HSConfig& cfg);

/// Coarse-to-fine estimate. The finest level uses the input frames as they
/// are; coarser levels are binomial-smoothed and resampled by pyramid_scale.
/// Each level runs warps_per_level calls of horn_schunck_level, each followed
/// by the median filter when enabled.
FlowField pyramid_flow(const Image& i1, const Image& i2, const HSConfig& cfg);

struct ProxyReport {
  DatasetManifest manifest;  // entries with proxies, rooted at the output directory
  std::vector<std::string> written;
  std::vector<std::pair<std::string, std::string>> skipped;  // pair id, reason
};

/// Writes `<out_dir>/<pair_id>.flo` for every readable pair and
/// `<out_dir>/manifest.txt` listing them with their proxy column. Pairs that
/// fail to load are reported and left out.
ProxyReport generate_proxy(const DatasetManifest& manifest, const HSConfig& cfg,
                           const std::filesystem::path& out_dir);

}  // namespace gofl
