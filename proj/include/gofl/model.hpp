#pragma once

// Small FlowNetS-style encoder/decoder producing five flow predictions.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gofl/adam.hpp"
#include "gofl/flow_io.hpp"
#include "gofl/tensor.hpp"

namespace gofl {

inline constexpr std::size_t kContractionLevels = 6;
inline constexpr std::size_t kExtentMultiple = 64;

struct ModelConfig {
  std::size_t base_channels = 16;
  std::size_t image_channels = 1;  // per frame; the network sees both frames stacked

  std::size_t input_channels() const { return 2 * image_channels; }
  /// Output channels of encoder stage k (1-based).
  std::size_t encoder_width(std::size_t k) const;
  /// Output channels of decoder stage s (1-based, coarse to fine).
  std::size_t decoder_width(std::size_t s) const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

/// Names and shapes of every parameter in canonical order.
std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg);
std::size_t expected_parameter_count(const ModelConfig& cfg);

template <typename T>
struct ModelParams {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  const Tensor<T>& get(const std::string& name) const;
  std::size_t parameter_count() const;
  /// Graph-free copy with fresh buffers.
  ModelParams clone(bool requires_grad = true) const;
  void zero_grad();
};

/// He-uniform weights (bound sqrt(6 / fan_in)) and zero biases.
template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Converts every tensor to another precision.
template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& params, bool requires_grad = true) {
  ModelParams<To> out;
  out.config = params.config;
  out.seed = params.seed;
  out.names = params.names;
  for (const auto& t : params.tensors) {
    std::vector<To> v(t.values().begin(), t.values().end());
    out.tensors.push_back(Tensor<To>::from(t.shape(), std::move(v), requires_grad));
  }
  return out;
}

/// Stacks frames into [N,C,H,W]. All images must share extents and channels.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images);
/// Stacks fields into [N,2,H,W].
template <typename T>
Tensor<T> flows_to_tensor(const std::vector<const FlowField*>& flows);
/// One batch element of a [N,2,H,W] tensor.
template <typename T>
FlowField tensor_to_flow(const Tensor<T>& flow, std::size_t index = 0);

/// Five predictions, coarsest first; prediction k is [N,2,H/2^(6-k),W/2^(6-k)]
/// in its own scale's pixel units. Frames are [N,C,H,W] in [0, 1] with H and
/// W multiples of 64. When `preactivations` is given it receives every
/// leaky_relu input in evaluation order.
template <typename T>
std::vector<Tensor<T>> forward(const ModelParams<T>& params, const Tensor<T>& i1,
                               const Tensor<T>& i2,
                               std::vector<Tensor<T>>* preactivations = nullptr);

/// Full-resolution flow: the finest prediction bilinearly upsampled 4x with
/// values multiplied by 4.
FlowField predict_full(const ModelParams<float>& params, const Image& i1, const Image& i2);

struct Checkpoint {
  ModelParams<float> params;
  std::optional<AdamState<float>> adam;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Bytes encode_checkpoint(const ModelParams<float>& params, const AdamState<float>* adam = nullptr);
/// Throws FormatError on a bad magic, version, or layout and LengthError on
/// truncated input.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params,
                     const AdamState<float>* adam = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace gofl
