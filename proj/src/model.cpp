#include "gofl/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "gofl/dataset.hpp"
#include "gofl/errors.hpp"
#include "gofl/ops.hpp"
#include "gofl/random.hpp"

namespace gofl {

namespace {

constexpr std::array<std::size_t, kContractionLevels> kEncoderMultipliers{1, 2, 4, 8, 8, 8};
constexpr std::array<std::size_t, 4> kDecoderMultipliers{4, 4, 2, 1};
constexpr std::size_t kKernel = 3;

std::string layer(const char* prefix, std::size_t k) { return prefix + std::to_string(k); }

}  // namespace

std::size_t ModelConfig::encoder_width(std::size_t k) const {
  return base_channels * kEncoderMultipliers.at(k - 1);
}

std::size_t ModelConfig::decoder_width(std::size_t s) const {
  return base_channels * kDecoderMultipliers.at(s - 1);
}

void ModelConfig::validate() const {
  if (base_channels == 0) throw ConfigError("model: base_channels must be positive");
  if (image_channels != 1 && image_channels != 3) {
    throw ConfigError("model: image_channels must be 1 or 3");
  }
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  auto conv = [&](const std::string& name, std::size_t ci, std::size_t co) {
    out.push_back({name + ".weight", Shape(co, ci, kKernel, kKernel)});
    out.push_back({name + ".bias", Shape(1, co, 1, 1)});
  };
  std::size_t ci = cfg.input_channels();
  for (std::size_t k = 1; k <= kContractionLevels; ++k) {
    conv(layer("enc", k), ci, cfg.encoder_width(k));
    ci = cfg.encoder_width(k);
  }
  conv("flow0", ci, 2);
  std::size_t feat = ci;
  for (std::size_t s = 1; s <= 4; ++s) {
    const std::size_t skip = cfg.encoder_width(kContractionLevels - s);
    conv(layer("dec", s), feat + skip + 2, cfg.decoder_width(s));
    feat = cfg.decoder_width(s);
    conv(layer("flow", s), feat, 2);
  }
  return out;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_layout(cfg)) n += p.shape.numel();
  return n;
}

template <typename T>
const Tensor<T>& ModelParams<T>::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw ShapeError("model has no parameter '" + name + "'");
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::clone(bool requires_grad) const {
  ModelParams out;
  out.config = config;
  out.seed = seed;
  out.names = names;
  for (const auto& t : tensors) out.tensors.push_back(t.detach(requires_grad));
  return out;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto& t : tensors) t.zero_grad();
}

template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<T> params;
  params.config = cfg;
  params.seed = seed;
  const auto layout = parameter_layout(cfg);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const ParamSpec& spec = layout[i];
    std::vector<T> values(spec.shape.numel(), T(0));
    if (spec.shape.h() == kKernel) {
      const double fan_in = static_cast<double>(spec.shape.c() * kKernel * kKernel);
      const double bound = std::sqrt(6.0 / fan_in);
      Rng rng(derive_seed(seed, i, 0x1417));
      for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    params.names.push_back(spec.name);
    params.tensors.push_back(Tensor<T>::from(spec.shape, std::move(values), true));
  }
  return params;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const Image& first = *images.front();
  const std::size_t plane = first.height * first.width;
  std::vector<T> values(images.size() * first.channels * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    if (img.height != first.height || img.width != first.width || img.channels != first.channels) {
      throw ShapeError("images_to_tensor: batch images differ in extents");
    }
    for (std::size_t c = 0; c < img.channels; ++c) {
      T* dst = values.data() + (n * img.channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(img.data[i * img.channels + c]);
    }
  }
  return Tensor<T>::from(Shape(images.size(), first.channels, first.height, first.width),
                         std::move(values));
}

template <typename T>
Tensor<T> flows_to_tensor(const std::vector<const FlowField*>& flows) {
  if (flows.empty()) throw ShapeError("flows_to_tensor: empty batch");
  const FlowField& first = *flows.front();
  const std::size_t plane = first.pixel_count();
  std::vector<T> values(flows.size() * 2 * plane);
  for (std::size_t n = 0; n < flows.size(); ++n) {
    const FlowField& f = *flows[n];
    if (f.height != first.height || f.width != first.width) {
      throw ShapeError("flows_to_tensor: batch fields differ in extents");
    }
    std::copy(f.u.begin(), f.u.end(), values.begin() + static_cast<std::ptrdiff_t>(2 * n * plane));
    std::copy(f.v.begin(), f.v.end(),
              values.begin() + static_cast<std::ptrdiff_t>((2 * n + 1) * plane));
  }
  return Tensor<T>::from(Shape(flows.size(), 2, first.height, first.width), std::move(values));
}

template <typename T>
FlowField tensor_to_flow(const Tensor<T>& flow, std::size_t index) {
  const Shape& s = flow.shape();
  if (s.c() != 2 || index >= s.n()) throw ShapeError("tensor_to_flow: bad shape " + s.to_string());
  FlowField out(s.h(), s.w());
  const std::size_t plane = s.h() * s.w();
  const auto v = flow.values();
  for (std::size_t i = 0; i < plane; ++i) {
    out.u[i] = static_cast<float>(v[2 * index * plane + i]);
    out.v[i] = static_cast<float>(v[(2 * index + 1) * plane + i]);
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> centered_input(const Tensor<T>& i1, const Tensor<T>& i2) {
  const Shape& s = i1.shape();
  if (!(s == i2.shape())) {
    throw ShapeError("forward: frames differ " + s.to_string() + " vs " + i2.shape().to_string());
  }
  if (s.h() == 0 || s.w() == 0 || s.h() % kExtentMultiple != 0 || s.w() % kExtentMultiple != 0) {
    throw ShapeError("forward: extents " + std::to_string(s.h()) + "x" + std::to_string(s.w()) +
                     " must be positive multiples of 64");
  }
  const std::size_t per = s.c() * s.h() * s.w();
  std::vector<T> values(2 * s.numel());
  const auto a = i1.values();
  const auto b = i2.values();
  for (std::size_t n = 0; n < s.n(); ++n) {
    for (std::size_t i = 0; i < per; ++i) {
      values[2 * n * per + i] = a[n * per + i] - T(0.5);
      values[(2 * n + 1) * per + i] = b[n * per + i] - T(0.5);
    }
  }
  return Tensor<T>::from(Shape(s.n(), 2 * s.c(), s.h(), s.w()), std::move(values));
}

}  // namespace

template <typename T>
std::vector<Tensor<T>> forward(const ModelParams<T>& params, const Tensor<T>& i1,
                               const Tensor<T>& i2, std::vector<Tensor<T>>* preactivations) {
  if (i1.shape().c() != params.config.image_channels) {
    throw ShapeError("forward: model expects " + std::to_string(params.config.image_channels) +
                     " channel frames, got " + std::to_string(i1.shape().c()));
  }
  const T slope = static_cast<T>(kLeakySlope);
  auto conv = [&](const Tensor<T>& x, const std::string& name, std::size_t stride) {
    return conv2d(x, params.get(name + ".weight"), params.get(name + ".bias"), stride, 1);
  };
  auto activate = [&](const Tensor<T>& z) {
    if (preactivations) preactivations->push_back(z);
    return leaky_relu(z, slope);
  };

  std::vector<Tensor<T>> enc;
  Tensor<T> x = centered_input(i1, i2);
  for (std::size_t k = 1; k <= kContractionLevels; ++k) {
    x = activate(conv(x, layer("enc", k), 2));
    enc.push_back(x);
  }
  std::vector<Tensor<T>> preds;
  preds.push_back(conv(x, "flow0", 1));
  Tensor<T> feat = x;
  for (std::size_t s = 1; s <= 4; ++s) {
    const Tensor<T>& skip = enc[kContractionLevels - s - 1];
    const Tensor<T> up_flow = scalar_mul(upsample_bilinear2x(preds.back()), T(2));
    const Tensor<T> cat =
        concat_channels(concat_channels(upsample_bilinear2x(feat), skip), up_flow);
    feat = activate(conv(cat, layer("dec", s), 1));
    preds.push_back(conv(feat, layer("flow", s), 1));
  }
  return preds;
}

FlowField predict_full(const ModelParams<float>& params, const Image& i1, const Image& i2) {
  const auto a = images_to_tensor<float>({&i1});
  const auto b = images_to_tensor<float>({&i2});
  const auto preds = forward(params, a, b);
  return upsample_flow(tensor_to_flow(preds.back()), 4);
}

// --- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'G', 'O', 'F', 'L'};
constexpr char kAdamMarker[4] = {'A', 'D', 'A', 'M'};

class Writer {
 public:
  void raw(const char (&tag)[4]) { out_.insert(out_.end(), tag, tag + 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void record(const std::string& name, const Shape& shape, std::span<const float> values) {
    u32(static_cast<std::uint32_t>(name.size()));
    out_.insert(out_.end(), name.begin(), name.end());
    for (std::size_t d : shape.dims) u32(static_cast<std::uint32_t>(d));
    for (float v : values) f32(v);
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  bool at_end() const { return pos_ == in_.size(); }
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw LengthError("checkpoint: truncated " + std::string(what) + " at byte " +
                        std::to_string(pos_) + " (file has " + std::to_string(in_.size()) + ")");
    }
  }
  bool tag(const char (&expected)[4]) {
    need(4, "marker");
    const bool match = std::memcmp(in_.data() + pos_, expected, 4) == 0;
    pos_ += 4;
    return match;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string name() {
    const std::uint32_t len = u32("name length");
    need(len, "name");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  Shape shape() {
    Shape s;
    for (auto& d : s.dims) d = u32("shape");
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    need(n * 4, "values");
    std::vector<float> v(n);
    for (auto& x : v) x = f32("values");
    return v;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Bytes encode_checkpoint(const ModelParams<float>& params, const AdamState<float>* adam) {
  Writer w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    w.record(params.names[i], params.tensors[i].shape(), params.tensors[i].values());
  }
  if (adam) {
    if (adam->first_moment.size() != params.tensors.size() ||
        adam->second_moment.size() != params.tensors.size()) {
      throw ShapeError("encode_checkpoint: Adam moments do not match the parameters");
    }
    w.raw(kAdamMarker);
    w.u32(adam->step);
    w.f32(adam->beta1);
    w.f32(adam->beta2);
    w.f32(adam->eps);
    w.u32(static_cast<std::uint32_t>(2 * params.tensors.size()));
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
      const Shape& s = params.tensors[i].shape();
      if (adam->first_moment[i].size() != s.numel() || adam->second_moment[i].size() != s.numel()) {
        throw ShapeError("encode_checkpoint: Adam moment size mismatch for " + params.names[i]);
      }
      w.record(params.names[i] + ".m1", s, adam->first_moment[i]);
      w.record(params.names[i] + ".m2", s, adam->second_moment[i]);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (!r.tag(kMagic)) throw FormatError("checkpoint: bad magic (expected GOFL)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("parameter count");
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<float>> values;
  for (std::uint32_t i = 0; i < count; ++i) {
    names.push_back(r.name());
    shapes.push_back(r.shape());
    values.push_back(r.floats(shapes.back().numel()));
  }

  if (names.empty() || names.front() != "enc1.weight") {
    throw FormatError("checkpoint: first parameter must be enc1.weight");
  }
  ModelConfig cfg;
  cfg.base_channels = shapes.front().n();
  cfg.image_channels = shapes.front().c() / 2;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const auto layout = parameter_layout(cfg);
  if (layout.size() != names.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(layout.size()) +
                      " parameters, found " + std::to_string(names.size()));
  }
  Checkpoint ck;
  ck.params.config = cfg;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != names[i] || !(layout[i].shape == shapes[i])) {
      throw FormatError("checkpoint: parameter " + std::to_string(i) + " is " + names[i] + " " +
                        shapes[i].to_string() + ", expected " + layout[i].name + " " +
                        layout[i].shape.to_string());
    }
    ck.params.names.push_back(names[i]);
    ck.params.tensors.push_back(Tensor<float>::from(shapes[i], std::move(values[i]), true));
  }

  if (r.at_end()) return ck;
  if (!r.tag(kAdamMarker)) throw FormatError("checkpoint: unexpected bytes after parameters");
  AdamState<float> adam;
  adam.step = r.u32("adam step");
  adam.beta1 = r.f32("adam beta1");
  adam.beta2 = r.f32("adam beta2");
  adam.eps = r.f32("adam eps");
  const std::uint32_t records = r.u32("adam record count");
  if (records != 2 * layout.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(2 * layout.size()) +
                      " Adam records, found " + std::to_string(records));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    for (const char* suffix : {".m1", ".m2"}) {
      const std::string name = r.name();
      const Shape shape = r.shape();
      if (name != layout[i].name + suffix || !(shape == layout[i].shape)) {
        throw FormatError("checkpoint: unexpected Adam record " + name);
      }
      auto v = r.floats(shape.numel());
      (suffix[2] == '1' ? adam.first_moment : adam.second_moment).push_back(std::move(v));
    }
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after Adam state");
  ck.adam = std::move(adam);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params,
                     const AdamState<float>* adam) {
  write_file(path, encode_checkpoint(params, adam));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const LengthError& e) {
    throw LengthError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_model<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_model<double>(const ModelConfig&, std::uint64_t);
template Tensor<float> images_to_tensor<float>(const std::vector<const Image*>&);
template Tensor<double> images_to_tensor<double>(const std::vector<const Image*>&);
template Tensor<float> flows_to_tensor<float>(const std::vector<const FlowField*>&);
template Tensor<double> flows_to_tensor<double>(const std::vector<const FlowField*>&);
template FlowField tensor_to_flow<float>(const Tensor<float>&, std::size_t);
template FlowField tensor_to_flow<double>(const Tensor<double>&, std::size_t);
template std::vector<Tensor<float>> forward<float>(const ModelParams<float>&, const Tensor<float>&,
                                                   const Tensor<float>&,
                                                   std::vector<Tensor<float>>*);
template std::vector<Tensor<double>> forward<double>(const ModelParams<double>&,
                                                     const Tensor<double>&, const Tensor<double>&,
                                                     std::vector<Tensor<double>>*);

}  // namespace gofl
