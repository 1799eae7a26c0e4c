#pragma once

#include <array>
#include <string>

#include "bfpn/nn.hpp"
#include "bfpn/util.hpp"

namespace bfpn {

// Encoder: stem (stride 2) + four residual stages (stride 2 each), so the
// pyramid levels sit at 1/4, 1/8, 1/16 and 1/32 of the input resolution.
// The decoder upsamples every level to 1/4, concatenates, fuses, and a final
// bilinear x4 restores full resolution.
struct ModelConfig {
  int input_size = 64;  // H = W
  int base_channels = 16;
  int encoder_stages = 4;
  int pyramid_channels = 32;
  double encoder_dropout_p = 0.5;
  double head_spatial_dropout_p = 0.1;
  NormKind norm_encoder{NormType::Batch, 1, 1e-5};
  NormKind norm_decoder{NormType::Instance, 1, 1e-5};
  int num_classes = 2;  // heart, lungs

  void validate() const {
    if (encoder_stages != 4)
      throw std::invalid_argument("ModelConfig: encoder_stages must be 4");
    if (num_classes != 2)
      throw std::invalid_argument("ModelConfig: num_classes must be 2");
    if (input_size < 32 || input_size % 32 != 0)
      throw std::invalid_argument(
          "ModelConfig: input_size must be >= 32 and divisible by 32");
    if (base_channels < 1 || pyramid_channels < 1)
      throw std::invalid_argument("ModelConfig: channel counts must be positive");
    if (encoder_dropout_p < 0 || encoder_dropout_p >= 1 ||
        head_spatial_dropout_p < 0 || head_spatial_dropout_p >= 1)
      throw std::invalid_argument("ModelConfig: dropout rates must be in [0,1)");
  }
};

inline std::string norm_kind_text(const NormKind& k) {
  switch (k.type) {
    case NormType::Batch:
      return "batch";
    case NormType::Group:
      return "group:" + std::to_string(k.groups);
    case NormType::Instance:
      return "instance";
  }
  return "?";
}

inline NormKind parse_norm_kind(const std::string& s, int default_groups = 8) {
  if (s == "batch") return {NormType::Batch, 1, 1e-5};
  if (s == "instance") return {NormType::Instance, 1, 1e-5};
  if (s == "group") return {NormType::Group, default_groups, 1e-5};
  if (s.rfind("group:", 0) == 0)
    return {NormType::Group, std::stoi(s.substr(6)), 1e-5};
  throw UsageError("unknown normalization kind: " + s);
}

// Canonical key=value form; hashed into checkpoints to catch
// architecture/config mismatches on load.
inline std::string canonical_config_text(const ModelConfig& c) {
  std::string s;
  s += "base_channels=" + std::to_string(c.base_channels) + "\n";
  s += "encoder_dropout_p=" + format_g9(c.encoder_dropout_p) + "\n";
  s += "encoder_stages=" + std::to_string(c.encoder_stages) + "\n";
  s += "head_spatial_dropout_p=" + format_g9(c.head_spatial_dropout_p) + "\n";
  s += "input_size=" + std::to_string(c.input_size) + "\n";
  s += "norm_decoder=" + norm_kind_text(c.norm_decoder) + "\n";
  s += "norm_encoder=" + norm_kind_text(c.norm_encoder) + "\n";
  s += "num_classes=" + std::to_string(c.num_classes) + "\n";
  s += "pyramid_channels=" + std::to_string(c.pyramid_channels) + "\n";
  return s;
}

template <typename T>
class BayesianFpn {
 public:
  BayesianFpn(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg.validate();
    const int b = cfg.base_channels;
    const int pyr = cfg.pyramid_channels;
    seed_ = init_seed;

    // Strided convolutions use even kernels (4x4 pad 1, 2x2 pad 0 for
    // projections) so the output extent is exactly half the input.
    input_norm_ = make_norm("input_norm", 1, batch_kind());
    stem_conv_ = make_conv("stem.conv", 1, b, 4, 2, 1);
    stem_norm_ = make_norm("stem.norm", b, cfg.norm_encoder);

    const int widths[5] = {b, b, 2 * b, 4 * b, 8 * b};
    for (int s = 0; s < 4; ++s) {
      std::string base = "enc" + std::to_string(s + 1);
      blocks_[2 * s] =
          make_block(base + ".b1", widths[s], widths[s + 1], 2);
      blocks_[2 * s + 1] =
          make_block(base + ".b2", widths[s + 1], widths[s + 1], 1);
    }
    for (int i = 0; i < 3; ++i)
      enc_drop_[i] = DropoutLayer<T>{cfg.encoder_dropout_p,
                                     uint64_t(1 + i), false};
    for (int k = 0; k < 4; ++k) {
      lateral_[k] = make_conv("lat" + std::to_string(k + 1) + ".conv",
                              widths[k + 1], pyr, 1, 1, 0);
      lat_drop_[k] =
          DropoutLayer<T>{cfg.encoder_dropout_p, uint64_t(4 + k), false};
      seg_conv_[k] = make_conv("seg" + std::to_string(k + 1) + ".conv", pyr,
                               pyr, 3, 1, 1);
      seg_norm_[k] = make_norm("seg" + std::to_string(k + 1) + ".norm", pyr,
                               cfg.norm_decoder);
    }
    pyr_drop_[0] = DropoutLayer<T>{cfg.encoder_dropout_p, 8, false};
    pyr_drop_[1] = DropoutLayer<T>{cfg.encoder_dropout_p, 9, false};
    pyr_drop_[2] = DropoutLayer<T>{cfg.encoder_dropout_p, 10, false};
    fuse_conv_ = make_conv("fuse.conv", 4 * pyr, pyr, 3, 1, 1);
    fuse_norm_ = make_norm("fuse.norm", pyr, cfg.norm_decoder);
    head_drop_ = DropoutLayer<T>{cfg.head_spatial_dropout_p, 11, true};
    head_conv_ = make_conv("head.conv", pyr, cfg.num_classes, 1, 1, 0);
  }

  // image: [N,1,S,S] in [0,1] -> per-class probabilities [N,2,S,S]
  Tensor<T> forward(const Tensor<T>& image, LayerMode mode, RngStream rs) {
    detail::check(image.ndim() == 4 && image.dim(1) == 1 &&
                      image.dim(2) == cfg_.input_size &&
                      image.dim(3) == cfg_.input_size,
                  "forward: image shape does not match model config");
    Tensor<T> x = input_norm_(image, mode);
    x = relu(stem_norm_(stem_conv_(x), mode));

    std::array<Tensor<T>, 4> c;
    for (int s = 0; s < 4; ++s) {
      x = blocks_[2 * s](x, mode);
      x = blocks_[2 * s + 1](x, mode);
      c[s] = x;
      if (s < 3) x = enc_drop_[s](x, mode, rs);
    }

    std::array<Tensor<T>, 4> p;
    p[3] = lat_drop_[3](lateral_[3](c[3]), mode, rs);
    for (int k = 2; k >= 0; --k)
      p[k] = add(lat_drop_[k](lateral_[k](c[k]), mode, rs),
                 upsample_nearest(p[k + 1], 2));

    std::array<Tensor<T>, 4> s;
    for (int k = 0; k < 4; ++k)
      s[k] = relu(seg_norm_[k](seg_conv_[k](p[k]), mode));
    // bring every level to 1/4 scale; dropout precedes each upsample except
    // the one feeding the concatenation
    s[1] = upsample_nearest(s[1], 2);
    s[2] = upsample_nearest(
        upsample_nearest(pyr_drop_[0](s[2], mode, rs), 2), 2);
    {
      Tensor<T> t = pyr_drop_[1](s[3], mode, rs);
      t = upsample_nearest(t, 2);
      t = pyr_drop_[2](t, mode, rs);
      t = upsample_nearest(t, 2);
      s[3] = upsample_nearest(t, 2);
    }

    Tensor<T> f = concat_channels<T>({s[0], s[1], s[2], s[3]});
    f = relu(fuse_norm_(fuse_conv_(f), mode));
    f = head_drop_(f, mode, rs);
    f = head_conv_(f);
    f = upsample_bilinear(f, 4);
    Tensor<T> out = sigmoid(f);
    if (!all_finite(out))
      throw NumericError("model forward produced non-finite values");
    return out;
  }

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  size_t parameter_count() const { return store_.learnable_count(); }

  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> s;
    s.reserve(store_.entries.size());
    for (const auto& e : store_.entries) s.push_back(e.tensor.vec());
    return s;
  }

  void restore(const std::vector<std::vector<T>>& s) {
    if (s.size() != store_.entries.size())
      throw std::invalid_argument("snapshot/parameter count mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i].size() != store_.entries[i].tensor.numel())
        throw std::invalid_argument("snapshot tensor size mismatch");
      std::copy(s[i].begin(), s[i].end(), store_.entries[i].tensor.data());
    }
  }

 private:
  static NormKind batch_kind() { return {NormType::Batch, 1, 1e-5}; }

  Conv2dLayer<T> make_conv(const std::string& name, int cin, int cout, int k,
                           int stride, int pad) {
    Conv2dLayer<T> l;
    l.w = store_.add(name + ".w", {cout, cin, k, k}, true);
    l.b = store_.add(name + ".b", {cout}, true);
    l.stride = stride;
    l.pad = pad;
    // He-normal: std = sqrt(2 / fan_in)
    const double std = std::sqrt(2.0 / (double(cin) * k * k));
    const uint64_t tkey = rng::key3(seed_, 0x1717ull, param_counter_++);
    T* wp = l.w.data();
    for (size_t i = 0; i < l.w.numel(); ++i)
      wp[i] = static_cast<T>(std * rng::normal(rng::key2(tkey, i)));
    return l;
  }

  NormLayer<T> make_norm(const std::string& name, int c, NormKind kind) {
    NormLayer<T> l;
    l.kind = kind;
    if (kind.type == NormType::Group && c % kind.groups != 0)
      throw std::invalid_argument(
          "ModelConfig: group-norm groups must divide channel width");
    l.gamma = store_.add(name + ".gamma", {c}, true);
    l.beta = store_.add(name + ".beta", {c}, true);
    std::fill_n(l.gamma.data(), size_t(c), T(1));
    if (kind.type == NormType::Batch) {
      l.running_mean = store_.add(name + ".running_mean", {c}, false);
      l.running_var = store_.add(name + ".running_var", {c}, false);
      std::fill_n(l.running_var.data(), size_t(c), T(1));
    }
    return l;
  }

  ResidualBlock<T> make_block(const std::string& name, int cin, int cout,
                              int stride) {
    ResidualBlock<T> blk;
    blk.conv1 = stride == 1 ? make_conv(name + ".conv1", cin, cout, 3, 1, 1)
                            : make_conv(name + ".conv1", cin, cout, 4, 2, 1);
    blk.norm1 = make_norm(name + ".norm1", cout, cfg_.norm_encoder);
    blk.conv2 = make_conv(name + ".conv2", cout, cout, 3, 1, 1);
    blk.norm2 = make_norm(name + ".norm2", cout, cfg_.norm_encoder);
    blk.has_proj = stride != 1 || cin != cout;
    if (blk.has_proj) {
      blk.proj = stride == 1 ? make_conv(name + ".proj", cin, cout, 1, 1, 0)
                             : make_conv(name + ".proj", cin, cout, 2, 2, 0);
      blk.proj_norm = make_norm(name + ".proj_norm", cout, cfg_.norm_encoder);
    }
    return blk;
  }

  ModelConfig cfg_;
  ParamStore<T> store_;
  uint64_t seed_ = 0;
  uint64_t param_counter_ = 0;

  NormLayer<T> input_norm_;
  Conv2dLayer<T> stem_conv_;
  NormLayer<T> stem_norm_;
  std::array<ResidualBlock<T>, 8> blocks_;
  std::array<DropoutLayer<T>, 3> enc_drop_;
  std::array<Conv2dLayer<T>, 4> lateral_;
  std::array<DropoutLayer<T>, 4> lat_drop_;
  std::array<Conv2dLayer<T>, 4> seg_conv_;
  std::array<NormLayer<T>, 4> seg_norm_;
  std::array<DropoutLayer<T>, 3> pyr_drop_;
  Conv2dLayer<T> fuse_conv_;
  NormLayer<T> fuse_norm_;
  DropoutLayer<T> head_drop_;
  Conv2dLayer<T> head_conv_;
};

}  // namespace bfpn
