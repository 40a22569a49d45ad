#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "objseg/layers.hpp"
#include "objseg/tensor.hpp"

namespace objseg {

// Segmentation-branch ablations.
//   kObjBranch:   object (detection-branch) features, no instance norm
//   kSepBranchIN: encoder features only, instance norm
//   kObjBranchIN: object features and instance norm (full method)
enum class Variant { kObjBranch, kSepBranchIN, kObjBranchIN };

std::string_view variant_name(Variant v);
// Accepts "objBranch", "sepBranchIN", "objBranchIN". Throws InvalidInput otherwise.
Variant parse_variant(std::string_view name);

inline bool uses_object_features(Variant v) { return v != Variant::kSepBranchIN; }
inline bool uses_instance_norm(Variant v) { return v != Variant::kObjBranch; }

struct ModelConfig {
  // Output channels of encoder layers 1..5 (strides 2..32).
  std::vector<int> encoder_widths{16, 32, 64, 128, 256};
  int blocks_per_stage = 1;
  // Detection decoder widths from stride 16 down to the head stride.
  std::vector<int> decoder_widths{64, 32, 32};
  int head_width = 32;
  int seg_width = 16;
  int stride = 4;  // detection output stride n: 2 or 4
  int num_classes = 1;
  int roi_grid = 64;  // P: mask grid at stride 1; level l uses P / 2^l
  Variant variant = Variant::kObjBranchIN;
  int input_channels = 3;
  double norm_epsilon = 1e-5;
  // The width/height head regresses pixels / wh_scale.
  double wh_scale = 16.0;
  uint64_t init_seed = 0;
  std::string pretrained_encoder;  // optional checkpoint whose encoder.* tensors are loaded

  // Throws InvalidInput.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class NormKind { kNone, kBatch, kInstance };

namespace nn {

template <typename T>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(const std::string& name, int in, int out, int stride);
  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamList<T>& out);

 private:
  Conv2d<T> conv1_, conv2_, proj_;
  BatchNorm2d<T> bn1_, bn2_, proj_bn_;
  bool has_proj_ = false;
  Tensor<T> mid_, out_;
};

// Conv + BN + ReLU used as the stride-2 stem.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int in, int out, int kernel, int stride);
  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamList<T>& out);

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  Tensor<T> out_;
};

// Skip combination: 2x bilinear upsample of the deeper map, channel concat
// with the shallower map, 3x3 conv, optional normalisation, ReLU.
template <typename T>
class SkipCombine {
 public:
  SkipCombine() = default;
  SkipCombine(const std::string& name, int deep_channels, int shallow_channels, int out, NormKind norm,
              double eps);
  void init(std::mt19937_64& rng);
  // `deep` may be null for the deepest level.
  Tensor<T> forward(const Tensor<T>* deep, const Tensor<T>& shallow, bool training);
  // Writes the gradient of the (pre-upsample) deep input to `grad_deep` when present.
  void backward(const Tensor<T>& grad_out, Tensor<T>* grad_deep, Tensor<T>& grad_shallow);
  void collect(ParamList<T>& out);

  const InstanceNorm2d<T>* instance_norm() const {
    return norm_ == NormKind::kInstance ? &in_ : nullptr;
  }

 private:
  int deep_channels_ = 0;
  NormKind norm_ = NormKind::kNone;
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  InstanceNorm2d<T> in_;
  Tensor<T> out_;
};

// 3x3 conv + ReLU + 1x1 conv.
template <typename T>
class Head {
 public:
  Head() = default;
  Head(const std::string& name, int in, int mid, int out);
  void init(std::mt19937_64& rng, double final_bias);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamList<T>& out);

 private:
  Conv2d<T> conv1_, conv2_;
  Tensor<T> mid_;
};

}  // namespace nn

template <typename T>
struct DetectionOutput {
  nn::Tensor<T> heatmap;  // N x C x H/n x W/n, sigmoid probabilities
  nn::Tensor<T> offsets;  // N x 2 x H/n x W/n
  nn::Tensor<T> wh;       // N x 2 x H/n x W/n, input pixels
};

template <typename T>
struct DetectionGrads {
  nn::Tensor<T> heatmap;  // dL / d probability
  nn::Tensor<T> offsets;
  nn::Tensor<T> wh;
};

// Two-branch network: residual encoder, detection decoder with center /
// offset / width-height heads at stride n, and a per-RoI segmentation
// branch decoding from stride 16 to stride 1.
template <typename T>
class ObjectGuidedNet {
 public:
  explicit ObjectGuidedNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  // `images`: N x C x H x W with H, W divisible by 32. Caches the feature
  // pyramid consumed by forward_segmentation and backward.
  DetectionOutput<T> forward_detection(const nn::Tensor<T>& images, bool training);

  // Mask probabilities R x 1 x P x P for boxes on images of the latest
  // detection pass.
  nn::Tensor<T> forward_segmentation(std::span<const nn::RoiRef> rois);

  // Accumulates parameter gradients. `mask_grad` (dL / d mask probability)
  // may be null if forward_segmentation was not run for this step.
  void backward(const DetectionGrads<T>& grads, const nn::Tensor<T>* mask_grad);

  void zero_grad();
  nn::ParamList<T> parameters();

  // Encoder map for layer 0..5 (layer 0 is the input); object map for
  // layers of the detection decoder (stride 2^level).
  const nn::Tensor<T>& encoder_feature(int level) const { return enc_.at(level); }
  const nn::Tensor<T>& object_feature(int level) const;
  // Instance-norm layers of the segmentation branch, shallow level last, then the mask head.
  std::vector<const nn::InstanceNorm2d<T>*> segmentation_norms() const;

  int grid_at(int level) const { return config_.roi_grid >> level; }

 private:
  int decoder_levels() const { return static_cast<int>(config_.decoder_widths.size()); }
  int head_level() const;
  int seg_feature_channels(int level) const;
  const nn::Tensor<T>& seg_feature(int level) const;

  ModelConfig config_;

  nn::ConvBnRelu<T> stem_;
  std::vector<std::vector<nn::BasicBlock<T>>> stages_;  // layers 2..5
  std::vector<nn::SkipCombine<T>> det_blocks_;          // levels 4, 3, ...
  nn::Head<T> heat_head_, offset_head_, wh_head_;
  std::vector<nn::SkipCombine<T>> seg_blocks_;          // levels 4..0
  nn::Conv2d<T> mask_conv_;
  nn::InstanceNorm2d<T> mask_norm_;

  // Forward caches.
  std::vector<nn::Tensor<T>> enc_;           // index = level 0..5
  std::vector<nn::Tensor<T>> dec_;           // index = level; empty when absent
  DetectionOutput<T> det_out_;
  std::vector<nn::RoiRef> rois_;
  nn::Tensor<T> mask_prob_;
};

}  // namespace objseg
