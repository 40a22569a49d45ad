#include "objseg/model.hpp"

#include <cmath>

#include "objseg/errors.hpp"

namespace objseg {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kObjBranch: return "objBranch";
    case Variant::kSepBranchIN: return "sepBranchIN";
    case Variant::kObjBranchIN: return "objBranchIN";
  }
  return "objBranchIN";
}

Variant parse_variant(std::string_view name) {
  if (name == "objBranch") return Variant::kObjBranch;
  if (name == "sepBranchIN") return Variant::kSepBranchIN;
  if (name == "objBranchIN") return Variant::kObjBranchIN;
  throw InvalidInput("unknown variant '" + std::string(name) +
                     "' (expected objBranch, sepBranchIN or objBranchIN)");
}

void ModelConfig::validate() const {
  if (encoder_widths.size() != 5) throw InvalidInput("model: encoder_widths needs 5 entries");
  for (int w : encoder_widths)
    if (w <= 0) throw InvalidInput("model: encoder widths must be positive");
  if (stride != 2 && stride != 4) throw InvalidInput("model: stride must be 2 or 4");
  const size_t levels = stride == 4 ? 3 : 4;
  if (decoder_widths.size() != levels)
    throw InvalidInput("model: decoder_widths needs " + std::to_string(levels) + " entries");
  for (int w : decoder_widths)
    if (w <= 0) throw InvalidInput("model: decoder widths must be positive");
  if (roi_grid < 16 || roi_grid % 16 != 0)
    throw InvalidInput("model: roi_grid must be a positive multiple of 16");
  if (num_classes < 1 || blocks_per_stage < 1 || head_width < 1 || seg_width < 1 ||
      input_channels < 1)
    throw InvalidInput("model: counts must be positive");
  if (!(norm_epsilon > 0)) throw InvalidInput("model: norm_epsilon must be > 0");
  if (!(wh_scale > 0)) throw InvalidInput("model: wh_scale must be > 0");
}

namespace nn {

// ---------------------------------------------------------------------------

template <typename T>
BasicBlock<T>::BasicBlock(const std::string& name, int in, int out, int stride)
    : conv1_(name + ".conv1", in, out, 3, stride, 1, false),
      conv2_(name + ".conv2", out, out, 3, 1, 1, false),
      bn1_(name + ".bn1", out),
      bn2_(name + ".bn2", out),
      has_proj_(stride != 1 || in != out) {
  if (has_proj_) {
    proj_ = Conv2d<T>(name + ".downsample.conv", in, out, 1, stride, 0, false);
    proj_bn_ = BatchNorm2d<T>(name + ".downsample.bn", out);
  }
}

template <typename T>
void BasicBlock<T>::init(std::mt19937_64& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  if (has_proj_) proj_.init(rng);
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x, bool training) {
  mid_ = bn1_.forward(conv1_.forward(x), training);
  relu_inplace(mid_);
  Tensor<T> y = bn2_.forward(conv2_.forward(mid_), training);
  if (has_proj_) {
    y += proj_bn_.forward(proj_.forward(x), training);
  } else {
    y += x;
  }
  relu_inplace(y);
  out_ = y;
  return y;
}

template <typename T>
Tensor<T> BasicBlock<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  relu_backward_inplace(g, out_);
  Tensor<T> gm = conv2_.backward(bn2_.backward(g));
  relu_backward_inplace(gm, mid_);
  Tensor<T> gx = conv1_.backward(bn1_.backward(gm));
  if (has_proj_) {
    gx += proj_.backward(proj_bn_.backward(g));
  } else {
    gx += g;
  }
  return gx;
}

template <typename T>
void BasicBlock<T>::collect(ParamList<T>& out) {
  conv1_.collect(out);
  bn1_.collect(out);
  conv2_.collect(out);
  bn2_.collect(out);
  if (has_proj_) {
    proj_.collect(out);
    proj_bn_.collect(out);
  }
}

// ---------------------------------------------------------------------------

template <typename T>
ConvBnRelu<T>::ConvBnRelu(const std::string& name, int in, int out, int kernel, int stride)
    : conv_(name + ".conv", in, out, kernel, stride, kernel / 2, false), bn_(name + ".bn", out) {}

template <typename T>
void ConvBnRelu<T>::init(std::mt19937_64& rng) {
  conv_.init(rng);
}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward(const Tensor<T>& x, bool training) {
  out_ = bn_.forward(conv_.forward(x), training);
  relu_inplace(out_);
  return out_;
}

template <typename T>
Tensor<T> ConvBnRelu<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  relu_backward_inplace(g, out_);
  return conv_.backward(bn_.backward(g));
}

template <typename T>
void ConvBnRelu<T>::collect(ParamList<T>& out) {
  conv_.collect(out);
  bn_.collect(out);
}

// ---------------------------------------------------------------------------

template <typename T>
SkipCombine<T>::SkipCombine(const std::string& name, int deep_channels, int shallow_channels,
                            int out, NormKind norm, double eps)
    : deep_channels_(deep_channels),
      norm_(norm),
      conv_(name + ".conv", deep_channels + shallow_channels, out, 3, 1, 1, norm == NormKind::kNone) {
  if (norm == NormKind::kBatch) bn_ = BatchNorm2d<T>(name + ".bn", out, 0.1, eps);
  if (norm == NormKind::kInstance) in_ = InstanceNorm2d<T>(name + ".in", out, eps);
}

template <typename T>
void SkipCombine<T>::init(std::mt19937_64& rng) {
  conv_.init(rng);
}

template <typename T>
Tensor<T> SkipCombine<T>::forward(const Tensor<T>* deep, const Tensor<T>& shallow, bool training) {
  Tensor<T> y;
  if (deep_channels_ > 0) {
    if (!deep) throw std::invalid_argument("SkipCombine: missing deep input");
    y = conv_.forward(concat_channels(upsample2x(*deep), shallow));
  } else {
    y = conv_.forward(shallow);
  }
  if (norm_ == NormKind::kBatch) y = bn_.forward(y, training);
  if (norm_ == NormKind::kInstance) y = in_.forward(y);
  relu_inplace(y);
  out_ = y;
  return y;
}

template <typename T>
void SkipCombine<T>::backward(const Tensor<T>& grad_out, Tensor<T>* grad_deep,
                              Tensor<T>& grad_shallow) {
  Tensor<T> g = grad_out;
  relu_backward_inplace(g, out_);
  if (norm_ == NormKind::kBatch) g = bn_.backward(g);
  if (norm_ == NormKind::kInstance) g = in_.backward(g);
  Tensor<T> gin = conv_.backward(g);
  if (deep_channels_ > 0) {
    Tensor<T> gup;
    split_channels(gin, deep_channels_, gup, grad_shallow);
    if (grad_deep) *grad_deep = upsample2x_backward(gup);
  } else {
    grad_shallow = std::move(gin);
  }
}

template <typename T>
void SkipCombine<T>::collect(ParamList<T>& out) {
  conv_.collect(out);
  if (norm_ == NormKind::kBatch) bn_.collect(out);
  if (norm_ == NormKind::kInstance) in_.collect(out);
}

// ---------------------------------------------------------------------------

template <typename T>
Head<T>::Head(const std::string& name, int in, int mid, int out)
    : conv1_(name + ".conv1", in, mid, 3, 1, 1, true), conv2_(name + ".conv2", mid, out, 1, 1, 0, true) {}

template <typename T>
void Head<T>::init(std::mt19937_64& rng, double final_bias) {
  conv1_.init(rng);
  conv2_.init(rng);
  conv2_.bias.value.fill(T(final_bias));
}

template <typename T>
Tensor<T> Head<T>::forward(const Tensor<T>& x) {
  mid_ = conv1_.forward(x);
  relu_inplace(mid_);
  return conv2_.forward(mid_);
}

template <typename T>
Tensor<T> Head<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = conv2_.backward(grad_out);
  relu_backward_inplace(g, mid_);
  return conv1_.backward(g);
}

template <typename T>
void Head<T>::collect(ParamList<T>& out) {
  conv1_.collect(out);
  conv2_.collect(out);
}

}  // namespace nn

// ---------------------------------------------------------------------------

namespace {

// Heatmap prior of 0.1 at initialisation.
constexpr double kHeatmapPriorBias = -2.19;

int log2_exact(int v) {
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

}  // namespace

template <typename T>
ObjectGuidedNet<T>::ObjectGuidedNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ew = config_.encoder_widths;
  const double eps = config_.norm_epsilon;

  stem_ = nn::ConvBnRelu<T>("encoder.layer1", config_.input_channels, ew[0], 3, 2);
  stages_.resize(4);
  for (int s = 0; s < 4; ++s) {
    const int layer = s + 2;
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const int in = b == 0 ? ew[s] : ew[s + 1];
      stages_[s].emplace_back("encoder.layer" + std::to_string(layer) + "." + std::to_string(b), in,
                              ew[s + 1], b == 0 ? 2 : 1);
    }
  }

  for (int i = 0; i < decoder_levels(); ++i) {
    const int level = 4 - i;
    const int deep = i == 0 ? ew[4] : config_.decoder_widths[i - 1];
    det_blocks_.emplace_back("detection.up" + std::to_string(level), deep, ew[level - 1],
                             config_.decoder_widths[i], NormKind::kBatch, eps);
  }
  const int head_in = config_.decoder_widths.back();
  heat_head_ = nn::Head<T>("detection.heatmap", head_in, config_.head_width, config_.num_classes);
  offset_head_ = nn::Head<T>("detection.offset", head_in, config_.head_width, 2);
  wh_head_ = nn::Head<T>("detection.wh", head_in, config_.head_width, 2);

  const NormKind seg_norm = uses_instance_norm(config_.variant) ? NormKind::kInstance : NormKind::kNone;
  for (int level = 4; level >= 0; --level) {
    seg_blocks_.emplace_back("segmentation.level" + std::to_string(level),
                             level == 4 ? 0 : config_.seg_width, seg_feature_channels(level),
                             config_.seg_width, seg_norm, eps);
  }
  mask_conv_ = nn::Conv2d<T>("segmentation.mask.conv", config_.seg_width, 1, 1, 1, 0, true);
  if (uses_instance_norm(config_.variant))
    mask_norm_ = nn::InstanceNorm2d<T>("segmentation.mask.in", 1, eps);

  std::mt19937_64 rng(config_.init_seed);
  stem_.init(rng);
  for (auto& st : stages_)
    for (auto& b : st) b.init(rng);
  for (auto& b : det_blocks_) b.init(rng);
  heat_head_.init(rng, kHeatmapPriorBias);
  offset_head_.init(rng, 0.0);
  wh_head_.init(rng, 0.0);
  for (auto& b : seg_blocks_) b.init(rng);
  mask_conv_.init(rng);
}

template <typename T>
int ObjectGuidedNet<T>::head_level() const {
  return log2_exact(config_.stride);
}

template <typename T>
int ObjectGuidedNet<T>::seg_feature_channels(int level) const {
  if (level == 0) return config_.input_channels;
  if (level == 1 || !uses_object_features(config_.variant)) return config_.encoder_widths[level - 1];
  return config_.decoder_widths[4 - level];
}

template <typename T>
const nn::Tensor<T>& ObjectGuidedNet<T>::seg_feature(int level) const {
  if (level <= 1 || !uses_object_features(config_.variant)) return enc_.at(level);
  return dec_.at(level);
}

template <typename T>
const nn::Tensor<T>& ObjectGuidedNet<T>::object_feature(int level) const {
  if (level < 0 || level >= static_cast<int>(dec_.size()) || dec_[level].empty())
    throw InvalidInput("object_feature: no detection-branch map at level " + std::to_string(level));
  return dec_[level];
}

template <typename T>
std::vector<const nn::InstanceNorm2d<T>*> ObjectGuidedNet<T>::segmentation_norms() const {
  std::vector<const nn::InstanceNorm2d<T>*> out;
  for (const auto& b : seg_blocks_)
    if (auto* n = b.instance_norm()) out.push_back(n);
  if (uses_instance_norm(config_.variant)) out.push_back(&mask_norm_);
  return out;
}

template <typename T>
DetectionOutput<T> ObjectGuidedNet<T>::forward_detection(const nn::Tensor<T>& images, bool training) {
  if (images.c() != config_.input_channels)
    throw InvalidInput("forward_detection: expected " + std::to_string(config_.input_channels) +
                       " input channels");
  if (images.h() % 32 != 0 || images.w() % 32 != 0 || images.h() == 0 || images.w() == 0)
    throw InvalidInput("forward_detection: input height and width must be divisible by 32");

  enc_.assign(6, {});
  dec_.assign(6, {});
  rois_.clear();
  mask_prob_ = {};

  enc_[0] = images;
  enc_[1] = stem_.forward(images, training);
  for (int s = 0; s < 4; ++s) {
    nn::Tensor<T> x = enc_[s + 1];
    for (auto& b : stages_[s]) x = b.forward(x, training);
    enc_[s + 2] = std::move(x);
  }
  const nn::Tensor<T>* deep = &enc_[5];
  for (int i = 0; i < decoder_levels(); ++i) {
    const int level = 4 - i;
    dec_[level] = det_blocks_[i].forward(deep, enc_[level], training);
    deep = &dec_[level];
  }
  const auto& top = dec_[head_level()];
  DetectionOutput<T> out;
  out.heatmap = heat_head_.forward(top);
  nn::sigmoid_inplace(out.heatmap);
  out.offsets = offset_head_.forward(top);
  out.wh = wh_head_.forward(top);
  for (T& v : out.wh.span()) v *= T(config_.wh_scale);
  det_out_ = out;
  return out;
}

template <typename T>
nn::Tensor<T> ObjectGuidedNet<T>::forward_segmentation(std::span<const nn::RoiRef> rois) {
  if (enc_.empty() || enc_[0].empty())
    throw InvalidInput("forward_segmentation: run forward_detection first");
  const int P = config_.roi_grid;
  rois_.assign(rois.begin(), rois.end());
  if (rois.empty()) {
    mask_prob_ = nn::Tensor<T>(0, 1, P, P);
    return mask_prob_;
  }
  for (const auto& r : rois) {
    if (r.image < 0 || r.image >= enc_[0].n())
      throw InvalidInput("forward_segmentation: RoI image index out of range");
    if (!r.box.valid() || r.box.area() <= 0)
      throw InvalidInput("forward_segmentation: degenerate RoI box");
  }
  nn::Tensor<T> s;
  for (int level = 4; level >= 0; --level) {
    const auto crop = nn::crop_resize(seg_feature(level), rois, double(1 << level), grid_at(level));
    s = seg_blocks_[4 - level].forward(level == 4 ? nullptr : &s, crop, true);
  }
  nn::Tensor<T> logits = mask_conv_.forward(s);
  if (uses_instance_norm(config_.variant)) logits = mask_norm_.forward(logits);
  nn::sigmoid_inplace(logits);
  mask_prob_ = logits;
  return mask_prob_;
}

template <typename T>
void ObjectGuidedNet<T>::backward(const DetectionGrads<T>& grads, const nn::Tensor<T>* mask_grad) {
  using nn::Tensor;
  std::vector<Tensor<T>> g_enc(6), g_dec(6);
  for (int l = 1; l <= 5; ++l) g_enc[l] = Tensor<T>::zeros_like(enc_[l]);
  for (int l = 0; l < 6; ++l)
    if (!dec_[l].empty()) g_dec[l] = Tensor<T>::zeros_like(dec_[l]);

  if (mask_grad && !rois_.empty()) {
    if (!mask_grad->same_shape(mask_prob_))
      throw InvalidInput("backward: mask gradient shape mismatch");
    Tensor<T> g = *mask_grad;
    auto gp = g.span();
    auto pp = mask_prob_.span();
    for (size_t i = 0; i < gp.size(); ++i) gp[i] *= pp[i] * (T(1) - pp[i]);
    if (uses_instance_norm(config_.variant)) g = mask_norm_.backward(g);
    g = mask_conv_.backward(g);
    for (int level = 0; level <= 4; ++level) {
      Tensor<T> g_deep, g_shallow;
      seg_blocks_[4 - level].backward(g, level < 4 ? &g_deep : nullptr, g_shallow);
      if (level >= 1) {
        const bool obj = level >= 2 && uses_object_features(config_.variant);
        nn::crop_resize_backward(g_shallow, rois_, double(1 << level), obj ? g_dec[level] : g_enc[level]);
      }
      g = std::move(g_deep);
    }
  }

  const int hl = head_level();
  {
    Tensor<T> gh = grads.heatmap;
    auto gs = gh.span();
    auto ps = det_out_.heatmap.span();
    for (size_t i = 0; i < gs.size(); ++i) gs[i] *= ps[i] * (T(1) - ps[i]);
    g_dec[hl] += heat_head_.backward(gh);
    g_dec[hl] += offset_head_.backward(grads.offsets);
    Tensor<T> gwh = grads.wh;
    for (T& v : gwh.span()) v *= T(config_.wh_scale);
    g_dec[hl] += wh_head_.backward(gwh);
  }

  for (int i = decoder_levels() - 1; i >= 0; --i) {
    const int level = 4 - i;
    Tensor<T> g_deep, g_shallow;
    det_blocks_[i].backward(g_dec[level], &g_deep, g_shallow);
    g_enc[level] += g_shallow;
    if (level == 4) {
      g_enc[5] += g_deep;
    } else {
      g_dec[level + 1] += g_deep;
    }
  }

  for (int s = 3; s >= 0; --s) {
    Tensor<T> g = g_enc[s + 2];
    for (auto it = stages_[s].rbegin(); it != stages_[s].rend(); ++it) g = it->backward(g);
    g_enc[s + 1] += g;
  }
  stem_.backward(g_enc[1]);
}

template <typename T>
nn::ParamList<T> ObjectGuidedNet<T>::parameters() {
  nn::ParamList<T> out;
  stem_.collect(out);
  for (auto& st : stages_)
    for (auto& b : st) b.collect(out);
  for (auto& b : det_blocks_) b.collect(out);
  heat_head_.collect(out);
  offset_head_.collect(out);
  wh_head_.collect(out);
  for (auto& b : seg_blocks_) b.collect(out);
  mask_conv_.collect(out);
  if (uses_instance_norm(config_.variant)) mask_norm_.collect(out);
  return out;
}

template <typename T>
void ObjectGuidedNet<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T(0));
}

template class ObjectGuidedNet<float>;
template class ObjectGuidedNet<double>;
template class nn::BasicBlock<float>;
template class nn::BasicBlock<double>;
template class nn::ConvBnRelu<float>;
template class nn::ConvBnRelu<double>;
template class nn::SkipCombine<float>;
template class nn::SkipCombine<double>;
template class nn::Head<float>;
template class nn::Head<double>;

}  // namespace objseg
