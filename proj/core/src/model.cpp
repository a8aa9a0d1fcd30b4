#include "seglab/model.hpp"

#include <cmath>
#include <stdexcept>

namespace seglab {

ConvLayer::ConvLayer(const std::string& name, int ci, int co, int k, int stride_,
                     int pad_, Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
  Tensor w({co, ci, k, k});
  if (!zero_init) {
    const double std = std::sqrt(2.0 / (static_cast<double>(ci) * k * k));
    for (auto& x : w.values()) x = rng.normal(0.0, std);
  }
  weight = Param(name + ".weight", std::move(w));
  bias = Param(name + ".bias", Tensor({co}, 0.0));
}

SegModel::SegModel(SegModelConfig cfg, Rng rng) : cfg_(cfg) {
  const int b = cfg.base_channels;
  enc_.emplace_back("enc1.down", cfg.in_channels, b, 3, 2, 1, rng);
  enc_.emplace_back("enc1.conv", b, b, 3, 1, 1, rng);
  enc_.emplace_back("enc2.down", b, 2 * b, 3, 2, 1, rng);
  enc_.emplace_back("enc2.conv", 2 * b, 2 * b, 3, 1, 1, rng);
  enc_.emplace_back("enc3.down", 2 * b, 4 * b, 3, 2, 1, rng);
  enc_.emplace_back("enc3.conv", 4 * b, 4 * b, 3, 1, 1, rng);
  dec_.emplace_back("dec1.conv", 4 * b, 2 * b, 3, 1, 1, rng);
  dec_.emplace_back("dec2.conv", 2 * b, b, 3, 1, 1, rng);
  dec_.emplace_back("dec3.conv", b, b, 3, 1, 1, rng);
  head_ = ConvLayer("head", b, cfg.num_classes, 1, 1, 0, rng);
}

SegModel::Output SegModel::forward(Graph& g, Var image, bool with_feature_dropout,
                                   Rng* rng) {
  const Tensor& v = g.value(image);
  if (v.rank() != 3 || v.extent(0) != cfg_.in_channels)
    throw std::invalid_argument("SegModel: expected [" + std::to_string(cfg_.in_channels) +
                                ",H,W] input, got " + v.shape_str());
  if (v.extent(1) % 8 != 0 || v.extent(2) % 8 != 0)
    throw std::invalid_argument("SegModel: spatial extents must be divisible by 8, got " +
                                v.shape_str());

  Var x = image;
  for (auto& layer : enc_) x = g.relu(layer.forward(g, x));
  for (auto& layer : dec_) x = g.relu(layer.forward(g, g.upsample2x(x)));
  Var features = x;
  Var logits = apply_head(g, features, with_feature_dropout, rng);
  return {logits, features};
}

SegModel::Output SegModel::forward(Graph& g, const Tensor& image,
                                   bool with_feature_dropout, Rng* rng) {
  return forward(g, g.constant(image), with_feature_dropout, rng);
}

Var SegModel::apply_head(Graph& g, Var features, bool with_feature_dropout, Rng* rng) {
  Var x = features;
  if (with_feature_dropout && cfg_.feature_dropout) {
    if (!rng) throw std::invalid_argument("SegModel: feature dropout needs an rng");
    x = g.dropout(x, cfg_.feature_dropout_p, true, *rng);
  }
  return head_.forward(g, x);
}

std::vector<Param*> SegModel::parameters() {
  std::vector<Param*> out;
  for (auto& l : enc_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& l : dec_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

std::size_t SegModel::parameter_count() {
  std::size_t n = 0;
  for (const Param* p : parameters()) n += p->value.size();
  return n;
}

PatchDiscriminator::PatchDiscriminator(PatchDiscriminatorConfig cfg, Rng rng)
    : cfg_(cfg) {
  const int b = cfg.base_channels;
  layers_.emplace_back("disc1", cfg.in_channels, b, 3, 2, 1, rng);
  layers_.emplace_back("disc2", b, 2 * b, 3, 2, 1, rng);
  layers_.emplace_back("disc3", 2 * b, 1, 3, 2, 1, rng, /*zero_init=*/true);
}

Var PatchDiscriminator::forward(Graph& g, Var features) {
  const Tensor& v = g.value(features);
  if (v.rank() != 3 || v.extent(0) != cfg_.in_channels)
    throw std::invalid_argument("PatchDiscriminator: expected [" +
                                std::to_string(cfg_.in_channels) + ",h,w] input, got " +
                                v.shape_str());
  Var x = features;
  for (size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(g, x);
    if (i + 1 < layers_.size()) x = g.relu(x);
  }
  x = g.sigmoid(x);
  if (cfg_.per_image) x = g.mean(x);
  return x;
}

Var PatchDiscriminator::forward(Graph& g, const Tensor& features) {
  return forward(g, g.constant(features));
}

std::vector<Param*> PatchDiscriminator::parameters() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

}  // namespace seglab
