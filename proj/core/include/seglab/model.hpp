#pragma once

#include <string>
#include <vector>

#include "seglab/graph.hpp"
#include "seglab/rng.hpp"

namespace seglab {

// One conv weight/bias pair with its geometry.
struct ConvLayer {
  Param weight;  // [Co,Ci,k,k]
  Param bias;    // [Co]
  int stride = 1;
  int pad = 1;

  ConvLayer() = default;
  // He-style fan-in normal init, seeded; zero bias.
  ConvLayer(const std::string& name, int ci, int co, int k, int stride_, int pad_,
            Rng& rng, bool zero_init = false);

  Var forward(Graph& g, Var x) {
    return g.conv2d(x, g.param(weight), g.param(bias), stride, pad);
  }
};

struct SegModelConfig {
  int in_channels = 3;
  int num_classes = 2;
  // width of the first encoder stage; later stages double it
  int base_channels = 16;
  // feature-dropout stage between decoder output and class head
  bool feature_dropout = false;
  double feature_dropout_p = 0.5;
};

// Encoder-decoder segmentation network. Three encoder blocks (each a
// stride-2 conv followed by a stride-1 conv, ReLU throughout) take the input
// down 8x; the decoder mirrors them with bilinear 2x upsampling, and a 1x1
// head maps the decoder features to class logits. forward() exposes both the
// logits and the pre-head decoder feature map.
class SegModel {
 public:
  struct Output {
    Var logits;    // [C,H,W]
    Var features;  // [base,H,W], decoder output before the head
  };

  SegModel(SegModelConfig cfg, Rng rng);

  // image: [3,H,W] with H, W divisible by 8. When with_feature_dropout is
  // true (and the config enables the stage) dropout is applied between the
  // decoder features and the head, drawing its mask from rng.
  Output forward(Graph& g, Var image, bool with_feature_dropout = false,
                 Rng* rng = nullptr);
  Output forward(Graph& g, const Tensor& image, bool with_feature_dropout = false,
                 Rng* rng = nullptr);

  // Re-applies the (dropout +) head stage to an existing feature map.
  Var apply_head(Graph& g, Var features, bool with_feature_dropout = false,
                 Rng* rng = nullptr);

  std::vector<Param*> parameters();
  const SegModelConfig& config() const { return cfg_; }
  std::size_t parameter_count();

 private:
  SegModelConfig cfg_;
  std::vector<ConvLayer> enc_;  // 6 convs: (s2, s1) x 3 blocks
  std::vector<ConvLayer> dec_;  // 3 convs, one after each upsample
  ConvLayer head_;
};

struct PatchDiscriminatorConfig {
  int in_channels = 16;
  int base_channels = 16;
  // collapse the per-location probability map to its per-image mean
  bool per_image = false;
};

// Three stride-2 convs + sigmoid mapping a feature map to per-location
// real/fake probabilities in (0,1). The final conv is zero-initialized so an
// untrained discriminator outputs exactly 0.5 everywhere.
class PatchDiscriminator {
 public:
  PatchDiscriminator(PatchDiscriminatorConfig cfg, Rng rng);

  Var forward(Graph& g, Var features);
  Var forward(Graph& g, const Tensor& features);

  std::vector<Param*> parameters();
  const PatchDiscriminatorConfig& config() const { return cfg_; }

 private:
  PatchDiscriminatorConfig cfg_;
  std::vector<ConvLayer> layers_;
};

}  // namespace seglab
