#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seglab/augment.hpp"
#include "seglab/data.hpp"
#include "seglab/graph.hpp"
#include "seglab/metrics.hpp"
#include "seglab/model.hpp"
#include "seglab/optim.hpp"

namespace seglab {

enum class TrainerVariant { Supervised, FixMatch, UniMatchLite, Ours };
enum class StrongMix { None, CutMix, ClassMix, SupMix };

std::string to_string(TrainerVariant v);
std::string to_string(StrongMix m);
TrainerVariant variant_from_string(const std::string& s);
StrongMix strong_mix_from_string(const std::string& s);

// Raised when a configuration violates an invariant; the message names the
// offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  TrainerVariant variant = TrainerVariant::Ours;
  int epochs = 100;
  int batch_size = 4;
  double lr_init = 4e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double confidence_threshold = 0.95;
  double lambda_u = 1.0;
  double lambda_adv = 0.01;
  int crop_size = 64;
  std::uint64_t seed = 1;
  bool use_supmix = true;
  bool use_sufd = true;
  StrongMix strong_mix = StrongMix::SupMix;
  std::uint8_t background_class = 0;
  int base_channels = 16;
  bool disc_per_image = false;
  StrongAugmentParams strong_aug;

  // Throws ConfigError on variant/toggle inconsistencies.
  void validate() const;
};

// In-memory training views of a manifest split.
struct TrainData {
  int num_classes = 0;
  std::vector<std::pair<Tensor, LabelMap>> labeled;
  std::vector<Tensor> unlabeled;
  std::vector<std::pair<Tensor, LabelMap>> test;
};

TrainData load_train_data(const DatasetManifest& m);

struct StepLosses {
  double lr = 0.0;
  double sup = 0.0;
  double unsup = 0.0;
  double gen = 0.0;
  double disc = 0.0;
};

struct TrainState {
  std::unique_ptr<SegModel> model;
  std::unique_ptr<PatchDiscriminator> disc;  // present iff use_sufd
  std::unique_ptr<SgdOptimizer> opt_model;
  std::unique_ptr<SgdOptimizer> opt_disc;
  long step = 0;
  std::vector<StepLosses> trace;
};

// Seeds the model (and discriminator when the config wants one).
TrainState init_train_state(const TrainConfig& cfg, int num_classes);

// Per-purpose RNG substreams. Derived from (run seed, purpose, step, slot)
// so that variants consuming different subsets of streams still agree on the
// shared ones; this is what makes the reduction chain bit-exact.
namespace streams {
Rng model_init(std::uint64_t seed);
Rng disc_init(std::uint64_t seed);
Rng order(std::uint64_t seed, bool labeled, long pass);
Rng labeled_aug(std::uint64_t seed, long step, int slot);
Rng unlabeled_weak(std::uint64_t seed, long step, int slot);
Rng unlabeled_strong(std::uint64_t seed, long step, int slot);
Rng mixing(std::uint64_t seed, long step, int slot);
Rng feature_dropout(std::uint64_t seed, long step, int slot);
}  // namespace streams

// Index of the sample used at (step, slot): cycles through a per-pass
// shuffled order of the pool. Stateless, so a step can be reproduced in
// isolation.
int cycled_index(std::uint64_t seed, bool labeled, std::size_t pool_size,
                 long step, int batch_size, int slot);

// Per pixel: argmax class when the max softmax probability reaches tau, the
// ignore index otherwise.
LabelMap pseudo_label(const Tensor& logits, double tau);

// Both roles of the adversarial objective on discriminator probability
// maps: generator = B(o_u, 1), discriminator = (B(o_u, 0) + B(o_l, 1)) / 2.
// The caller routes gradients: the generator term is built on live features,
// the discriminator term on detached ones.
struct SufdLosses {
  Var generator;
  Var discriminator;
};
SufdLosses sufd_losses(Graph& g, Var o_u, Var o_l);

// One optimizer step of the configured variant (plus one discriminator step
// when the adversarial loss is on). lr comes from the schedule at this step.
StepLosses train_step(TrainState& state, const TrainConfig& cfg, const TrainData& data,
                      long step, double lr);

// Steps per epoch: ceil(unlabeled/batch) for semi-supervised variants (the
// labeled sampler cycles), ceil(labeled/batch) for the supervised one.
long steps_per_epoch(const TrainConfig& cfg, const TrainData& data);

// Full training run; deterministic given cfg.seed.
TrainState run_training(const TrainConfig& cfg, const TrainData& data);

// Argmax prediction with gradients off.
LabelMap predict(SegModel& model, const Tensor& image);

// Confusion counts of the model over labeled (image, truth) pairs.
ConfusionMatrix evaluate(SegModel& model,
                         const std::vector<std::pair<Tensor, LabelMap>>& samples,
                         int num_classes);

}  // namespace seglab
