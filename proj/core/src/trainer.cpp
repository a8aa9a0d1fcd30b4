#include "seglab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "seglab/mixing.hpp"

namespace seglab {

std::string to_string(TrainerVariant v) {
  switch (v) {
    case TrainerVariant::Supervised: return "supervised";
    case TrainerVariant::FixMatch: return "fixmatch";
    case TrainerVariant::UniMatchLite: return "unimatch_lite";
    case TrainerVariant::Ours: return "ours";
  }
  throw std::logic_error("bad variant");
}

std::string to_string(StrongMix m) {
  switch (m) {
    case StrongMix::None: return "none";
    case StrongMix::CutMix: return "cutmix";
    case StrongMix::ClassMix: return "classmix";
    case StrongMix::SupMix: return "supmix";
  }
  throw std::logic_error("bad strong_mix");
}

TrainerVariant variant_from_string(const std::string& s) {
  if (s == "supervised") return TrainerVariant::Supervised;
  if (s == "fixmatch") return TrainerVariant::FixMatch;
  if (s == "unimatch_lite") return TrainerVariant::UniMatchLite;
  if (s == "ours") return TrainerVariant::Ours;
  throw ConfigError("variant: unknown value '" + s + "'");
}

StrongMix strong_mix_from_string(const std::string& s) {
  if (s == "none") return StrongMix::None;
  if (s == "cutmix") return StrongMix::CutMix;
  if (s == "classmix") return StrongMix::ClassMix;
  if (s == "supmix") return StrongMix::SupMix;
  throw ConfigError("strong_mix: unknown value '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs: must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (lr_init < 0.0) throw ConfigError("lr_init: must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum: must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay: must be >= 0");
  if (confidence_threshold <= 0.0 || confidence_threshold > 1.0)
    throw ConfigError("confidence_threshold: must be in (0,1]");
  if (lambda_u < 0.0) throw ConfigError("lambda_u: must be >= 0");
  if (lambda_adv < 0.0) throw ConfigError("lambda_adv: must be >= 0");
  if (crop_size <= 0 || crop_size % 8 != 0)
    throw ConfigError("crop_size: must be a positive multiple of 8");
  if (base_channels < 1) throw ConfigError("base_channels: must be >= 1");

  if (use_supmix && strong_mix != StrongMix::SupMix)
    throw ConfigError("use_supmix: set, but strong_mix is '" + to_string(strong_mix) + "'");
  if (!use_supmix && strong_mix == StrongMix::SupMix)
    throw ConfigError("use_supmix: unset, but strong_mix is 'supmix'");
  if (!use_sufd && lambda_adv != 0.0)
    throw ConfigError("lambda_adv: nonzero without use_sufd");

  switch (variant) {
    case TrainerVariant::Supervised:
      if (lambda_u != 0.0) throw ConfigError("lambda_u: must be 0 for the supervised variant");
      if (lambda_adv != 0.0) throw ConfigError("lambda_adv: must be 0 for the supervised variant");
      if (use_sufd) throw ConfigError("use_sufd: not available for the supervised variant");
      break;
    case TrainerVariant::FixMatch:
    case TrainerVariant::UniMatchLite:
      if (lambda_adv != 0.0) throw ConfigError("lambda_adv: must be 0 for this variant");
      if (use_sufd) throw ConfigError("use_sufd: only the 'ours' variant trains a discriminator");
      break;
    case TrainerVariant::Ours:
      break;
  }
}

TrainData load_train_data(const DatasetManifest& m) {
  TrainData out;
  out.num_classes = m.num_classes;
  for (int i : m.indices(SplitTag::LabeledTrain)) out.labeled.push_back(read_sample(m, i));
  for (int i : m.indices(SplitTag::UnlabeledTrain))
    out.unlabeled.push_back(read_sample(m, i).first);
  for (int i : m.indices(SplitTag::Test)) out.test.push_back(read_sample(m, i));
  return out;
}

// ---------------------------------------------------------------------------
// rng streams and samplers
// ---------------------------------------------------------------------------

namespace {
constexpr std::uint64_t kModelInit = 0x01;
constexpr std::uint64_t kDiscInit = 0x02;
constexpr std::uint64_t kLabeledOrder = 0x03;
constexpr std::uint64_t kUnlabeledOrder = 0x04;
constexpr std::uint64_t kLabeledAug = 0x05;
constexpr std::uint64_t kWeakAug = 0x06;
constexpr std::uint64_t kStrongAug = 0x07;
constexpr std::uint64_t kMixing = 0x08;
constexpr std::uint64_t kFeatureDropout = 0x09;

Rng slot_stream(std::uint64_t seed, std::uint64_t purpose, long step, int slot) {
  return Rng(seed).fork(purpose).fork(static_cast<std::uint64_t>(step),
                                      static_cast<std::uint64_t>(slot));
}
}  // namespace

namespace streams {
Rng model_init(std::uint64_t seed) { return Rng(seed).fork(kModelInit); }
Rng disc_init(std::uint64_t seed) { return Rng(seed).fork(kDiscInit); }
Rng order(std::uint64_t seed, bool labeled, long pass) {
  return Rng(seed).fork(labeled ? kLabeledOrder : kUnlabeledOrder)
      .fork(static_cast<std::uint64_t>(pass));
}
Rng labeled_aug(std::uint64_t seed, long step, int slot) {
  return slot_stream(seed, kLabeledAug, step, slot);
}
Rng unlabeled_weak(std::uint64_t seed, long step, int slot) {
  return slot_stream(seed, kWeakAug, step, slot);
}
Rng unlabeled_strong(std::uint64_t seed, long step, int slot) {
  return slot_stream(seed, kStrongAug, step, slot);
}
Rng mixing(std::uint64_t seed, long step, int slot) {
  return slot_stream(seed, kMixing, step, slot);
}
Rng feature_dropout(std::uint64_t seed, long step, int slot) {
  return slot_stream(seed, kFeatureDropout, step, slot);
}
}  // namespace streams

int cycled_index(std::uint64_t seed, bool labeled, std::size_t pool_size, long step,
                 int batch_size, int slot) {
  if (pool_size == 0) throw std::invalid_argument("cycled_index: empty pool");
  const std::uint64_t flat =
      static_cast<std::uint64_t>(step) * batch_size + static_cast<std::uint64_t>(slot);
  const long pass = static_cast<long>(flat / pool_size);
  const std::size_t offset = static_cast<std::size_t>(flat % pool_size);

  std::vector<int> perm(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) perm[i] = static_cast<int>(i);
  Rng rng = streams::order(seed, labeled, pass);
  for (std::size_t i = 0; i + 1 < pool_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool_size - i));
    std::swap(perm[i], perm[j]);
  }
  return perm[offset];
}

// ---------------------------------------------------------------------------
// pseudo-labels and the adversarial objective
// ---------------------------------------------------------------------------

LabelMap pseudo_label(const Tensor& logits, double tau) {
  if (tau <= 0.0 || tau > 1.0) throw std::invalid_argument("pseudo_label: tau must be in (0,1]");
  if (logits.rank() != 3) throw std::invalid_argument("pseudo_label: logits must be [C,H,W]");
  const int c_n = logits.extent(0), h = logits.extent(1), w = logits.extent(2);
  const size_t plane = static_cast<size_t>(h) * w;
  LabelMap out(h, w);
  for (size_t pix = 0; pix < plane; ++pix) {
    int best = 0;
    double mx = logits[pix];
    for (int c = 1; c < c_n; ++c) {
      const double x = logits[c * plane + pix];
      if (x > mx) {
        mx = x;
        best = c;
      }
    }
    double z = 0.0;
    for (int c = 0; c < c_n; ++c) z += std::exp(logits[c * plane + pix] - mx);
    const double confidence = 1.0 / z;  // exp(0)/z for the max entry
    out.v[pix] = confidence >= tau ? static_cast<std::uint8_t>(best) : kIgnoreIndex;
  }
  return out;
}

SufdLosses sufd_losses(Graph& g, Var o_u, Var o_l) {
  SufdLosses out;
  out.generator = g.bce(o_u, 1.0);
  out.discriminator = g.scale(g.add(g.bce(o_u, 0.0), g.bce(o_l, 1.0)), 0.5);
  return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TrainState init_train_state(const TrainConfig& cfg, int num_classes) {
  cfg.validate();
  TrainState st;
  SegModelConfig mc;
  mc.num_classes = num_classes;
  mc.base_channels = cfg.base_channels;
  mc.feature_dropout = cfg.variant == TrainerVariant::UniMatchLite;
  st.model = std::make_unique<SegModel>(mc, streams::model_init(cfg.seed));
  st.opt_model = std::make_unique<SgdOptimizer>(st.model->parameters(), cfg.momentum,
                                                cfg.weight_decay);
  if (cfg.use_sufd) {
    PatchDiscriminatorConfig dc;
    dc.in_channels = cfg.base_channels;
    dc.base_channels = cfg.base_channels;
    dc.per_image = cfg.disc_per_image;
    st.disc = std::make_unique<PatchDiscriminator>(dc, streams::disc_init(cfg.seed));
    st.opt_disc = std::make_unique<SgdOptimizer>(st.disc->parameters(), cfg.momentum,
                                                 cfg.weight_decay);
  }
  return st;
}

namespace {

Var batch_mean(Graph& g, const std::vector<Var>& terms) {
  Var acc = terms.front();
  for (size_t i = 1; i < terms.size(); ++i) acc = g.add(acc, terms[i]);
  return g.scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

StepLosses train_step(TrainState& st, const TrainConfig& cfg, const TrainData& data,
                      long step, double lr) {
  const int batch = cfg.batch_size;
  const bool semi = cfg.variant != TrainerVariant::Supervised;
  if (data.labeled.empty()) throw ConfigError("dataset: no labeled train samples");
  if (semi && data.unlabeled.empty())
    throw ConfigError("dataset: variant '" + to_string(cfg.variant) +
                      "' needs unlabeled train samples");

  StepLosses out;
  out.lr = lr;
  Graph g;

  // (1) supervised CE on labeled weak views; features kept for SUFD
  std::vector<Var> feat_l(batch);
  std::vector<Var> sup_terms;
  for (int b = 0; b < batch; ++b) {
    const int idx = cycled_index(cfg.seed, true, data.labeled.size(), step, batch, b);
    Rng aug = streams::labeled_aug(cfg.seed, step, b);
    WeakAugmentResult wk =
        weak_augment(data.labeled[idx].first, &data.labeled[idx].second, cfg.crop_size, aug);
    SegModel::Output o = st.model->forward(g, g.constant(std::move(wk.image)));
    feat_l[b] = o.features;
    sup_terms.push_back(g.softmax_ce(o.logits, wk.label));
  }
  Var l_sup = batch_mean(g, sup_terms);
  out.sup = l_sup.scalar();
  Var total = l_sup;

  std::vector<Tensor> feat_w_detached, feat_l_detached;
  if (semi) {
    // (2) weak/strong unlabeled views; the weak forward carries gradients
    // only when something trains through it
    std::vector<AugmentedViews> views(batch);
    for (int b = 0; b < batch; ++b) {
      const int idx = cycled_index(cfg.seed, false, data.unlabeled.size(), step, batch, b);
      Rng weak_rng = streams::unlabeled_weak(cfg.seed, step, b);
      Rng strong_rng = streams::unlabeled_strong(cfg.seed, step, b);
      views[b] = make_views(data.unlabeled[idx], nullptr, cfg.crop_size, weak_rng,
                            strong_rng, cfg.strong_aug);
    }

    const bool weak_grad = cfg.use_sufd || cfg.variant == TrainerVariant::UniMatchLite;
    std::vector<Var> logits_w(batch), feat_w(batch);
    {
      std::optional<Graph::NoGrad> guard;
      if (!weak_grad) guard.emplace(g);
      for (int b = 0; b < batch; ++b) {
        SegModel::Output o = st.model->forward(g, g.constant(views[b].weak));
        logits_w[b] = o.logits;
        feat_w[b] = o.features;
      }
    }
    std::vector<LabelMap> pl(batch);
    for (int b = 0; b < batch; ++b)
      pl[b] = pseudo_label(g.value(logits_w[b]), cfg.confidence_threshold);

    // (3) strong-view mixing
    std::vector<Tensor> mixed_img(batch);
    std::vector<LabelMap> mixed_lbl(batch);
    for (int b = 0; b < batch; ++b) {
      Rng mix = streams::mixing(cfg.seed, step, b);
      switch (cfg.strong_mix) {
        case StrongMix::None: {
          mixed_img[b] = views[b].strong;
          mixed_lbl[b] = pl[b];
          break;
        }
        case StrongMix::CutMix: {
          const int p = (b + 1) % batch;
          MixResult r = cutmix(views[p].strong, pl[p], views[b].strong, pl[b], mix);
          mixed_img[b] = std::move(r.image);
          mixed_lbl[b] = std::move(r.label);
          break;
        }
        case StrongMix::ClassMix: {
          const int p = (b + 1) % batch;
          const auto sel = select_classmix_classes(present_classes(pl[p]), mix);
          MixResult r = compose(views[p].strong, pl[p], views[b].strong, pl[b],
                                build_mask(pl[p], sel));
          mixed_img[b] = std::move(r.image);
          mixed_lbl[b] = std::move(r.label);
          break;
        }
        case StrongMix::SupMix: {
          // labeled partner drawn with replacement and re-augmented fresh
          const int j = static_cast<int>(mix.below(data.labeled.size()));
          WeakAugmentResult lw = weak_augment(data.labeled[j].first,
                                              &data.labeled[j].second, cfg.crop_size, mix);
          MixResult r = supmix(lw.image, lw.label, views[b].strong, pl[b],
                               cfg.background_class, mix);
          mixed_img[b] = std::move(r.image);
          mixed_lbl[b] = std::move(r.label);
          break;
        }
      }
    }

    // (4) consistency CE on the mixed strong views
    std::vector<Var> strong_terms;
    for (int b = 0; b < batch; ++b) {
      SegModel::Output o = st.model->forward(g, g.constant(std::move(mixed_img[b])));
      strong_terms.push_back(g.softmax_ce(o.logits, mixed_lbl[b]));
    }
    Var l_unsup = batch_mean(g, strong_terms);

    if (cfg.variant == TrainerVariant::UniMatchLite) {
      // second perturbation: feature dropout on the weak view
      std::vector<Var> fp_terms;
      for (int b = 0; b < batch; ++b) {
        Rng fd = streams::feature_dropout(cfg.seed, step, b);
        Var fp_logits = st.model->apply_head(g, feat_w[b], true, &fd);
        fp_terms.push_back(g.softmax_ce(fp_logits, pl[b]));
      }
      l_unsup = g.scale(g.add(l_unsup, batch_mean(g, fp_terms)), 0.5);
    }
    out.unsup = l_unsup.scalar();
    total = g.add(total, g.scale(l_unsup, cfg.lambda_u));

    // (5) generator half of the adversarial objective, on live weak features
    if (cfg.use_sufd) {
      std::vector<Var> gen_terms;
      for (int b = 0; b < batch; ++b)
        gen_terms.push_back(g.bce(st.disc->forward(g, feat_w[b]), 1.0));
      Var l_gen = batch_mean(g, gen_terms);
      out.gen = l_gen.scalar();
      total = g.add(total, g.scale(l_gen, cfg.lambda_adv));

      feat_w_detached.reserve(batch);
      feat_l_detached.reserve(batch);
      for (int b = 0; b < batch; ++b) {
        feat_w_detached.push_back(g.value(feat_w[b]));
        feat_l_detached.push_back(g.value(feat_l[b]));
      }
    }
  }

  st.opt_model->zero_grad();
  g.backward(total);
  st.opt_model->step(lr);

  // (6) discriminator step on detached features; the generator loss above
  // also spilled gradients into the discriminator, so they are cleared first
  if (cfg.use_sufd) {
    st.opt_disc->zero_grad();
    Graph gd;
    std::vector<Var> disc_terms;
    for (int b = 0; b < batch; ++b) {
      Var o_u = st.disc->forward(gd, gd.constant(std::move(feat_w_detached[b])));
      Var o_l = st.disc->forward(gd, gd.constant(std::move(feat_l_detached[b])));
      disc_terms.push_back(sufd_losses(gd, o_u, o_l).discriminator);
    }
    Var l_disc = batch_mean(gd, disc_terms);
    out.disc = l_disc.scalar();
    gd.backward(l_disc);
    st.opt_disc->step(lr);
  }

  ++st.step;
  return out;
}

long steps_per_epoch(const TrainConfig& cfg, const TrainData& data) {
  const std::size_t pool = cfg.variant == TrainerVariant::Supervised
                               ? data.labeled.size()
                               : data.unlabeled.size();
  if (pool == 0) throw ConfigError("dataset: empty training pool for this variant");
  return static_cast<long>((pool + cfg.batch_size - 1) / cfg.batch_size);
}

TrainState run_training(const TrainConfig& cfg, const TrainData& data) {
  cfg.validate();
  TrainState st = init_train_state(cfg, data.num_classes);
  if (cfg.epochs == 0) return st;
  const long spe = steps_per_epoch(cfg, data);
  const long total_steps = spe * cfg.epochs;
  const PolySchedule sched(cfg.lr_init, total_steps);
  st.trace.reserve(total_steps);
  for (long s = 0; s < total_steps; ++s) {
    const double lr = poly_lr(s, sched);
    st.trace.push_back(train_step(st, cfg, data, s, lr));
  }
  return st;
}

LabelMap predict(SegModel& model, const Tensor& image) {
  Graph g;
  Graph::NoGrad guard(g);
  return argmax_labels(g.value(model.forward(g, image).logits));
}

ConfusionMatrix evaluate(SegModel& model,
                         const std::vector<std::pair<Tensor, LabelMap>>& samples,
                         int num_classes) {
  ConfusionMatrix cm(num_classes);
  for (const auto& [image, truth] : samples) cm.accumulate(predict(model, image), truth);
  return cm;
}

}  // namespace seglab
