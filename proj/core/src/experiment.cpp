#include "seglab/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "seglab/checkpoint.hpp"
#include "seglab/svg.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace seglab {

namespace {

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fmt9(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

void atomic_write_text(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << text;
  }
  fs::rename(tmp, path);
}

// first-error-wins parallel loop over [0, n)
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  const int workers = static_cast<int>(std::min<std::size_t>(jobs, n));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::scoped_lock lk(error_mu);
          if (error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::scoped_lock lk(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

int run_jobs(std::size_t tasks) {
  int jobs = 0;
  if (const char* env = std::getenv("SEGLAB_JOBS")) jobs = std::atoi(env);
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs <= 0) jobs = 1;
  return static_cast<int>(std::min<std::size_t>(jobs, std::max<std::size_t>(tasks, 1)));
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name: must not be empty");
  if (dataset.empty()) throw ConfigError("dataset: must not be empty");
  if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
  if (seeds.empty()) throw ConfigError("seeds: must not be empty");
  if (labeled_ratio <= 0.0 || labeled_ratio > 1.0)
    throw ConfigError("labeled_ratio: must be in (0,1]");
  train.validate();
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }

  static const std::vector<std::string> known = {
      "name", "dataset", "out_dir", "seeds", "labeled_ratio", "split_seed",
      "variant", "epochs", "batch_size", "lr_init", "momentum", "weight_decay",
      "confidence_threshold", "lambda_u", "lambda_adv", "crop_size", "use_supmix",
      "use_sufd", "strong_mix", "background_class", "base_channels", "disc_per_image"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("config: unknown key '" + it.key() + "'");

  ExperimentConfig cfg;
  try {
    if (j.contains("name")) cfg.name = j["name"].get<std::string>();
    if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("labeled_ratio")) cfg.labeled_ratio = j["labeled_ratio"].get<double>();
    if (j.contains("split_seed")) cfg.split_seed = j["split_seed"].get<std::uint64_t>();

    TrainConfig& t = cfg.train;
    t.variant = variant_from_string(
        j.contains("variant") ? j["variant"].get<std::string>() : "ours");

    // variant-dependent defaults; explicit keys win and are validated
    const bool ours = t.variant == TrainerVariant::Ours;
    const bool supervised = t.variant == TrainerVariant::Supervised;
    t.strong_mix = strong_mix_from_string(
        j.contains("strong_mix") ? j["strong_mix"].get<std::string>()
                                 : (supervised ? "none" : (ours ? "supmix" : "cutmix")));
    t.use_supmix = j.contains("use_supmix") ? j["use_supmix"].get<bool>()
                                            : t.strong_mix == StrongMix::SupMix;
    t.use_sufd = j.contains("use_sufd") ? j["use_sufd"].get<bool>() : ours;
    t.lambda_u = j.contains("lambda_u") ? j["lambda_u"].get<double>()
                                        : (supervised ? 0.0 : 1.0);
    t.lambda_adv = j.contains("lambda_adv") ? j["lambda_adv"].get<double>()
                                            : (t.use_sufd ? 0.01 : 0.0);

    if (j.contains("epochs")) t.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<int>();
    if (j.contains("lr_init")) t.lr_init = j["lr_init"].get<double>();
    if (j.contains("momentum")) t.momentum = j["momentum"].get<double>();
    if (j.contains("weight_decay")) t.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("confidence_threshold"))
      t.confidence_threshold = j["confidence_threshold"].get<double>();
    if (j.contains("crop_size")) t.crop_size = j["crop_size"].get<int>();
    if (j.contains("background_class"))
      t.background_class = static_cast<std::uint8_t>(j["background_class"].get<int>());
    if (j.contains("base_channels")) t.base_channels = j["base_channels"].get<int>();
    if (j.contains("disc_per_image")) t.disc_per_image = j["disc_per_image"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void write_resolved_config(const ExperimentConfig& cfg, const std::string& path) {
  json j;
  j["name"] = cfg.name;
  j["dataset"] = cfg.dataset;
  j["out_dir"] = cfg.out_dir;
  j["seeds"] = cfg.seeds;
  j["labeled_ratio"] = cfg.labeled_ratio;
  j["split_seed"] = cfg.split_seed;
  const TrainConfig& t = cfg.train;
  j["variant"] = to_string(t.variant);
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["lr_init"] = t.lr_init;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  j["confidence_threshold"] = t.confidence_threshold;
  j["lambda_u"] = t.lambda_u;
  j["lambda_adv"] = t.lambda_adv;
  j["crop_size"] = t.crop_size;
  j["use_supmix"] = t.use_supmix;
  j["use_sufd"] = t.use_sufd;
  j["strong_mix"] = to_string(t.strong_mix);
  j["background_class"] = static_cast<int>(t.background_class);
  j["base_channels"] = t.base_channels;
  j["disc_per_image"] = t.disc_per_image;
  atomic_write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// loss traces and metrics files
// ---------------------------------------------------------------------------

void write_loss_csv(const std::string& path, const std::vector<StepLosses>& trace) {
  std::string out = "step,lr,loss_sup,loss_unsup,loss_gen,loss_disc\n";
  for (size_t i = 0; i < trace.size(); ++i) {
    const StepLosses& s = trace[i];
    out += std::to_string(i) + "," + fmt17(s.lr) + "," + fmt17(s.sup) + "," +
           fmt17(s.unsup) + "," + fmt17(s.gen) + "," + fmt17(s.disc) + "\n";
  }
  atomic_write_text(path, out);
}

std::vector<StepLosses> read_loss_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path + ": empty file");
  std::vector<StepLosses> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    StepLosses s;
    long step = 0;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf,%lf", &step, &s.lr, &s.sup,
                    &s.unsup, &s.gen, &s.disc) != 6)
      throw std::runtime_error(path + ": malformed row '" + line + "'");
    out.push_back(s);
  }
  return out;
}

void write_metrics_csv(const std::string& path, const std::string& variant,
                       double labeled_ratio, const std::vector<std::string>& class_names,
                       const std::vector<MetricsReport>& per_seed,
                       const MetricsReport& aggregate) {
  std::string out = "variant,labeled_ratio,seed";
  for (const auto& n : class_names) out += ",iou_" + n;
  out += ",miou\n";
  auto row = [&](const std::string& seed_cell, const MetricsReport& r, bool with_std) {
    out += variant + "," + fmt9(labeled_ratio) + "," + seed_cell;
    for (size_t c = 0; c < class_names.size(); ++c) {
      out += ",";
      if (c < r.iou_defined.size() && r.iou_defined[c]) {
        out += fmt9(r.iou_mean[c]);
        if (with_std) out += "±" + fmt9(r.iou_std[c]);
      }
    }
    out += "," + fmt9(r.miou_mean);
    if (with_std) out += "±" + fmt9(r.miou_std);
    out += "\n";
  };
  for (const auto& r : per_seed) row(std::to_string(r.seeds.at(0)), r, false);
  row("aggregate", aggregate, true);
  atomic_write_text(path, out);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

DatasetManifest cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                             std::ostream& log) {
  const SyntheticSpec spec = load_synthetic_spec(spec_path);
  const DatasetManifest m = generate_dataset(spec, out_dir);
  log << "dataset '" << m.name << "': " << m.samples.size() << " samples ("
      << m.indices(SplitTag::LabeledTrain).size() +
             m.indices(SplitTag::UnlabeledTrain).size()
      << " train, " << m.indices(SplitTag::Test).size() << " test) at " << m.width << "x"
      << m.height << "\n";
  for (int c = 0; c < m.num_classes; ++c)
    log << "  class " << c << " (" << m.class_names[c] << "): target "
        << fmt9(spec.class_ratios[c]) << ", achieved " << fmt9(m.achieved_ratios[c])
        << "\n";
  return m;
}

namespace {

std::vector<const Param*> checkpoint_params(TrainState& st) {
  std::vector<const Param*> out;
  for (Param* p : st.model->parameters()) out.push_back(p);
  if (st.disc)
    for (Param* p : st.disc->parameters()) out.push_back(p);
  return out;
}

MetricsReport evaluate_state(TrainState& st, const TrainData& data, std::uint64_t seed) {
  return report_from(evaluate(*st.model, data.test, data.num_classes),
                     static_cast<long>(seed));
}

}  // namespace

ExperimentResult cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const DatasetManifest manifest = load_manifest(cfg.dataset);
  const DatasetManifest split = split_dataset(manifest, cfg.labeled_ratio, cfg.split_seed);
  const TrainData data = load_train_data(split);

  const fs::path exp_dir = fs::path(cfg.out_dir) / cfg.name;
  fs::create_directories(exp_dir);
  write_resolved_config(cfg, (exp_dir / "config.json").string());

  ExperimentResult result;
  result.dir = exp_dir.string();
  result.runs.resize(cfg.seeds.size());

  std::mutex log_mu;
  parallel_for(cfg.seeds.size(), run_jobs(cfg.seeds.size()), [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    TrainState st = run_training(tc, data);

    const fs::path run_dir = exp_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(run_dir);
    save_checkpoint((run_dir / "checkpoint.bin").string(), checkpoint_params(st));
    write_loss_csv((run_dir / "losses.csv").string(), st.trace);

    SeedRun& run = result.runs[i];
    run.seed = seed;
    run.dir = run_dir.string();
    run.report = evaluate_state(st, data, seed);
    run.trace = std::move(st.trace);
    {
      std::scoped_lock lk(log_mu);
      log << cfg.name << " seed " << seed << ": mIoU " << fmt9(run.report.miou_mean)
          << "\n";
    }
  });

  std::vector<MetricsReport> reports;
  for (const auto& r : result.runs) reports.push_back(r.report);
  result.aggregate = aggregate_seeds(reports);
  log << cfg.name << " aggregate mIoU " << fmt9(result.aggregate.miou_mean) << "±"
      << fmt9(result.aggregate.miou_std) << "\n";
  return result;
}

MetricsReport cmd_eval(const std::string& run_dir, const std::string& dataset,
                       const std::string& out_csv, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(dataset);
  const TrainData data = load_train_data(manifest);

  // a run directory either holds checkpoint.bin itself or seed_*/ children
  std::vector<std::pair<long, std::string>> checkpoints;
  if (fs::exists(fs::path(run_dir) / "checkpoint.bin")) {
    checkpoints.emplace_back(0, (fs::path(run_dir) / "checkpoint.bin").string());
  } else {
    std::vector<fs::path> dirs;
    if (fs::exists(run_dir))
      for (const auto& e : fs::directory_iterator(run_dir))
        if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0 &&
            fs::exists(e.path() / "checkpoint.bin"))
          dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs)
      checkpoints.emplace_back(std::stol(d.filename().string().substr(5)),
                               (d / "checkpoint.bin").string());
  }
  if (checkpoints.empty())
    throw std::runtime_error("eval: no checkpoint.bin under " + run_dir);

  std::vector<MetricsReport> reports;
  for (const auto& [seed, path] : checkpoints) {
    const auto state = load_checkpoint(path);
    const auto head = state.find("head.weight");
    if (head == state.end())
      throw std::runtime_error("eval: " + path + " has no head.weight tensor");
    const int ckpt_classes = head->second.extent(0);
    if (ckpt_classes != manifest.num_classes)
      throw std::runtime_error("eval: class-count mismatch: checkpoint has " +
                               std::to_string(ckpt_classes) + " classes, manifest has " +
                               std::to_string(manifest.num_classes));
    SegModelConfig mc;
    mc.num_classes = ckpt_classes;
    mc.base_channels = head->second.extent(1);
    SegModel model(mc, Rng(0));
    load_into(state, model.parameters());
    reports.push_back(report_from(evaluate(model, data.test, manifest.num_classes), seed));
    log << "seed " << seed << ": mIoU " << fmt9(reports.back().miou_mean) << "\n";
  }

  const MetricsReport aggregate = aggregate_seeds(reports);
  write_metrics_csv(out_csv, "checkpoint", 0.0, manifest.class_names, reports, aggregate);
  log << "aggregate mIoU " << fmt9(aggregate.miou_mean) << "±" << fmt9(aggregate.miou_std)
      << " -> " << out_csv << "\n";
  return aggregate;
}

const std::vector<AblatePreset>& ablate_presets() {
  static const std::vector<AblatePreset> presets = {
      {"cutmix", TrainerVariant::FixMatch, StrongMix::CutMix, false},
      {"classmix", TrainerVariant::FixMatch, StrongMix::ClassMix, false},
      {"supmix", TrainerVariant::FixMatch, StrongMix::SupMix, false},
      {"sufd", TrainerVariant::Ours, StrongMix::CutMix, true},
      {"ours", TrainerVariant::Ours, StrongMix::SupMix, true},
  };
  return presets;
}

std::string cmd_ablate(const ExperimentConfig& base, std::ostream& log) {
  base.validate();
  const DatasetManifest manifest = load_manifest(base.dataset);

  // the rarest class drives the headline comparison
  int rare_class = 0;
  for (int c = 0; c < manifest.num_classes; ++c)
    if (manifest.achieved_ratios[c] < manifest.achieved_ratios[rare_class]) rare_class = c;

  const std::vector<double> ratios = {1.0 / 8.0, 1.0 / 4.0};
  const fs::path out_root = fs::path(base.out_dir) / (base.name + "_ablation");
  fs::create_directories(out_root);

  struct Cell {
    AblatePreset preset;
    double ratio;
    ExperimentConfig cfg;
    ExperimentResult result;
  };
  std::vector<Cell> cells;
  for (const auto& preset : ablate_presets())
    for (double ratio : ratios) {
      ExperimentConfig cfg = base;
      cfg.train.variant = preset.variant;
      cfg.train.strong_mix = preset.strong_mix;
      cfg.train.use_supmix = preset.strong_mix == StrongMix::SupMix;
      cfg.train.use_sufd = preset.use_sufd;
      cfg.train.lambda_adv = preset.use_sufd ? (base.train.lambda_adv > 0.0
                                                    ? base.train.lambda_adv
                                                    : 0.01)
                                             : 0.0;
      cfg.labeled_ratio = ratio;
      cfg.out_dir = out_root.string();
      cfg.name = preset.name + (ratio == ratios[0] ? "_r8" : "_r4");
      cfg.validate();
      cells.push_back({preset, ratio, std::move(cfg), {}});
    }

  for (auto& cell : cells) cell.result = cmd_train(cell.cfg, log);

  // per-cell metrics files plus the combined comparison table
  std::string csv = "preset,labeled_ratio,rare_class,rare_iou_mean,rare_iou_std,"
                    "miou_mean,miou_std\n";
  for (auto& cell : cells) {
    std::vector<MetricsReport> per_seed;
    for (const auto& r : cell.result.runs) per_seed.push_back(r.report);
    write_metrics_csv((fs::path(cell.result.dir) / "metrics.csv").string(),
                      cell.preset.name, cell.ratio, manifest.class_names, per_seed,
                      cell.result.aggregate);
    const MetricsReport& agg = cell.result.aggregate;
    csv += cell.preset.name + "," + fmt9(cell.ratio) + "," +
           manifest.class_names[rare_class] + "," + fmt9(agg.iou_mean[rare_class]) + "," +
           fmt9(agg.iou_std[rare_class]) + "," + fmt9(agg.miou_mean) + "," +
           fmt9(agg.miou_std) + "\n";
  }
  atomic_write_text((out_root / "comparison.csv").string(), csv);

  // loss curves (first seed, 1/8 ratio), downsampled
  std::vector<SvgSeries> loss_series;
  for (auto& cell : cells) {
    if (cell.ratio != ratios[0]) continue;
    SvgSeries s;
    s.label = cell.preset.name;
    const auto& trace = cell.result.runs.front().trace;
    const size_t stride = std::max<size_t>(1, trace.size() / 400);
    for (size_t i = 0; i < trace.size(); i += stride)
      s.points.emplace_back(static_cast<double>(i), trace[i].sup + trace[i].unsup);
    loss_series.push_back(std::move(s));
  }
  write_svg_chart((out_root / "loss_curves.svg").string(),
                  "training loss by preset (1/8 labeled)", "step",
                  "loss_sup + loss_unsup", loss_series);

  std::vector<SvgSeries> iou_series(ratios.size());
  for (size_t r = 0; r < ratios.size(); ++r) {
    iou_series[r].label = r == 0 ? "1/8 labeled" : "1/4 labeled";
    for (size_t p = 0; p < ablate_presets().size(); ++p)
      iou_series[r].points.emplace_back(
          static_cast<double>(p), cells[p * ratios.size() + r].result.aggregate
                                      .iou_mean[rare_class]);
  }
  write_svg_chart((out_root / "iou_summary.svg").string(),
                  "rare-class IoU by preset (0=cutmix..4=ours)", "preset index",
                  "IoU", iou_series);

  log << "ablation table -> " << (out_root / "comparison.csv").string() << "\n";
  return out_root.string();
}

}  // namespace seglab
