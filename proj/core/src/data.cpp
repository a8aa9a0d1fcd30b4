#include "seglab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "seglab/augment.hpp"
#include "seglab/pnm.hpp"
#include "seglab/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace seglab {

namespace {

constexpr std::uint64_t kSampleTag = 0x5a3c9d11;
constexpr std::uint64_t kAttemptTag = 0x17c4e8f3;
constexpr std::uint64_t kSplitTag = 0x2fb07a65;

constexpr double kPi = 3.14159265358979323846;

std::string sample_image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%04d.ppm", index);
  return buf;
}

std::string sample_label_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "lbl_%04d.pgm", index);
  return buf;
}

int poisson(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.uniform();
  } while (p > limit);
  return k - 1;
}

}  // namespace

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::LabeledTrain: return "labeled-train";
    case SplitTag::UnlabeledTrain: return "unlabeled-train";
    case SplitTag::Test: return "test";
  }
  throw std::logic_error("bad split tag");
}

SplitTag split_tag_from_string(const std::string& s) {
  if (s == "labeled-train") return SplitTag::LabeledTrain;
  if (s == "unlabeled-train") return SplitTag::UnlabeledTrain;
  if (s == "test") return SplitTag::Test;
  throw std::runtime_error("manifest: unknown split tag '" + s + "'");
}

std::vector<int> DatasetManifest::indices(SplitTag tag) const {
  std::vector<int> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == tag) out.push_back(static_cast<int>(i));
  return out;
}

void save_manifest(const DatasetManifest& m, const std::string& dir) {
  json j;
  j["name"] = m.name;
  j["num_classes"] = m.num_classes;
  j["class_names"] = m.class_names;
  j["height"] = m.height;
  j["width"] = m.width;
  j["seed"] = m.seed;
  j["achieved_ratios"] = m.achieved_ratios;
  json samples = json::array();
  for (const auto& s : m.samples)
    samples.push_back({{"image", s.image}, {"label", s.label}, {"split", to_string(s.split)}});
  j["samples"] = std::move(samples);

  const fs::path path = fs::path(dir) / "manifest.json";
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("manifest: cannot write " + tmp.string());
    os << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

DatasetManifest load_manifest(const std::string& path_or_dir) {
  fs::path path(path_or_dir);
  if (fs::is_directory(path)) path /= "manifest.json";
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest: parse error in " + path.string() + ": " + e.what());
  }

  DatasetManifest m;
  m.name = j.at("name").get<std::string>();
  m.num_classes = j.at("num_classes").get<int>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.achieved_ratios = j.at("achieved_ratios").get<std::vector<double>>();
  for (const auto& s : j.at("samples")) {
    SampleEntry e;
    e.image = s.at("image").get<std::string>();
    e.label = s.at("label").get<std::string>();
    e.split = split_tag_from_string(s.at("split").get<std::string>());
    m.samples.push_back(std::move(e));
  }
  m.root = path.parent_path().string();
  if (m.root.empty()) m.root = ".";
  return m;
}

void SyntheticSpec::validate() const {
  if (class_ratios.empty()) throw std::runtime_error("spec: class_ratios missing");
  double total = 0.0;
  for (double r : class_ratios) {
    if (r <= 0.0) throw std::runtime_error("spec: class_ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::runtime_error("spec: class_ratios must sum to 1, got " + std::to_string(total));
  if (!class_names.empty() && class_names.size() != class_ratios.size())
    throw std::runtime_error("spec: class_names/class_ratios size mismatch");
  if (image_size < 8 || image_size % 8 != 0)
    throw std::runtime_error("spec: image_size must be a positive multiple of 8");
  if (train_count <= 0 || test_count <= 0)
    throw std::runtime_error("spec: train_count and test_count must be positive");
  if (style == SyntheticStyle::VesselLike && class_ratios.size() != 2)
    throw std::runtime_error("spec: vessel-like style needs exactly 2 classes");
  if (style == SyntheticStyle::BlobMulticlass && class_ratios.size() < 3)
    throw std::runtime_error("spec: blob-multiclass style needs at least 3 classes");
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("spec: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("spec: parse error in " + path + ": " + e.what());
  }

  static const std::vector<std::string> known = {
      "style", "name", "class_ratios", "class_names", "image_size",
      "train_count", "test_count", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::runtime_error("spec: unknown key '" + it.key() + "'");

  SyntheticSpec s;
  const std::string style = j.at("style").get<std::string>();
  if (style == "vessel-like")
    s.style = SyntheticStyle::VesselLike;
  else if (style == "blob-multiclass")
    s.style = SyntheticStyle::BlobMulticlass;
  else
    throw std::runtime_error("spec: unknown style '" + style + "'");
  if (j.contains("name")) s.name = j["name"].get<std::string>();
  s.class_ratios = j.at("class_ratios").get<std::vector<double>>();
  if (j.contains("class_names")) s.class_names = j["class_names"].get<std::vector<std::string>>();
  if (j.contains("image_size")) s.image_size = j["image_size"].get<int>();
  if (j.contains("train_count")) s.train_count = j["train_count"].get<int>();
  if (j.contains("test_count")) s.test_count = j["test_count"].get<int>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// vessel-like generator
// ---------------------------------------------------------------------------

namespace {

// wandering curve stamped with a square pen of the given width
void rasterize_polyline(LabelMap& label, Rng& rng) {
  const int n = label.h;
  const int width = rng.range(1, 3);
  double y = rng.uniform(0.0, n);
  double x = rng.uniform(0.0, n);
  double theta = rng.uniform(0.0, 2.0 * kPi);
  const int steps = static_cast<int>(rng.uniform(0.9, 1.8) * n);
  for (int s = 0; s < steps; ++s) {
    theta += rng.normal(0.0, 0.15);
    y += std::sin(theta);
    x += std::cos(theta);
    if (y < 0 || y >= n || x < 0 || x >= n) break;
    const int cy = static_cast<int>(y), cx = static_cast<int>(x);
    for (int dy = 0; dy < width; ++dy)
      for (int dx = 0; dx < width; ++dx) {
        const int py = cy + dy - width / 2, px = cx + dx - width / 2;
        if (py >= 0 && py < n && px >= 0 && px < n) label.at(py, px) = 1;
      }
  }
}

LabelMap vessel_label(int size, double target, int sample_index, Rng sample_rng) {
  int curves = 3;
  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng = sample_rng.fork(kAttemptTag, attempt);
    LabelMap label(size, size);
    for (int c = 0; c < curves; ++c) rasterize_polyline(label, rng);
    std::size_t fg = 0;
    for (auto v : label.v) fg += v;
    const double frac = static_cast<double>(fg) / label.pixels();
    if (std::abs(frac - target) <= 0.02) return label;
    if (frac < target)
      curves = std::min(curves + 1, 10);
    else
      curves = std::max(curves - 1, 1);
  }
  throw std::runtime_error("vessel generator: sample " + std::to_string(sample_index) +
                           " missed the target ratio in 100 attempts");
}

// label rendered with class-dependent intensity over a low-frequency
// textured background, then blurred and dosed with pixel noise
Tensor render_vessel_image(const LabelMap& label, Rng& rng) {
  const int n = label.h;
  const double base = rng.uniform(0.45, 0.70);
  const double amp1 = rng.uniform(0.05, 0.14);
  const double amp2 = rng.uniform(0.02, 0.08);
  const double fy1 = rng.uniform(0.5, 2.5) / n, fx1 = rng.uniform(0.5, 2.5) / n;
  const double fy2 = rng.uniform(2.0, 5.0) / n, fx2 = rng.uniform(2.0, 5.0) / n;
  const double ph1 = rng.uniform(0.0, 2.0 * kPi), ph2 = rng.uniform(0.0, 2.0 * kPi);
  const double contrast = rng.uniform(0.22, 0.38);
  const double gain[3] = {rng.uniform(0.95, 1.10), rng.uniform(0.75, 0.90),
                          rng.uniform(0.55, 0.75)};

  Tensor img({3, n, n});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double g = base + amp1 * std::sin(2.0 * kPi * (fy1 * y + fx1 * x) + ph1) +
                 amp2 * std::sin(2.0 * kPi * (fy2 * y - fx2 * x) + ph2);
      if (label.at(y, x) == 1) g -= contrast;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = g * gain[c];
    }
  img = gaussian_blur(img, 0.6);
  for (auto& v : img.values()) v = std::clamp(v + rng.normal(0.0, 0.05), 0.0, 1.0);
  return img;
}

DatasetManifest make_manifest_shell(const SyntheticSpec& spec) {
  DatasetManifest m;
  m.name = spec.name;
  m.num_classes = static_cast<int>(spec.class_ratios.size());
  m.class_names = spec.class_names;
  if (m.class_names.empty())
    for (int c = 0; c < m.num_classes; ++c) m.class_names.push_back("class" + std::to_string(c));
  m.height = spec.image_size;
  m.width = spec.image_size;
  m.seed = spec.seed;
  return m;
}

void add_entries(DatasetManifest& m, const SyntheticSpec& spec) {
  for (int i = 0; i < spec.train_count + spec.test_count; ++i) {
    SampleEntry e;
    e.image = sample_image_name(i);
    e.label = sample_label_name(i);
    e.split = i < spec.train_count ? SplitTag::LabeledTrain : SplitTag::Test;
    m.samples.push_back(std::move(e));
  }
}

}  // namespace

DatasetManifest generate_vessel_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  if (spec.style != SyntheticStyle::VesselLike)
    throw std::runtime_error("generate_vessel_dataset: spec style is not vessel-like");
  fs::create_directories(out_dir);

  const double target = spec.class_ratios[1];
  const Rng base(spec.seed);
  std::vector<std::uint64_t> counts(2, 0);

  DatasetManifest m = make_manifest_shell(spec);
  add_entries(m, spec);
  m.root = out_dir;

  for (int i = 0; i < spec.train_count + spec.test_count; ++i) {
    Rng sample_rng = base.fork(kSampleTag, static_cast<std::uint64_t>(i));
    LabelMap label = vessel_label(spec.image_size, target, i, sample_rng);
    Rng render_rng = sample_rng.fork(0xbeef);
    Tensor image = render_vessel_image(label, render_rng);
    for (auto v : label.v) ++counts[v];
    write_sample((fs::path(out_dir) / m.samples[i].image).string(),
                 (fs::path(out_dir) / m.samples[i].label).string(), image, label);
  }

  const double total = static_cast<double>(counts[0] + counts[1]);
  m.achieved_ratios = {counts[0] / total, counts[1] / total};
  save_manifest(m, out_dir);
  return m;
}

// ---------------------------------------------------------------------------
// blob-multiclass generator
// ---------------------------------------------------------------------------

namespace {

void rasterize_blob(LabelMap& label, std::uint8_t cls, double area, Rng& rng) {
  const int n = label.h;
  const double r0 = std::sqrt(area / kPi);
  const double cy = rng.uniform(0.0, n), cx = rng.uniform(0.0, n);
  const double a2 = rng.uniform(0.15, 0.35), p2 = rng.uniform(0.0, 2.0 * kPi);
  const double a3 = rng.uniform(0.10, 0.25), p3 = rng.uniform(0.0, 2.0 * kPi);
  const double a5 = rng.uniform(0.05, 0.15), p5 = rng.uniform(0.0, 2.0 * kPi);
  const double rmax = r0 * (1.0 + a2 + a3 + a5);
  const int y0 = std::max(0, static_cast<int>(cy - rmax) - 1);
  const int y1 = std::min(n - 1, static_cast<int>(cy + rmax) + 1);
  const int x0 = std::max(0, static_cast<int>(cx - rmax) - 1);
  const int x1 = std::min(n - 1, static_cast<int>(cx + rmax) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      const double d = std::sqrt(dy * dy + dx * dx);
      const double theta = std::atan2(dy, dx);
      const double r = r0 * (1.0 + a2 * std::sin(2.0 * theta + p2) +
                             a3 * std::sin(3.0 * theta + p3) +
                             a5 * std::sin(5.0 * theta + p5));
      if (d < r) label.at(y, x) = cls;
    }
}

Tensor render_blob_image(const LabelMap& label, int num_classes, Rng& rng) {
  const int n = label.h;
  const double base = rng.uniform(0.22, 0.38);
  const double amp = rng.uniform(0.03, 0.09);
  const double fy = rng.uniform(0.5, 2.0) / n, fx = rng.uniform(0.5, 2.0) / n;
  const double ph = rng.uniform(0.0, 2.0 * kPi);
  const double drift = rng.uniform(-0.05, 0.05);
  // class intensity ladder above the background
  std::vector<double> lift(num_classes, 0.0);
  for (int c = 1; c < num_classes; ++c)
    lift[c] = 0.18 + 0.18 * c + rng.uniform(-0.03, 0.03);

  Tensor img({3, n, n});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double tex = base + drift + amp * std::sin(2.0 * kPi * (fy * y + fx * x) + ph);
      const double g = tex + lift[label.at(y, x)];
      img.at(0, y, x) = g;
      img.at(1, y, x) = g * 0.96;
      img.at(2, y, x) = g * 0.92;
    }
  img = gaussian_blur(img, 0.6);
  for (auto& v : img.values()) v = std::clamp(v + rng.normal(0.0, 0.04), 0.0, 1.0);
  return img;
}

}  // namespace

DatasetManifest generate_blob_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  if (spec.style != SyntheticStyle::BlobMulticlass)
    throw std::runtime_error("generate_blob_dataset: spec style is not blob-multiclass");
  fs::create_directories(out_dir);

  const int num_classes = static_cast<int>(spec.class_ratios.size());
  const int total_samples = spec.train_count + spec.test_count;
  const double plane = static_cast<double>(spec.image_size) * spec.image_size;
  const Rng base(spec.seed);

  std::vector<double> mean_area(num_classes, 0.0);
  for (int c = 1; c < num_classes; ++c)
    mean_area[c] = std::max(10.0, spec.class_ratios[c] * plane / 1.5);

  std::vector<double> scale(num_classes, 1.0);
  std::vector<LabelMap> labels;
  std::vector<std::uint64_t> counts;

  int pass = 0;
  for (; pass < 100; ++pass) {
    labels.assign(total_samples, LabelMap(spec.image_size, spec.image_size));
    counts.assign(num_classes, 0);
    for (int i = 0; i < total_samples; ++i) {
      Rng rng = base.fork(kSampleTag, static_cast<std::uint64_t>(i)).fork(kAttemptTag, pass);
      // rarest class drawn last so overlaps never erase it
      std::vector<int> order;
      for (int c = 1; c < num_classes; ++c) order.push_back(c);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return spec.class_ratios[a] > spec.class_ratios[b];
      });
      for (int c : order) {
        const double lambda = spec.class_ratios[c] * plane * scale[c] / mean_area[c];
        const int blobs = poisson(rng, lambda);
        for (int b = 0; b < blobs; ++b) {
          const double area = mean_area[c] * rng.uniform(0.5, 1.5);
          rasterize_blob(labels[i], static_cast<std::uint8_t>(c), area, rng);
        }
      }
      for (auto v : labels[i].v) ++counts[v];
    }

    bool ok = true;
    const double total = plane * total_samples;
    for (int c = 0; c < num_classes; ++c) {
      const double achieved = counts[c] / total;
      if (std::abs(achieved - spec.class_ratios[c]) > 0.2 * spec.class_ratios[c]) ok = false;
    }
    if (ok) break;
    for (int c = 1; c < num_classes; ++c) {
      const double achieved = counts[c] / total;
      if (achieved > 0.0) scale[c] *= spec.class_ratios[c] / achieved;
      else scale[c] *= 2.0;
      scale[c] = std::clamp(scale[c], 0.05, 20.0);
    }
  }
  if (pass == 100)
    throw std::runtime_error("blob generator: dataset missed the target ratios in 100 passes");

  DatasetManifest m = make_manifest_shell(spec);
  add_entries(m, spec);
  m.root = out_dir;
  for (int i = 0; i < total_samples; ++i) {
    Rng render_rng = base.fork(kSampleTag, static_cast<std::uint64_t>(i)).fork(0xbeef);
    Tensor image = render_blob_image(labels[i], num_classes, render_rng);
    write_sample((fs::path(out_dir) / m.samples[i].image).string(),
                 (fs::path(out_dir) / m.samples[i].label).string(), image, labels[i]);
  }

  const double total = plane * total_samples;
  m.achieved_ratios.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) m.achieved_ratios[c] = counts[c] / total;
  save_manifest(m, out_dir);
  return m;
}

DatasetManifest generate_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
  return spec.style == SyntheticStyle::VesselLike ? generate_vessel_dataset(spec, out_dir)
                                                  : generate_blob_dataset(spec, out_dir);
}

DatasetManifest split_dataset(const DatasetManifest& m, double labeled_ratio,
                              std::uint64_t seed) {
  if (labeled_ratio <= 0.0 || labeled_ratio > 1.0)
    throw std::runtime_error("split: labeled_ratio must be in (0,1]");
  std::vector<int> train;
  for (size_t i = 0; i < m.samples.size(); ++i)
    if (m.samples[i].split != SplitTag::Test) train.push_back(static_cast<int>(i));
  if (train.empty()) throw std::runtime_error("split: empty train set");

  const auto labeled_count = std::max<size_t>(
      1, static_cast<size_t>(std::floor(train.size() * labeled_ratio)));

  Rng rng = Rng(seed).fork(kSplitTag);
  for (size_t i = 0; i + 1 < train.size(); ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(train.size() - i));
    std::swap(train[i], train[j]);
  }

  DatasetManifest out = m;
  for (size_t k = 0; k < train.size(); ++k)
    out.samples[train[k]].split =
        k < labeled_count ? SplitTag::LabeledTrain : SplitTag::UnlabeledTrain;
  return out;
}

std::pair<Tensor, LabelMap> read_sample(const DatasetManifest& m, int index) {
  if (index < 0 || index >= static_cast<int>(m.samples.size()))
    throw std::out_of_range("read_sample: bad index");
  const auto& e = m.samples[index];
  Tensor image = read_ppm((fs::path(m.root) / e.image).string());
  LabelMap label = read_pgm((fs::path(m.root) / e.label).string());
  if (image.extent(1) != m.height || image.extent(2) != m.width ||
      label.h != m.height || label.w != m.width)
    throw std::runtime_error("read_sample: extent mismatch with manifest for " + e.image);
  return {std::move(image), std::move(label)};
}

void write_sample(const std::string& image_path, const std::string& label_path,
                  const Tensor& image, const LabelMap& label) {
  write_ppm(image_path, image);
  write_pgm(label_path, label);
}

}  // namespace seglab
