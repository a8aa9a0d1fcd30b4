#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seglab/label_map.hpp"
#include "seglab/tensor.hpp"

namespace seglab {

enum class SplitTag { LabeledTrain, UnlabeledTrain, Test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

struct SampleEntry {
  std::string image;  // relative to the dataset root
  std::string label;
  SplitTag split = SplitTag::LabeledTrain;
};

// Dataset description stored as manifest.json at the dataset root. The
// achieved per-class pixel ratios are the generator's own count, kept so an
// independent recount can be checked against them.
struct DatasetManifest {
  std::string name;
  int num_classes = 0;
  std::vector<std::string> class_names;
  int height = 0;
  int width = 0;
  std::uint64_t seed = 0;
  std::vector<double> achieved_ratios;
  std::vector<SampleEntry> samples;
  std::string root;  // directory of the manifest; not serialized

  std::vector<int> indices(SplitTag tag) const;
};

void save_manifest(const DatasetManifest& m, const std::string& dir);
DatasetManifest load_manifest(const std::string& path_or_dir);

enum class SyntheticStyle { VesselLike, BlobMulticlass };

// Generator request. class_ratios must be positive and sum to 1 within 1e-6.
struct SyntheticSpec {
  SyntheticStyle style = SyntheticStyle::VesselLike;
  std::string name = "synthetic";
  std::vector<double> class_ratios;
  std::vector<std::string> class_names;
  int image_size = 64;
  int train_count = 64;
  int test_count = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

SyntheticSpec load_synthetic_spec(const std::string& path);

// Thin vessel-like curves over a textured background (2 classes). Each
// sample redraws until its foreground fraction lands within +-0.02 of the
// target; failing 100 attempts is an error naming the sample.
DatasetManifest generate_vessel_dataset(const SyntheticSpec& spec, const std::string& out_dir);

// Amoeboid blobs for >= 3 classes. Per-class blob rates are tuned until the
// dataset-level mean ratios sit within +-20% relative of the targets; the
// rarest class may be absent from individual samples.
DatasetManifest generate_blob_dataset(const SyntheticSpec& spec, const std::string& out_dir);

// Dispatches on spec.style.
DatasetManifest generate_dataset(const SyntheticSpec& spec, const std::string& out_dir);

// Re-tags the train samples: max(1, floor(train_count * labeled_ratio)) of
// them, chosen uniformly under the seed, stay labeled and the rest become
// unlabeled. Test samples are untouched.
DatasetManifest split_dataset(const DatasetManifest& m, double labeled_ratio,
                              std::uint64_t seed);

// Reads one sample; extents are checked against the manifest.
std::pair<Tensor, LabelMap> read_sample(const DatasetManifest& m, int index);
void write_sample(const std::string& image_path, const std::string& label_path,
                  const Tensor& image, const LabelMap& label);

}  // namespace seglab
