#pragma once

#include <string>
#include <utility>
#include <vector>

#include "indigo/degradation.hpp"
#include "indigo/rng.hpp"
#include "indigo/tensor.hpp"

namespace indigo {

// Images on disk are 8-bit PNG (grayscale or RGB), or binary PGM/PPM chosen
// by extension. In memory they are [1,C,H,W] floats in [0,1].
Tensor load_image(const std::string& path);
void save_image(const std::string& path, const Tensor& image);

// Deterministic procedural image: smooth gradient background plus a few
// anti-aliased shapes; same seed, same pixels.
Tensor toy_image(uint64_t seed, int size, int channels);

struct DatasetItem {
  std::string id;
  DegradationParams params;
  uint64_t seed = 0;  // master seed for this item's content and noise
};

struct DatasetIndex {
  int factor = 4;
  std::vector<DatasetItem> items;
};

void save_dataset_index(const std::string& path, const DatasetIndex& index);
DatasetIndex load_dataset_index(const std::string& path);

std::string clean_image_path(const std::string& dir, const std::string& id);
std::string measured_image_path(const std::string& dir, const std::string& id);

struct SynthesisConfig {
  int count = 500;
  int size = 32;
  int channels = 3;
  uint64_t seed = 1;
  bool randomize = false;      // per-item degradations drawn from `range`
  DegradationParams params;    // used when randomize is false
  DegradationRange range;      // used when randomize is true
};

// Renders and degrades `count` toy images into dir/<id>_x.png and
// dir/<id>_y.png plus dir/index.txt. Reruns with the same configuration
// reproduce every file byte for byte.
DatasetIndex synthesize_dataset(const std::string& dir,
                                const SynthesisConfig& cfg);

struct LoadedDataset {
  DatasetIndex index;
  std::vector<Tensor> clean;     // [1,C,H,W] each
  std::vector<Tensor> measured;  // [1,C,h,w] each
};

LoadedDataset load_dataset(const std::string& dir);

}  // namespace indigo
