#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aquaforge/model.hpp"
#include "aquaforge/rng.hpp"
#include "aquaforge/synthgen.hpp"

namespace aquaforge {

// All samples rendered under one distortion configuration.
struct DistortionGroup {
  std::string id;
  SynthParams params;
  std::vector<TrainExample> samples;
  std::vector<std::string> sample_ids;
};

// In-memory meta-training set loaded from a synth manifest. The train /
// validation split is by distortion configuration id: the last
// max(1, ceil(5%)) configurations in sorted id order are held out.
struct MetaDataset {
  std::vector<DistortionGroup> groups;  // sorted by id
  std::vector<int> train_groups;        // indices into groups
  std::vector<int> val_groups;

  static MetaDataset load(const std::filesystem::path& manifest_path);

  std::size_t train_sample_count() const;
};

// One meta-task: disjoint support and query draws from a single distortion.
struct Task {
  std::string distortion_id;
  std::vector<TrainExample> support;
  std::vector<TrainExample> query;
};

using TaskBatch = std::vector<Task>;

// k distinct train configurations; within each, support_n + query_n samples
// drawn without replacement then cropped to patch x patch (random crops,
// reflect-padded when the source is smaller).
TaskBatch sample_tasks(const MetaDataset& ds, Rng& rng, int k, int support_n, int query_n,
                       int patch);

// Deterministic center crop (reflect-padded when needed); used for
// validation so logged losses are comparable across epochs.
TrainExample center_crop(const TrainExample& ex, int patch);
TrainExample random_crop(const TrainExample& ex, int patch, Rng& rng);

ImageRgb crop_field(const ImageRgb& f, Index y0, Index x0, int patch);
ImageRgb reflect_pad(const ImageRgb& f, Index rows, Index cols);

}  // namespace aquaforge
