#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stepnet/manifest.hpp"
#include "stepnet/sampling.hpp"

namespace stepnet {

enum class Stream { rgb, flow };

struct DataConfig {
  std::filesystem::path root;
  std::string manifest = "manifest.jsonl";
  AugmentGeometry geometry;
  Stream stream = Stream::rgb;
};

struct DatasetItem {
  std::string clip_id;  // manifest path, unique per clip
  int64_t label = 0;
  int64_t signer_id = 0;
  int64_t manifest_index = 0;  // stable id for rng derivation
};

// One split of a manifest with raw clips held in memory. model_input applies
// sampling + (optionally) the flow surrogate + augmentation; its randomness
// is a pure function of (run seed, clip, epoch), so results are independent
// of any worker scheduling.
class ClipDataset {
 public:
  static ClipDataset load(const DataConfig& cfg, const std::string& split, int64_t t_frames);

  size_t size() const { return items_.size(); }
  const DatasetItem& item(size_t i) const { return items_[i]; }
  int64_t num_classes() const { return num_classes_; }
  int64_t t_frames() const { return t_frames_; }

  Tensor<float> model_input(size_t index, SampleMode mode, uint64_t run_seed, int64_t epoch) const;

  int64_t input_channels() const { return stream_ == Stream::flow ? 10 : 3; }

 private:
  std::vector<DatasetItem> items_;
  std::vector<Tensor<float>> clips_;
  int64_t num_classes_ = 0;
  int64_t t_frames_ = 16;
  AugmentGeometry geometry_;
  Stream stream_ = Stream::rgb;
};

}  // namespace stepnet
