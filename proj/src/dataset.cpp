#include "stepnet/dataset.hpp"

#include "stepnet/clipfile.hpp"
#include "stepnet/errors.hpp"
#include "stepnet/pseudoflow.hpp"

namespace stepnet {

namespace {
constexpr uint64_t kAugmentTag = 0xda7a;
}

ClipDataset ClipDataset::load(const DataConfig& cfg, const std::string& split, int64_t t_frames) {
  Manifest manifest = load_manifest(cfg.root / cfg.manifest);
  ClipDataset ds;
  ds.num_classes_ = manifest.num_classes;
  ds.t_frames_ = t_frames;
  ds.geometry_ = cfg.geometry;
  ds.stream_ = cfg.stream;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (e.split != split) continue;
    DatasetItem item;
    item.clip_id = e.path;
    item.label = e.label;
    item.signer_id = e.signer_id;
    item.manifest_index = static_cast<int64_t>(i);
    ds.items_.push_back(std::move(item));
    ds.clips_.push_back(read_clip(cfg.root / e.path));
  }
  if (ds.items_.empty()) throw ConfigError("dataset: split '" + split + "' is empty");
  return ds;
}

Tensor<float> ClipDataset::model_input(size_t index, SampleMode mode, uint64_t run_seed,
                                       int64_t epoch) const {
  const DatasetItem& it = items_[index];
  Rng rng(Rng::derive(run_seed, {kAugmentTag, static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(it.manifest_index)}));
  const Tensor<float>& raw = clips_[index];
  if (stream_ == Stream::flow) {
    Tensor<float> flow = pseudo_flow(raw);
    std::vector<int64_t> idx = sample_frames(flow.dim(0), mode, t_frames_, rng);
    return augment(gather_frames(flow, idx), mode, rng, geometry_);
  }
  std::vector<int64_t> idx = sample_frames(raw.dim(0), mode, t_frames_, rng);
  return augment(gather_frames(raw, idx), mode, rng, geometry_);
}

}  // namespace stepnet
