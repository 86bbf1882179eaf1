#pragma once

#include <filesystem>

#include "stepnet/manifest.hpp"
#include "stepnet/tensor.hpp"

namespace stepnet {

// Factorial synthetic video spec. A class is the tuple (left-region motion
// pattern, right-region motion pattern, top-region texture, sub-action
// order), so num_classes is the product of the four factor counts.
//
// A motion pattern is an orbiting blob with a pattern-specific render style
// (disc, ring, bar). Both sides use the same animation and the same style
// set, so the (a, b) and (b, a) classes are indistinguishable after global
// spatial pooling but trivially separable from stripe-pooled features:
// exactly the regime the part heads are supposed to win in.
struct SyntheticSpec {
  int64_t left_patterns = 2;
  int64_t right_patterns = 2;
  int64_t textures = 2;
  int64_t orders = 1;  // permutations of the bottom-strip sub-action sequence
  int64_t clips_per_class = 50;
  int64_t raw_length = 32;  // frames before sampling; 2x the sampled T keeps sub-action blocks aligned
  int64_t height = 40;
  int64_t width = 40;
  double noise_std = 0.03;
  int64_t num_signers = 10;
  int64_t train_signers = 8;  // signers [0, train_signers) are the train split
  uint64_t seed = 1;

  int64_t num_classes() const { return left_patterns * right_patterns * textures * orders; }
  void validate() const;
};

struct ClassFactors {
  int64_t left = 0, right = 0, texture = 0, order = 0;
};

ClassFactors class_factors(const SyntheticSpec& spec, int64_t label);

// Renders one clip deterministically from its factor tuple, signer style and
// phase seed. noise_std = 0 gives the clean signal, which the statistics
// tests rely on.
Tensor<float> render_clip(const SyntheticSpec& spec, const ClassFactors& factors, int64_t signer_id,
                          uint64_t phase_seed, double noise_std);

// Writes every clip plus manifest.jsonl under out_dir. Deterministic given
// the spec: same spec, byte-identical dataset.
Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace stepnet
