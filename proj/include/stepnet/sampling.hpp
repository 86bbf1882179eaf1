#pragma once

#include <cstdint>
#include <vector>

#include "stepnet/rng.hpp"
#include "stepnet/tensor.hpp"

namespace stepnet {

enum class SampleMode { train, test };

// Partitions [0, clip_length) into t near-equal contiguous splits and picks
// one frame per split: a uniform draw in train mode, the split center in test
// mode. Clips shorter than t repeat frames via floor(i * len / t).
std::vector<int64_t> sample_frames(int64_t clip_length, SampleMode mode, int64_t t, Rng& rng);

struct AugmentGeometry {
  int64_t resize_w = 80;
  int64_t resize_h = 64;
  int64_t crop = 64;
  double flip_prob = 0.5;  // train mode only
};

// Gathers the listed frames from a raw clip into a new T' x C x H x W tensor.
Tensor<float> gather_frames(const Tensor<float>& clip, const std::vector<int64_t>& indices);

// Bilinear resize with half-pixel centers (corner alignment off), per frame
// and channel.
Tensor<float> resize_bilinear(const Tensor<float>& clip, int64_t out_h, int64_t out_w);

// resize -> square crop (shared offset across all frames; random in train
// mode, centered in test mode) -> whole-clip horizontal flip with
// probability flip_prob (train mode only).
Tensor<float> augment(const Tensor<float>& frames, SampleMode mode, Rng& rng,
                      const AugmentGeometry& geo);

// Exact width-axis flip, used by equivariance checks and augmentation.
template <class Real>
Tensor<Real> flip_horizontal(const Tensor<Real>& clip) {
  Tensor<Real> out(clip.shape());
  const int64_t T = clip.dim(0), C = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) out.at4(t, c, y, x) = clip.at4(t, c, y, W - 1 - x);
      }
    }
  }
  return out;
}

template <class Real>
Tensor<Real> flip_vertical(const Tensor<Real>& clip) {
  Tensor<Real> out(clip.shape());
  const int64_t T = clip.dim(0), C = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) out.at4(t, c, y, x) = clip.at4(t, c, H - 1 - y, x);
      }
    }
  }
  return out;
}

}  // namespace stepnet
