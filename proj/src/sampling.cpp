#include "stepnet/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "stepnet/errors.hpp"

namespace stepnet {

std::vector<int64_t> sample_frames(int64_t clip_length, SampleMode mode, int64_t t, Rng& rng) {
  if (clip_length < 1) throw ConfigError("sample_frames: empty clip");
  if (t < 1) throw ConfigError("sample_frames: need at least one output frame");
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(t));
  if (clip_length < t) {
    for (int64_t i = 0; i < t; ++i) out.push_back(i * clip_length / t);
    return out;
  }
  for (int64_t i = 0; i < t; ++i) {
    const int64_t lo = i * clip_length / t;
    const int64_t hi = (i + 1) * clip_length / t;  // exclusive
    if (mode == SampleMode::train) {
      out.push_back(rng.uniform_int(lo, hi));
    } else {
      out.push_back((lo + hi - 1) / 2);
    }
  }
  return out;
}

Tensor<float> gather_frames(const Tensor<float>& clip, const std::vector<int64_t>& indices) {
  if (clip.rank() != 4) throw ShapeError("gather_frames: expected rank-4 clip");
  const int64_t C = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  const int64_t frame_size = C * H * W;
  Tensor<float> out({static_cast<int64_t>(indices.size()), C, H, W});
  for (size_t i = 0; i < indices.size(); ++i) {
    const int64_t src = indices[i];
    if (src < 0 || src >= clip.dim(0)) throw ShapeError("gather_frames: index out of range");
    std::copy(clip.data() + src * frame_size, clip.data() + (src + 1) * frame_size,
              out.data() + static_cast<int64_t>(i) * frame_size);
  }
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& clip, int64_t out_h, int64_t out_w) {
  if (clip.rank() != 4) throw ShapeError("resize_bilinear: expected rank-4 clip");
  const int64_t T = clip.dim(0), C = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  if (out_h < 1 || out_w < 1) throw ConfigError("resize_bilinear: bad target size");
  Tensor<float> out({T, C, out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (int64_t oy = 0; oy < out_h; ++oy) {
    const double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fy)), 0, H - 1);
    const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
    const float wy = static_cast<float>(std::clamp(fy - static_cast<double>(y0), 0.0, 1.0));
    for (int64_t ox = 0; ox < out_w; ++ox) {
      const double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fx)), 0, W - 1);
      const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
      const float wx = static_cast<float>(std::clamp(fx - static_cast<double>(x0), 0.0, 1.0));
      for (int64_t t = 0; t < T; ++t) {
        for (int64_t c = 0; c < C; ++c) {
          const float v00 = clip.at4(t, c, y0, x0);
          const float v01 = clip.at4(t, c, y0, x1);
          const float v10 = clip.at4(t, c, y1, x0);
          const float v11 = clip.at4(t, c, y1, x1);
          const float top = v00 + (v01 - v00) * wx;
          const float bot = v10 + (v11 - v10) * wx;
          out.at4(t, c, oy, ox) = top + (bot - top) * wy;
        }
      }
    }
  }
  return out;
}

namespace {

Tensor<float> crop(const Tensor<float>& clip, int64_t oy, int64_t ox, int64_t size) {
  const int64_t T = clip.dim(0), C = clip.dim(1);
  Tensor<float> out({T, C, size, size});
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t y = 0; y < size; ++y) {
        const float* src = clip.data() + ((t * C + c) * clip.dim(2) + oy + y) * clip.dim(3) + ox;
        std::copy(src, src + size, out.data() + ((t * C + c) * size + y) * size);
      }
    }
  }
  return out;
}

}  // namespace

Tensor<float> augment(const Tensor<float>& frames, SampleMode mode, Rng& rng,
                      const AugmentGeometry& geo) {
  if (geo.crop > geo.resize_w || geo.crop > geo.resize_h) {
    throw ConfigError("augment: crop " + std::to_string(geo.crop) + " larger than resize target " +
                      std::to_string(geo.resize_w) + "x" + std::to_string(geo.resize_h));
  }
  Tensor<float> resized = resize_bilinear(frames, geo.resize_h, geo.resize_w);
  int64_t oy = (geo.resize_h - geo.crop) / 2;
  int64_t ox = (geo.resize_w - geo.crop) / 2;
  if (mode == SampleMode::train) {
    oy = rng.uniform_int(0, geo.resize_h - geo.crop + 1);
    ox = rng.uniform_int(0, geo.resize_w - geo.crop + 1);
  }
  Tensor<float> cropped = crop(resized, oy, ox, geo.crop);
  if (mode == SampleMode::train && geo.flip_prob > 0.0 && rng.bernoulli(geo.flip_prob)) {
    return flip_horizontal(cropped);
  }
  return cropped;
}

}  // namespace stepnet
