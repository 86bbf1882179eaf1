#include "stepnet/pseudoflow.hpp"

#include <algorithm>
#include <vector>

#include "stepnet/errors.hpp"

namespace stepnet {

Tensor<float> pseudo_flow(const Tensor<float>& clip) {
  if (clip.rank() != 4 || clip.dim(1) != 3) {
    throw ShapeError("pseudo_flow: expected T x 3 x H x W clip, got " + shape_str(clip.shape()));
  }
  const int64_t T = clip.dim(0), H = clip.dim(2), W = clip.dim(3);
  const int64_t plane = H * W;

  std::vector<float> gray(static_cast<size_t>(T * plane));
  for (int64_t t = 0; t < T; ++t) {
    const float* r = clip.data() + (t * 3 + 0) * plane;
    const float* g = clip.data() + (t * 3 + 1) * plane;
    const float* b = clip.data() + (t * 3 + 2) * plane;
    float* dst = gray.data() + t * plane;
    for (int64_t i = 0; i < plane; ++i) dst[i] = (r[i] + g[i] + b[i]) / 3.0f;
  }

  auto clamp_t = [T](int64_t t) { return std::clamp<int64_t>(t, 0, T - 1); };

  Tensor<float> out({T, 10, H, W});
  std::vector<float> diff(static_cast<size_t>(plane));
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t k = 0; k < 5; ++k) {
      const int64_t a = clamp_t(t - 2 + k);
      const int64_t b = clamp_t(t - 2 + k + 1);
      const float* fa = gray.data() + a * plane;
      const float* fb = gray.data() + b * plane;
      for (int64_t i = 0; i < plane; ++i) diff[static_cast<size_t>(i)] = fb[i] - fa[i];

      float* dx = out.data() + (t * 10 + 2 * k) * plane;
      float* dy = out.data() + (t * 10 + 2 * k + 1) * plane;
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          const int64_t xl = std::max<int64_t>(x - 1, 0);
          const int64_t xr = std::min<int64_t>(x + 1, W - 1);
          const int64_t yu = std::max<int64_t>(y - 1, 0);
          const int64_t yd = std::min<int64_t>(y + 1, H - 1);
          const float gx = (diff[static_cast<size_t>(y * W + xr)] - diff[static_cast<size_t>(y * W + xl)]) * 0.5f;
          const float gy = (diff[static_cast<size_t>(yd * W + x)] - diff[static_cast<size_t>(yu * W + x)]) * 0.5f;
          dx[y * W + x] = std::clamp(gx, -1.0f, 1.0f);
          dy[y * W + x] = std::clamp(gy, -1.0f, 1.0f);
        }
      }
    }
  }
  return out;
}

}  // namespace stepnet
