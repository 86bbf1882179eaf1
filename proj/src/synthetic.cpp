#include "stepnet/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "stepnet/clipfile.hpp"
#include "stepnet/errors.hpp"
#include "stepnet/rng.hpp"

namespace stepnet {

namespace {

constexpr uint64_t kSignerTag = 0x51637e5;
constexpr uint64_t kClipTag = 0xc11b;

struct SignerStyle {
  double background;
  double amplitude;
  double radius_scale;
  double contrast;
  double dx, dy;
};

SignerStyle signer_style(const SyntheticSpec& spec, int64_t signer_id) {
  Rng rng(Rng::derive(spec.seed, {kSignerTag, static_cast<uint64_t>(signer_id)}));
  const double jitter = 0.02 * static_cast<double>(std::min(spec.height, spec.width));
  SignerStyle s;
  s.background = rng.uniform(0.20, 0.30);
  s.amplitude = rng.uniform(0.9, 1.1);
  s.radius_scale = rng.uniform(0.9, 1.1);
  s.contrast = rng.uniform(0.9, 1.1);
  s.dx = rng.uniform(-jitter, jitter);
  s.dy = rng.uniform(-jitter, jitter);
  return s;
}

// sub-action permutations of the four bottom-strip slots
constexpr std::array<std::array<int, 4>, 6> kOrders = {{
    {0, 1, 2, 3}, {3, 2, 1, 0}, {1, 0, 3, 2}, {2, 3, 0, 1}, {0, 2, 1, 3}, {3, 1, 2, 0},
}};

struct Tint {
  float r, g, b;
};

// Blob render styles:
//   0: filled disc   1: dark-core crater   2: bright-core spike
// Every pattern shares the same outer Gaussian envelope; they differ only
// inside ~0.8 r0 of the center. Border and midline interactions therefore
// see identical tails regardless of the pattern, so globally pooled features
// cannot tell (a, b) from (b, a) through edge effects: the patterns stay
// separable only through part-level pooling.
void splat(Tensor<float>& frame, int64_t pattern, double cx, double cy, double r0,
           double intensity, Tint tint) {
  const int64_t H = frame.dim(1), W = frame.dim(2);
  const double reach = 2.0 * r0;
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx - reach));
  const int64_t x1 = std::min<int64_t>(W, static_cast<int64_t>(cx + reach) + 1);
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy - reach));
  const int64_t y1 = std::min<int64_t>(H, static_cast<int64_t>(cy + reach) + 1);
  const double s_out = 0.6 * r0, s_core = 0.35 * r0;
  for (int64_t y = y0; y < y1; ++y) {
    for (int64_t x = x0; x < x1; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double d2 = dx * dx + dy * dy;
      double v = std::exp(-d2 / (2.0 * s_out * s_out));
      if (pattern == 1) {
        v -= std::exp(-d2 / (2.0 * s_core * s_core));
      } else if (pattern == 2) {
        v += std::exp(-d2 / (2.0 * s_core * s_core));
      }
      const float fv = static_cast<float>(intensity * v);
      frame.data()[(0 * H + y) * W + x] += fv * tint.r;
      frame.data()[(1 * H + y) * W + x] += fv * tint.g;
      frame.data()[(2 * H + y) * W + x] += fv * tint.b;
    }
  }
}

}  // namespace

void SyntheticSpec::validate() const {
  if (left_patterns < 1 || right_patterns < 1 || textures < 1 || orders < 1) {
    throw ConfigError("synthetic: factor counts must be positive");
  }
  if (left_patterns > 3 || right_patterns > 3) {
    throw ConfigError("synthetic: at most 3 blob patterns are defined");
  }
  if (textures > 2) throw ConfigError("synthetic: at most 2 texture ids are defined");
  if (orders > static_cast<int64_t>(kOrders.size())) {
    throw ConfigError("synthetic: at most 6 sub-action orders are defined");
  }
  if (clips_per_class < 1) throw ConfigError("synthetic: clips_per_class must be positive");
  if (raw_length < 6) throw ConfigError("synthetic: raw_length must allow motion windows (>= 6)");
  if (num_signers < 2 || train_signers < 1 || train_signers >= num_signers) {
    throw ConfigError("synthetic: need train and test signers");
  }
  // blob orbit plus reach must stay inside its half, clear of the texture and
  // indicator strips; below 24 px that no longer holds
  if (height < 24 || width < 24) {
    throw ConfigError("synthetic: geometry infeasible, blobs larger than their region");
  }
}

ClassFactors class_factors(const SyntheticSpec& spec, int64_t label) {
  if (label < 0 || label >= spec.num_classes()) throw ConfigError("synthetic: label out of range");
  ClassFactors f;
  f.order = label % spec.orders;
  label /= spec.orders;
  f.texture = label % spec.textures;
  label /= spec.textures;
  f.right = label % spec.right_patterns;
  label /= spec.right_patterns;
  f.left = label;
  return f;
}

Tensor<float> render_clip(const SyntheticSpec& spec, const ClassFactors& factors, int64_t signer_id,
                          uint64_t phase_seed, double noise_std) {
  spec.validate();
  const int64_t T = spec.raw_length, H = spec.height, W = spec.width;
  const SignerStyle style = signer_style(spec, signer_id);
  Rng phase_rng(phase_seed);
  const double left_phase = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double right_phase = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
  // per-clip placement jitter; keeps absolute border distances from acting
  // as a stable class cue
  const double shift_amp = 0.03 * static_cast<double>(std::min(H, W));
  const double tx = phase_rng.uniform(-shift_amp, shift_amp);
  const double ty = phase_rng.uniform(-shift_amp, shift_amp);
  Rng noise_rng(Rng::derive(phase_seed, {0x401e}));

  const double r0 = 0.10 * static_cast<double>(std::min(H, W)) * style.radius_scale;
  const double orbit = 0.03 * static_cast<double>(std::min(H, W));
  const auto& order = kOrders[static_cast<size_t>(factors.order)];

  Tensor<float> clip({T, 3, H, W});
  Tensor<float> frame({3, H, W});
  for (int64_t t = 0; t < T; ++t) {
    frame.fill(static_cast<float>(style.background));

    // top texture strip
    const int64_t ty0 = static_cast<int64_t>(0.05 * static_cast<double>(H));
    const int64_t ty1 = static_cast<int64_t>(0.20 * static_cast<double>(H));
    const double contrast = 0.30 * style.contrast;
    for (int64_t y = ty0; y < ty1; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        double v = 0.0;
        if (factors.texture == 0) {
          v = contrast * std::sin(2.0 * std::numbers::pi * static_cast<double>(x) / 6.0);
        } else {
          v = ((x / 3 + y / 3) % 2 == 0) ? contrast : -contrast;
        }
        frame.data()[(0 * H + y) * W + x] += static_cast<float>(0.7 * v);
        frame.data()[(1 * H + y) * W + x] += static_cast<float>(0.85 * v);
        frame.data()[(2 * H + y) * W + x] += static_cast<float>(v);
      }
    }

    // the blobs orbit identically on both sides; the render style carries
    // the class signal. One revolution per sub-action block, so every block
    // pairs its bar with the same set of blob states.
    const double tt = static_cast<double>(t) / static_cast<double>(T);
    const double angle = 2.0 * std::numbers::pi * 4.0 * tt;
    const double cy = 0.55 * static_cast<double>(H) + style.dy + ty;
    const double cxl = 0.29 * static_cast<double>(W) + style.dx + tx;
    const double cxr = 0.71 * static_cast<double>(W) + style.dx + tx;
    const Tint blob_tint{1.0f, 0.85f, 0.7f};
    splat(frame, factors.left, cxl + orbit * std::cos(angle + left_phase),
          cy + orbit * std::sin(angle + left_phase), r0, 0.7 * style.amplitude, blob_tint);
    splat(frame, factors.right, cxr + orbit * std::cos(angle + right_phase),
          cy + orbit * std::sin(angle + right_phase), r0, 0.7 * style.amplitude, blob_tint);

    // bottom indicator strip: during block b the sub-action order[b] plays.
    // Sub-actions differ in bar width and brightness, so each one has a
    // distinct spatially-pooled signature per frame; their time order is
    // invisible to any time-averaged head and is exactly what the recurrent
    // branch has to pick up. Four equal blocks keep the sampled-frame count
    // per sub-action identical across orders.
    const int64_t by0 = static_cast<int64_t>(0.82 * static_cast<double>(H));
    const int64_t by1 = static_cast<int64_t>(0.95 * static_cast<double>(H));
    const int64_t block = std::min<int64_t>(3, t * 4 / T);
    const int sub = order[static_cast<size_t>(block)];
    const double widths[4] = {0.06, 0.10, 0.14, 0.18};
    const double levels[4] = {0.20, 0.32, 0.44, 0.56};
    const int64_t sw = static_cast<int64_t>(widths[sub] * static_cast<double>(W));
    const int64_t sx0 = (1 + 2 * static_cast<int64_t>(sub)) * W / 9;
    const double level = levels[sub] * style.contrast;
    for (int64_t y = by0; y < by1; ++y) {
      for (int64_t x = sx0; x < std::min<int64_t>(W, sx0 + sw); ++x) {
        frame.data()[(0 * H + y) * W + x] += static_cast<float>(0.85 * level);
        frame.data()[(1 * H + y) * W + x] += static_cast<float>(level);
        frame.data()[(2 * H + y) * W + x] += static_cast<float>(0.85 * level);
      }
    }

    float* dst = clip.data() + t * 3 * H * W;
    if (noise_std > 0.0) {
      for (int64_t i = 0; i < 3 * H * W; ++i) {
        const double v = static_cast<double>(frame[i]) + noise_rng.normal(0.0, noise_std);
        dst[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    } else {
      for (int64_t i = 0; i < 3 * H * W; ++i) {
        dst[i] = std::clamp(frame[i], 0.0f, 1.0f);
      }
    }
  }
  return clip;
}

Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  Manifest manifest;
  manifest.num_classes = spec.num_classes();
  for (int64_t label = 0; label < spec.num_classes(); ++label) {
    const ClassFactors factors = class_factors(spec, label);
    for (int64_t i = 0; i < spec.clips_per_class; ++i) {
      const int64_t signer = i % spec.num_signers;
      const uint64_t clip_seed =
          Rng::derive(spec.seed, {kClipTag, static_cast<uint64_t>(label), static_cast<uint64_t>(i)});
      Tensor<float> clip = render_clip(spec, factors, signer, clip_seed, spec.noise_std);

      std::ostringstream name;
      name << "c" << label << "_s" << signer << "_" << i << ".svt";
      write_clip(out_dir / name.str(), clip);

      ManifestEntry e;
      e.path = name.str();
      e.label = label;
      e.split = signer < spec.train_signers ? "train" : "test";
      e.signer_id = signer;
      manifest.entries.push_back(std::move(e));
    }
  }
  save_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

}  // namespace stepnet
