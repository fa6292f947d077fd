#pragma once

// Masked sequential autoencoder pretraining: 16x16 patch masking of every
// frame, reconstruction of the unmasked last frame, full-image MSE.

#include <set>
#include <vector>

#include "laneforge/tensor.hpp"

namespace laneforge {

struct MaskPattern {
  int grid_rows = 0;
  int grid_cols = 0;
  int patch = 16;
  double ratio = 0.5;
  std::uint64_t seed = 0;
  std::vector<int> masked;  // patch indices, row-major over the grid

  int patch_count() const { return grid_rows * grid_cols; }
};

/// Uniform random subset of exactly round(ratio * n_patches) patches.
inline MaskPattern sample_mask(int h, int w, double ratio, std::uint64_t seed, int patch = 16) {
  if (patch <= 0) throw ConfigError("patch size must be positive");
  if (h % patch || w % patch)
    throw ConfigError("image extents must be divisible by the patch size " + std::to_string(patch));
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mask ratio must lie in [0,1]");
  MaskPattern m;
  m.grid_rows = h / patch;
  m.grid_cols = w / patch;
  m.patch = patch;
  m.ratio = ratio;
  m.seed = seed;
  int n = m.patch_count();
  int k = (int)std::llround(ratio * n);
  Rng rng(seed);
  m.masked = rng.sample_without_replacement(n, k);
  return m;
}

/// Zero-fill the masked patches of a C x H x W image; everything else is
/// untouched. Idempotent for a fixed mask.
template <class Real>
Tensor<Real> apply_mask(const Tensor<Real>& frame, const MaskPattern& m) {
  if (frame.rank() != 3) throw ShapeError("apply_mask expects a C x H x W frame");
  int c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  if (h != m.grid_rows * m.patch || w != m.grid_cols * m.patch)
    throw ShapeError("mask grid does not match the frame extents");
  Tensor<Real> out = frame.clone_values();
  for (int idx : m.masked) {
    int pr = idx / m.grid_cols, pc = idx % m.grid_cols;
    for (int cc = 0; cc < c; ++cc)
      for (int y = pr * m.patch; y < (pr + 1) * m.patch; ++y) {
        Real* row = out.data() + ((long long)cc * h + y) * w + pc * m.patch;
        for (int x = 0; x < m.patch; ++x) row[x] = Real(0);
      }
  }
  return out;
}

/// Per-pixel squared error averaged over the image (and over channels): the
/// mean over all C*H*W elements of (recon - original)^2. Differentiable.
template <class Real>
Tensor<Real> reconstruction_loss(const Tensor<Real>& recon, const Tensor<Real>& original) {
  if (!same_shape(recon.shape(), original.shape()))
    throw ShapeError("reconstruction operands " + shape_str(recon.shape()) + " vs " +
                     shape_str(original.shape()));
  auto d = sub(recon, original);
  return mean(mul(d, d));
}

/// Inputs for one pretraining sample: all S frames independently masked, the
/// target is the unmasked original last frame.
template <class Real>
struct PretrainSample {
  std::vector<Tensor<Real>> masked_frames;
  Tensor<Real> target;
  std::vector<MaskPattern> masks;
};

template <class Real>
PretrainSample<Real> make_pretrain_sample(const std::vector<Tensor<Real>>& frames, double ratio,
                                          std::uint64_t seed, int patch = 16) {
  if (frames.empty()) throw DataError("empty frame sequence");
  PretrainSample<Real> out;
  int h = frames[0].dim(1), w = frames[0].dim(2);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    auto m = sample_mask(h, w, ratio, hash_combine(seed, (std::uint64_t)k), patch);
    out.masked_frames.push_back(apply_mask(frames[(std::size_t)k], m));
    out.masks.push_back(std::move(m));
  }
  out.target = frames.back();  // never masked
  return out;
}

}  // namespace laneforge
