#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace mfcrf {

// Coordinates are normalized to [-1, 1] with corner alignment: -1 is the centre of the first
// pixel and +1 the centre of the last. The grid's last axis is ordered (x, y), x along width.
// Samples outside the map are clamped to the border pixel.

/// (H, W, 2) identity grid.
torch::Tensor make_base_grid(std::int64_t h, std::int64_t w, const torch::TensorOptions& options);

struct SamplingGrid {
  torch::Tensor base;    // (H, W, 2)
  torch::Tensor offset;  // (N, H, W, 2) in normalized units

  /// base + offset, (N, H, W, 2).
  torch::Tensor absolute() const { return base.unsqueeze(0) + offset; }
};

/// Bilinear sampling of input (N, C, H, W) at grid (N, Ho, Wo, 2) absolute normalized
/// coordinates, with border padding. Differentiable w.r.t. input and grid.
torch::Tensor grid_sample(const torch::Tensor& input, const torch::Tensor& grid);

/// Same sampler evaluated as pixel index + offset, so a zero offset reproduces the input
/// exactly. Requires grid.base to match the input's spatial size.
torch::Tensor grid_sample(const torch::Tensor& input, const SamplingGrid& grid);

}  // namespace mfcrf
