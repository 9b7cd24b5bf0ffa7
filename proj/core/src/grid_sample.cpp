#include "mfcrf/grid_sample.hpp"

#include "mfcrf/layers.hpp"

#include <ATen/Dispatch.h>

#include <algorithm>
#include <cmath>

namespace mfcrf {
namespace {

struct Tap {
  std::int64_t i0, i1;
  double frac;
  double inside;  // 1 when the unclamped coordinate lies within the map
};

inline Tap make_tap(double coord, std::int64_t size) {
  const double limit = static_cast<double>(size - 1);
  Tap t{};
  t.inside = (coord >= 0.0 && coord <= limit) ? 1.0 : 0.0;
  const double c = std::clamp(coord, 0.0, limit);
  t.i0 = static_cast<std::int64_t>(std::floor(c));
  t.i1 = std::min<std::int64_t>(t.i0 + 1, size - 1);
  t.frac = c - static_cast<double>(t.i0);
  return t;
}

// relative: coordinate = output index + g * (size - 1) / 2; otherwise (g + 1) * (size - 1) / 2.
inline double to_pixel(double g, std::int64_t out_index, std::int64_t size, bool relative) {
  const double half = static_cast<double>(size - 1) / 2.0;
  return relative ? static_cast<double>(out_index) + g * half : (g + 1.0) * half;
}

template <typename scalar_t>
void forward_kernel(const torch::Tensor& input, const torch::Tensor& grid, torch::Tensor& output,
                    bool relative) {
  const auto N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
  const auto Ho = grid.size(1), Wo = grid.size(2);
  auto in = input.accessor<scalar_t, 4>();
  auto g = grid.accessor<scalar_t, 4>();
  auto out = output.accessor<scalar_t, 4>();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        const auto tx = make_tap(to_pixel(g[n][oy][ox][0], ox, W, relative), W);
        const auto ty = make_tap(to_pixel(g[n][oy][ox][1], oy, H, relative), H);
        const auto fx = static_cast<scalar_t>(tx.frac);
        const auto fy = static_cast<scalar_t>(ty.frac);
        const scalar_t one = 1;
        for (std::int64_t c = 0; c < C; ++c) {
          const auto v00 = in[n][c][ty.i0][tx.i0];
          const auto v01 = in[n][c][ty.i0][tx.i1];
          const auto v10 = in[n][c][ty.i1][tx.i0];
          const auto v11 = in[n][c][ty.i1][tx.i1];
          out[n][c][oy][ox] =
              (one - fy) * ((one - fx) * v00 + fx * v01) + fy * ((one - fx) * v10 + fx * v11);
        }
      }
    }
  }
}

template <typename scalar_t>
void backward_kernel(const torch::Tensor& input, const torch::Tensor& grid,
                     const torch::Tensor& grad_out, torch::Tensor& grad_input,
                     torch::Tensor& grad_grid, bool relative) {
  const auto N = input.size(0), C = input.size(1), H = input.size(2), W = input.size(3);
  const auto Ho = grid.size(1), Wo = grid.size(2);
  const double half_w = static_cast<double>(W - 1) / 2.0;
  const double half_h = static_cast<double>(H - 1) / 2.0;
  auto in = input.accessor<scalar_t, 4>();
  auto g = grid.accessor<scalar_t, 4>();
  auto go = grad_out.accessor<scalar_t, 4>();
  auto gi = grad_input.accessor<scalar_t, 4>();
  auto gg = grad_grid.accessor<scalar_t, 4>();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        const auto tx = make_tap(to_pixel(g[n][oy][ox][0], ox, W, relative), W);
        const auto ty = make_tap(to_pixel(g[n][oy][ox][1], oy, H, relative), H);
        const double fx = tx.frac, fy = ty.frac;
        double dx = 0.0, dy = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
          const double gv = go[n][c][oy][ox];
          const double v00 = in[n][c][ty.i0][tx.i0];
          const double v01 = in[n][c][ty.i0][tx.i1];
          const double v10 = in[n][c][ty.i1][tx.i0];
          const double v11 = in[n][c][ty.i1][tx.i1];
          gi[n][c][ty.i0][tx.i0] += static_cast<scalar_t>(gv * (1 - fy) * (1 - fx));
          gi[n][c][ty.i0][tx.i1] += static_cast<scalar_t>(gv * (1 - fy) * fx);
          gi[n][c][ty.i1][tx.i0] += static_cast<scalar_t>(gv * fy * (1 - fx));
          gi[n][c][ty.i1][tx.i1] += static_cast<scalar_t>(gv * fy * fx);
          dx += gv * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
          dy += gv * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
        }
        gg[n][oy][ox][0] = static_cast<scalar_t>(dx * tx.inside * half_w);
        gg[n][oy][ox][1] = static_cast<scalar_t>(dy * ty.inside * half_h);
      }
    }
  }
}

class GridSampleFunction : public torch::autograd::Function<GridSampleFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& input,
                               const torch::Tensor& grid, bool relative) {
    auto in = input.contiguous();
    auto gr = grid.to(input.scalar_type()).contiguous();
    auto output = torch::empty({in.size(0), in.size(1), gr.size(1), gr.size(2)}, in.options());
    AT_DISPATCH_FLOATING_TYPES(in.scalar_type(), "grid_sample_forward",
                               [&] { forward_kernel<scalar_t>(in, gr, output, relative); });
    ctx->save_for_backward({in, gr});
    ctx->saved_data["relative"] = relative;
    record_macs(4.0 * static_cast<double>(output.numel()));
    return output;
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grads) {
    const auto saved = ctx->get_saved_variables();
    const auto& in = saved[0];
    const auto& gr = saved[1];
    const bool relative = ctx->saved_data["relative"].toBool();
    auto grad_out = grads[0].contiguous();
    auto grad_input = torch::zeros_like(in);
    auto grad_grid = torch::zeros_like(gr);
    AT_DISPATCH_FLOATING_TYPES(in.scalar_type(), "grid_sample_backward", [&] {
      backward_kernel<scalar_t>(in, gr, grad_out, grad_input, grad_grid, relative);
    });
    return {grad_input, grad_grid, torch::Tensor()};
  }
};

void check_shapes(const torch::Tensor& input, const torch::Tensor& grid) {
  TORCH_CHECK(input.dim() == 4, "grid_sample: input must be (N, C, H, W), got ", input.sizes());
  TORCH_CHECK(grid.dim() == 4 && grid.size(3) == 2, "grid_sample: grid must be (N, Ho, Wo, 2), got ",
              grid.sizes());
  TORCH_CHECK(grid.size(0) == input.size(0), "grid_sample: batch mismatch");
  TORCH_CHECK(input.size(2) >= 1 && input.size(3) >= 1, "grid_sample: empty input");
}

}  // namespace

torch::Tensor make_base_grid(std::int64_t h, std::int64_t w, const torch::TensorOptions& options) {
  auto xs = w > 1 ? torch::linspace(-1.0, 1.0, w, options) : torch::zeros({1}, options);
  auto ys = h > 1 ? torch::linspace(-1.0, 1.0, h, options) : torch::zeros({1}, options);
  auto mesh = torch::meshgrid({ys, xs}, "ij");
  return torch::stack({mesh[1], mesh[0]}, -1);
}

torch::Tensor grid_sample(const torch::Tensor& input, const torch::Tensor& grid) {
  check_shapes(input, grid);
  return GridSampleFunction::apply(input, grid, false);
}

torch::Tensor grid_sample(const torch::Tensor& input, const SamplingGrid& grid) {
  TORCH_CHECK(grid.base.dim() == 3 && grid.base.size(0) == input.size(2) &&
                  grid.base.size(1) == input.size(3),
              "grid_sample: base grid must match the input's spatial size");
  auto offset = grid.offset.dim() == 3 ? grid.offset.unsqueeze(0).expand({input.size(0), -1, -1, -1})
                                       : grid.offset;
  check_shapes(input, offset);
  TORCH_CHECK(offset.size(1) == input.size(2) && offset.size(2) == input.size(3),
              "grid_sample: offset grid must match the input's spatial size");
  return GridSampleFunction::apply(input, offset, true);
}

}  // namespace mfcrf
