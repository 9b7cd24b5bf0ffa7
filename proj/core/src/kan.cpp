#include "mfcrf/kan.hpp"

#include "mfcrf/error.hpp"
#include "mfcrf/vrwkv.hpp"

#include <cmath>

namespace mfcrf {

KanMode parse_kan_mode(const std::string& name) {
  if (name == "spline") return KanMode::kSpline;
  if (name == "feed-forward" || name == "feed_forward") return KanMode::kFeedForward;
  throw Error("model.kan_mode must be \"spline\" or \"feed-forward\", got \"" + name + "\"");
}

std::string to_string(KanMode mode) {
  return mode == KanMode::kSpline ? "spline" : "feed-forward";
}

KanLinearImpl::KanLinearImpl(std::int64_t in, std::int64_t out, std::int64_t grid_size,
                             std::int64_t order, double grid_lo, double grid_hi)
    : in_(in), out_(out), grid_size_(grid_size), order_(order) {
  TORCH_CHECK(in > 0 && out > 0 && grid_size > 0 && order >= 0, "KanLinear: bad sizes");
  const double h = (grid_hi - grid_lo) / static_cast<double>(grid_size);
  knots_ = register_buffer(
      "knots", torch::arange(-order, grid_size + order + 1, torch::kFloat64) * h + grid_lo);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  base_weight = register_parameter("base_weight", torch::empty({out, in}).uniform_(-bound, bound));
  spline_weight = register_parameter(
      "spline_weight", torch::randn({out, in, basis_count()}) * (0.1 / std::sqrt(static_cast<double>(in))));
  spline_scale = register_parameter("spline_scale", torch::ones({out, in}));
}

torch::Tensor KanLinearImpl::basis(const torch::Tensor& x_in) const {
  const auto knots = knots_.to(x_in.scalar_type());
  const auto x = x_in.unsqueeze(-1);
  // Degree-0 indicators on each knot interval, then Cox-de Boor up to `order`.
  auto b = torch::logical_and(x >= knots.narrow(0, 0, knots.size(0) - 1),
                              x < knots.narrow(0, 1, knots.size(0) - 1))
               .to(x_in.scalar_type());
  for (std::int64_t p = 1; p <= order_; ++p) {
    const auto n = b.size(-1) - 1;
    const auto t_lo = knots.narrow(0, 0, n);
    const auto t_hi = knots.narrow(0, p + 1, n);
    const auto left = (x - t_lo) / (knots.narrow(0, p, n) - t_lo) * b.narrow(-1, 0, n);
    const auto right = (t_hi - x) / (t_hi - knots.narrow(0, 1, n)) * b.narrow(-1, 1, n);
    b = left + right;
  }
  return b;
}

torch::Tensor KanLinearImpl::forward(const torch::Tensor& x) {
  TORCH_CHECK(x.size(-1) == in_, "KanLinear: expected ", in_, " input features, got ", x.size(-1));
  const auto flat = x.reshape({-1, in_});
  auto base = torch::nn::functional::linear(torch::silu(flat), base_weight);
  auto coeff = (spline_weight * spline_scale.unsqueeze(-1)).reshape({out_, -1});
  auto spline = torch::nn::functional::linear(basis(flat).reshape({flat.size(0), -1}), coeff);
  record_macs(static_cast<double>(flat.size(0) * out_ * in_) *
              static_cast<double>(basis_count() + 1));
  auto shape = x.sizes().vec();
  shape.back() = out_;
  return (base + spline).reshape(shape);
}

KanBlockImpl::KanBlockImpl(const KanBlockOptions& options) : opt_(options) {
  const auto D = opt_.channels;
  TORCH_CHECK(D > 0, "KanBlock: channels must be positive");
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({D})));
  auto token_operator = [&] {
    if (opt_.mode == KanMode::kSpline) {
      return torch::nn::Sequential(KanLinear(D, D, opt_.grid_size, opt_.order));
    }
    const auto hidden = opt_.ff_expansion * D;
    return torch::nn::Sequential(Dense(D, hidden), torch::nn::GELU(), Dense(hidden, D));
  };
  first = register_module("first", token_operator());
  depthwise = register_module("depthwise", Conv(ConvSpec{D, D, 3, 1, D, true}));
  second = register_module("second", token_operator());
  out_scale = register_parameter("out_scale", torch::zeros({D}));
}

torch::Tensor KanBlockImpl::forward(const torch::Tensor& map) {
  const auto grid = TokenGrid::flatten(map);
  auto y = first->forward(norm->forward(grid.tokens));
  y = torch::gelu(depthwise->forward(TokenGrid{y, grid.height, grid.width}.unflatten()));
  y = second->forward(TokenGrid::flatten(y).tokens) * out_scale;
  return map + TokenGrid{y, grid.height, grid.width}.unflatten();
}

}  // namespace mfcrf
