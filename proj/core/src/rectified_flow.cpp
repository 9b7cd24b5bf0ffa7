#include "mfcrf/rectified_flow.hpp"

#include "mfcrf/error.hpp"

#include <sstream>

namespace mfcrf {
namespace {

torch::Tensor broadcast_time(const torch::Tensor& t, const torch::Tensor& like) {
  std::vector<std::int64_t> shape(static_cast<std::size_t>(like.dim()), 1);
  shape[0] = like.size(0);
  return t.to(like.options()).view(shape);
}

void check_mirror(const EmaState& ema, const std::vector<torch::Tensor>& params) {
  if (ema.shadow.size() != params.size()) {
    throw Error("EMA: parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!ema.shadow[i].sizes().equals(params[i].sizes())) {
      std::ostringstream msg;
      msg << "EMA: shape mismatch at parameter " << i << ": " << ema.shadow[i].sizes() << " vs "
          << params[i].sizes();
      throw Error(msg.str());
    }
  }
}

}  // namespace

InterpolantSample make_interpolant(const torch::Tensor& x0, const torch::Tensor& x1,
                                   const torch::Tensor& t) {
  if (!x0.sizes().equals(x1.sizes())) {
    throw Error("interpolant: x0 and x1 shapes differ");
  }
  if (t.dim() != 1 || t.size(0) != x1.size(0)) {
    throw Error("interpolant: t must hold one value per example");
  }
  InterpolantSample s;
  s.x0 = x0;
  s.x1 = x1;
  s.t = t;
  const auto tb = broadcast_time(t, x1);
  s.x_t = tb * x1 + (1.0 - tb) * x0;
  s.target_v = x1 - x0;
  return s;
}

InterpolantSample draw_interpolant(const torch::Tensor& x1, torch::Generator& gen) {
  auto x0 = at::normal(0.0, 1.0, x1.sizes(), gen, x1.options());
  auto t = at::rand({x1.size(0)}, gen, x1.options());
  return make_interpolant(x0, x1, t);
}

torch::Tensor rf_loss(const torch::Tensor& v_pred, const InterpolantSample& sample) {
  if (!v_pred.sizes().equals(sample.target_v.sizes())) {
    std::ostringstream msg;
    msg << "rf_loss: prediction shape " << v_pred.sizes() << " does not match target "
        << sample.target_v.sizes();
    throw Error(msg.str());
  }
  return (v_pred - sample.target_v).square().mean();
}

torch::Tensor euler_sample(const VelocityFn& velocity, const torch::Tensor& z0,
                           const torch::Tensor& condition, const SamplerConfig& config) {
  if (config.steps < 1) {
    throw Error("euler_sample: steps must be >= 1");
  }
  const double dt = config.dt();
  auto z = z0;
  for (int n = 0; n < config.steps; ++n) {
    const double t = static_cast<double>(n) * dt;
    auto v = velocity(z, t, condition);
    if (!v.sizes().equals(z.sizes())) {
      throw Error("euler_sample: velocity shape differs from state shape");
    }
    z = z + v * dt;
    if (!torch::isfinite(z).all().item<bool>()) {
      throw NonFiniteError("euler_sample: non-finite state after step " + std::to_string(n), n);
    }
  }
  return z;
}

EmaState make_ema(const std::vector<torch::Tensor>& params, double decay) {
  if (!(decay > 0.0 && decay < 1.0)) {
    throw Error("EMA decay must lie in (0, 1)");
  }
  EmaState ema;
  ema.decay = decay;
  ema.shadow.reserve(params.size());
  for (const auto& p : params) {
    ema.shadow.push_back(p.detach().clone());
  }
  return ema;
}

void ema_update(EmaState& ema, const std::vector<torch::Tensor>& params) {
  check_mirror(ema, params);
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ema.shadow[i].mul_(ema.decay).add_(params[i].detach(), 1.0 - ema.decay);
  }
}

void ema_copy_to(const EmaState& ema, const std::vector<torch::Tensor>& params) {
  check_mirror(ema, params);
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].copy_(ema.shadow[i]);
  }
}

}  // namespace mfcrf
