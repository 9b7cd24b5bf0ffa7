#pragma once

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <vector>

namespace mfcrf {

/// Straight-line interpolant between noise x0 and data x1 at time t.
struct InterpolantSample {
  torch::Tensor x0;
  torch::Tensor x1;
  torch::Tensor t;  // one value per example, shape (B)
  torch::Tensor x_t;
  torch::Tensor target_v;  // x1 - x0, independent of t
};

/// x1 is (B, K, H, W). `t` broadcasts over every non-batch dimension.
InterpolantSample make_interpolant(const torch::Tensor& x0, const torch::Tensor& x1,
                                   const torch::Tensor& t);

/// x0 ~ N(0, 1) elementwise, t ~ U(0, 1) per example, both drawn from `gen`.
InterpolantSample draw_interpolant(const torch::Tensor& x1, torch::Generator& gen);

/// Mean squared error between v_pred and x1 - x0.
torch::Tensor rf_loss(const torch::Tensor& v_pred, const InterpolantSample& sample);

struct SamplerConfig {
  int steps = 5;

  double dt() const { return 1.0 / static_cast<double>(steps); }
};

/// velocity(z, t, condition); t is the left endpoint of the current interval.
using VelocityFn =
    std::function<torch::Tensor(const torch::Tensor&, double, const torch::Tensor&)>;

/// Explicit Euler on dz = v dt over t = 0, dt, ..., 1 - dt. Throws NonFiniteError on blow-up.
torch::Tensor euler_sample(const VelocityFn& velocity, const torch::Tensor& z0,
                           const torch::Tensor& condition, const SamplerConfig& config = {});

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Exponential moving average of a parameter list.
struct EmaState {
  double decay = 0.95;
  std::vector<torch::Tensor> shadow;
};

EmaState make_ema(const std::vector<torch::Tensor>& params, double decay = 0.95);

/// shadow <- decay * shadow + (1 - decay) * param, elementwise, in place.
void ema_update(EmaState& ema, const std::vector<torch::Tensor>& params);

/// Copies shadow values into `params` (e.g. to evaluate with EMA weights).
void ema_copy_to(const EmaState& ema, const std::vector<torch::Tensor>& params);

}  // namespace mfcrf
