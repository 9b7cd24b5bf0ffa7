#include "mfcrf/wkv.hpp"

#include "mfcrf/layers.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace mfcrf {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Running exclusive sums  S_t = sum_{i before t} e^{e_i - w d(t, i)} x_i  with d = |t - i| - 1,
// kept as e^{scale_t} * mantissa_t. With `with_distance`, also accumulates the same sums weighted
// by d (sharing the scale). Values are read as x[m][pos] for m < n_values.
struct ScanOutput {
  std::vector<double> scale;
  std::vector<std::vector<double>> mant;
  std::vector<std::vector<double>> dist;
};

ScanOutput exclusive_scan(const std::vector<double>& e, const std::vector<std::vector<double>>& x,
                          double w, bool reverse, bool with_distance) {
  const auto T = static_cast<std::int64_t>(e.size());
  const auto M = x.size();
  ScanOutput out;
  out.scale.assign(static_cast<std::size_t>(T), kNegInf);
  out.mant.assign(M, std::vector<double>(static_cast<std::size_t>(T), 0.0));
  if (with_distance) {
    out.dist.assign(M, std::vector<double>(static_cast<std::size_t>(T), 0.0));
  }
  double p = kNegInf;
  std::vector<double> a(M, 0.0), ad(M, 0.0);
  for (std::int64_t step = 0; step < T; ++step) {
    const auto t = static_cast<std::size_t>(reverse ? T - 1 - step : step);
    out.scale[t] = p;
    for (std::size_t m = 0; m < M; ++m) {
      out.mant[m][t] = a[m];
      if (with_distance) out.dist[m][t] = ad[m];
    }
    // Fold token t into the running state for the next position.
    const double decayed = p - w;
    const double np = std::max(decayed, e[t]);
    const double keep = std::exp(decayed - np);
    const double add = std::exp(e[t] - np);
    for (std::size_t m = 0; m < M; ++m) {
      if (with_distance) ad[m] = (ad[m] + a[m]) * keep;
      a[m] = a[m] * keep + x[m][t] * add;
    }
    p = np;
  }
  return out;
}

inline double scaled(double mantissa, double log_scale, double shift) {
  return mantissa == 0.0 ? 0.0 : mantissa * std::exp(log_scale - shift);
}

struct Lane {
  std::vector<double> k, v, g, y, ell;
};

template <typename Fn>
void for_each_lane(std::int64_t B, std::int64_t T, std::int64_t D, Fn&& fn) {
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t d = 0; d < D; ++d) {
      fn(b, d, [=](std::int64_t t) { return (b * T + t) * D + d; });
    }
  }
}

class BiWkvFunction : public torch::autograd::Function<BiWkvFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& k_in,
                               const torch::Tensor& v_in, const torch::Tensor& w_in,
                               const torch::Tensor& u_in) {
    const auto k = k_in.to(torch::kFloat64).contiguous();
    const auto v = v_in.to(torch::kFloat64).contiguous();
    const auto w = w_in.to(torch::kFloat64).contiguous();
    const auto u = u_in.to(torch::kFloat64).contiguous();
    const auto B = k.size(0), T = k.size(1), D = k.size(2);

    auto y = torch::empty_like(k);
    auto ell = torch::empty_like(k);
    const auto* kp = k.data_ptr<double>();
    const auto* vp = v.data_ptr<double>();
    const auto* wp = w.data_ptr<double>();
    const auto* up = u.data_ptr<double>();
    auto* yp = y.data_ptr<double>();
    auto* lp = ell.data_ptr<double>();

    std::vector<double> e(static_cast<std::size_t>(T));
    std::vector<std::vector<double>> x(2, std::vector<double>(static_cast<std::size_t>(T), 1.0));
    for_each_lane(B, T, D, [&](std::int64_t, std::int64_t d, auto at) {
      for (std::int64_t t = 0; t < T; ++t) {
        e[static_cast<std::size_t>(t)] = kp[at(t)];
        x[0][static_cast<std::size_t>(t)] = vp[at(t)];
      }
      const auto fwd = exclusive_scan(e, x, wp[d], false, false);
      const auto bwd = exclusive_scan(e, x, wp[d], true, false);
      for (std::int64_t t = 0; t < T; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const double self = up[d] + e[ts];
        const double m = std::max({fwd.scale[ts], bwd.scale[ts], self});
        const double num = scaled(fwd.mant[0][ts], fwd.scale[ts], m) +
                           scaled(bwd.mant[0][ts], bwd.scale[ts], m) + x[0][ts] * std::exp(self - m);
        const double den = scaled(fwd.mant[1][ts], fwd.scale[ts], m) +
                           scaled(bwd.mant[1][ts], bwd.scale[ts], m) + std::exp(self - m);
        yp[at(t)] = num / den;
        lp[at(t)] = m + std::log(den);
      }
    });

    ctx->save_for_backward({k, v, w, u, y, ell});
    ctx->saved_data["dtypes"] = std::vector<std::int64_t>{
        static_cast<std::int64_t>(k_in.scalar_type()), static_cast<std::int64_t>(v_in.scalar_type()),
        static_cast<std::int64_t>(w_in.scalar_type()), static_cast<std::int64_t>(u_in.scalar_type())};
    record_macs(10.0 * static_cast<double>(B * T * D));
    return y.to(v_in.scalar_type());
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grads) {
    const auto saved = ctx->get_saved_variables();
    const auto &k = saved[0], &v = saved[1], &w = saved[2], &u = saved[3], &y = saved[4],
               &ell = saved[5];
    const auto g = grads[0].to(torch::kFloat64).contiguous();
    const auto B = k.size(0), T = k.size(1), D = k.size(2);

    auto dk = torch::zeros_like(k);
    auto dv = torch::zeros_like(v);
    auto dw = torch::zeros_like(w);
    auto du = torch::zeros_like(u);
    const auto* kp = k.data_ptr<double>();
    const auto* vp = v.data_ptr<double>();
    const auto* wp = w.data_ptr<double>();
    const auto* up = u.data_ptr<double>();
    const auto* yp = y.data_ptr<double>();
    const auto* lp = ell.data_ptr<double>();
    const auto* gp = g.data_ptr<double>();
    auto* dkp = dk.data_ptr<double>();
    auto* dvp = dv.data_ptr<double>();
    auto* dwp = dw.data_ptr<double>();
    auto* dup = du.data_ptr<double>();

    const auto Ts = static_cast<std::size_t>(T);
    std::vector<double> ek(Ts), eq(Ts);
    std::vector<std::vector<double>> xv(2, std::vector<double>(Ts, 1.0));
    std::vector<std::vector<double>> xg(2, std::vector<double>(Ts));
    for_each_lane(B, T, D, [&](std::int64_t, std::int64_t d, auto at) {
      for (std::int64_t t = 0; t < T; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        ek[ts] = kp[at(t)];
        xv[0][ts] = vp[at(t)];
        eq[ts] = -lp[at(t)];
        xg[0][ts] = gp[at(t)];
        xg[1][ts] = gp[at(t)] * yp[at(t)];
      }
      // Normalized-weight sums over the other tokens: q = g / D_t, r = g y_t / D_t.
      const auto qf = exclusive_scan(eq, xg, wp[d], false, false);
      const auto qb = exclusive_scan(eq, xg, wp[d], true, false);
      // Distance-weighted numerator/denominator sums for the decay gradient.
      const auto nf = exclusive_scan(ek, xv, wp[d], false, true);
      const auto nb = exclusive_scan(ek, xv, wp[d], true, true);

      double dw_acc = 0.0, du_acc = 0.0;
      for (std::int64_t t = 0; t < T; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        const double kt = ek[ts];
        const double self = std::exp(up[d] + kt - lp[at(t)]);  // self weight / D_t
        const double sq = scaled(qf.mant[0][ts], qf.scale[ts], -kt) +
                          scaled(qb.mant[0][ts], qb.scale[ts], -kt) + self * xg[0][ts];
        const double sr = scaled(qf.mant[1][ts], qf.scale[ts], -kt) +
                          scaled(qb.mant[1][ts], qb.scale[ts], -kt) + self * xg[1][ts];
        dvp[at(t)] = sq;
        dkp[at(t)] = xv[0][ts] * sq - sr;
        du_acc += gp[at(t)] * self * (xv[0][ts] - yp[at(t)]);

        const double l = lp[at(t)];
        const double num_d = scaled(nf.dist[0][ts], nf.scale[ts], l) + scaled(nb.dist[0][ts], nb.scale[ts], l);
        const double den_d = scaled(nf.dist[1][ts], nf.scale[ts], l) + scaled(nb.dist[1][ts], nb.scale[ts], l);
        dw_acc -= gp[at(t)] * (num_d - yp[at(t)] * den_d);
      }
      dwp[d] += dw_acc;
      dup[d] += du_acc;
    });

    const auto dtypes = ctx->saved_data["dtypes"].toIntVector();
    auto cast = [](const torch::Tensor& t, std::int64_t code) {
      return t.to(static_cast<torch::ScalarType>(code));
    };
    return {cast(dk, dtypes[0]), cast(dv, dtypes[1]), cast(dw, dtypes[2]), cast(du, dtypes[3])};
  }
};

}  // namespace

torch::Tensor bi_wkv(const torch::Tensor& k, const torch::Tensor& v, const torch::Tensor& w,
                     const torch::Tensor& u) {
  TORCH_CHECK(k.dim() == 3 && k.sizes() == v.sizes(), "bi_wkv: k and v must share shape (B, T, D)");
  TORCH_CHECK(k.size(1) >= 1, "bi_wkv: need at least one token");
  TORCH_CHECK(w.dim() == 1 && w.size(0) == k.size(2) && u.dim() == 1 && u.size(0) == k.size(2),
              "bi_wkv: w and u must have shape (D)");
  return BiWkvFunction::apply(k, v, w, u);
}

}  // namespace mfcrf
