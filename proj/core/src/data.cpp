#include "mfcrf/data.hpp"

#include "mfcrf/error.hpp"
#include "mfcrf/tensor_io.hpp"

#include <torch/torch.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace mfcrf {
namespace {

// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

void check_range(const ValueRange& range) {
  if (!(range.lo < range.hi)) {
    throw Error("native range must satisfy lo < hi");
  }
}

}  // namespace

void RadarSequence::validate() const {
  if (!frames.defined() || frames.dim() != 3) {
    throw Error("radar sequence frames must be T x H x W");
  }
  if (length() < 1 || height() < 8 || width() < 8) {
    throw Error("radar sequence needs T >= 1 and H, W >= 8");
  }
  check_range(native_range);
  const auto lo = frames.min().item<double>();
  const auto hi = frames.max().item<double>();
  if (lo < native_range.lo || hi > native_range.hi) {
    throw Error("radar sequence values leave the native range");
  }
}

void SplitManifest::validate() const {
  auto increasing = [](const std::vector<std::int64_t>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
  };
  if (!increasing(train) || !increasing(val) || !increasing(test)) {
    throw Error("split lists must be strictly increasing");
  }
  if (!train.empty() && !val.empty() && train.back() >= val.front()) {
    throw Error("validation windows must postdate training windows");
  }
  if (!val.empty() && !test.empty() && val.back() >= test.front()) {
    throw Error("test windows must postdate validation windows");
  }
  if (!train.empty() && !test.empty() && train.back() >= test.front()) {
    throw Error("test windows must postdate training windows");
  }
}

torch::Tensor normalize(const torch::Tensor& frame, const ValueRange& range) {
  check_range(range);
  const auto finite = torch::isfinite(frame);
  if (!finite.all().item<bool>()) {
    const auto offender = torch::logical_not(finite).flatten().nonzero()[0][0].item<std::int64_t>();
    throw Error("normalize: non-finite value at flat index " + std::to_string(offender));
  }
  return ((frame - range.lo) / range.span()).clamp(0.0, 1.0);
}

torch::Tensor denormalize(const torch::Tensor& normalized, const ValueRange& range) {
  check_range(range);
  return normalized * range.span() + range.lo;
}

torch::Tensor resize_bilinear(const torch::Tensor& frames, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 2 || out_w < 2) {
    throw Error("resize_bilinear: output must be at least 2 x 2");
  }
  if (frames.dim() < 2) {
    throw Error("resize_bilinear: input needs at least two dimensions");
  }
  const auto in_h = frames.size(-2);
  const auto in_w = frames.size(-1);
  if (in_h < 2 || in_w < 2) {
    throw Error("resize_bilinear: input must be at least 2 x 2");
  }
  if (in_h == out_h && in_w == out_w) {
    return frames.clone();
  }

  auto lead = frames.sizes().vec();
  lead.resize(lead.size() - 2);
  const auto src = frames.to(torch::kFloat64).contiguous().view({-1, in_h, in_w});
  auto dst = torch::empty({src.size(0), out_h, out_w}, src.options());
  auto s = src.accessor<double, 3>();
  auto d = dst.accessor<double, 3>();

  const double sy = static_cast<double>(in_h - 1) / static_cast<double>(out_h - 1);
  const double sx = static_cast<double>(in_w - 1) / static_cast<double>(out_w - 1);
  for (std::int64_t n = 0; n < src.size(0); ++n) {
    for (std::int64_t i = 0; i < out_h; ++i) {
      const double y = static_cast<double>(i) * sy;
      const auto y0 = std::min<std::int64_t>(static_cast<std::int64_t>(y), in_h - 2);
      const double fy = y - static_cast<double>(y0);
      for (std::int64_t j = 0; j < out_w; ++j) {
        const double x = static_cast<double>(j) * sx;
        const auto x0 = std::min<std::int64_t>(static_cast<std::int64_t>(x), in_w - 2);
        const double fx = x - static_cast<double>(x0);
        const double top = s[n][y0][x0] + fx * (s[n][y0][x0 + 1] - s[n][y0][x0]);
        const double bot = s[n][y0 + 1][x0] + fx * (s[n][y0 + 1][x0 + 1] - s[n][y0 + 1][x0]);
        d[n][i][j] = top + fy * (bot - top);
      }
    }
  }
  lead.push_back(out_h);
  lead.push_back(out_w);
  return dst.view(lead).to(frames.scalar_type());
}

WindowSet make_windows(const RadarSequence& seq, std::int64_t J, std::int64_t K,
                       std::int64_t stride, std::int64_t sequence_index) {
  if (J < 1 || K < 1 || stride < 1) {
    throw Error("make_windows: J, K and stride must be positive");
  }
  WindowSet out;
  const auto T = seq.length();
  if (T < J + K) {
    out.too_short = true;
    return out;
  }
  const auto normalized = normalize(seq.frames, seq.native_range).to(torch::kFloat32);
  for (std::int64_t s = 0; s + J + K <= T; s += stride) {
    SequenceWindow w;
    w.condition = normalized.slice(0, s, s + J).clone();
    w.target = normalized.slice(0, s + J, s + J + K).clone();
    w.sequence_index = sequence_index;
    w.start_frame = s;
    out.windows.push_back(std::move(w));
  }
  return out;
}

void AdvectionParams::validate() const {
  if (T < 1 || H < 1 || W < 1) {
    throw Error("advection: T, H, W must be positive");
  }
  if (n_blobs < 0) {
    throw Error("advection: n_blobs must be non-negative");
  }
  if (diffusion < 0.0) {
    throw Error("advection: diffusion must be non-negative");
  }
  if (!(decay > 0.0 && decay <= 1.0)) {
    throw Error("advection: decay must lie in (0, 1]");
  }
  if (!(sigma_min > 0.0 && sigma_min <= sigma_max)) {
    throw Error("advection: need 0 < sigma_min <= sigma_max");
  }
  if (!(amplitude_min >= 0.0 && amplitude_min <= amplitude_max)) {
    throw Error("advection: need 0 <= amplitude_min <= amplitude_max");
  }
  check_range(native_range);
}

RadarSequence synthesize_advection(const AdvectionParams& p) {
  p.validate();

  struct Blob {
    double x, y, amplitude, sigma;
  };
  std::mt19937_64 gen(p.seed);
  std::vector<Blob> blobs;
  blobs.reserve(static_cast<std::size_t>(p.n_blobs));
  const double drift_x = p.vx * static_cast<double>(p.T - 1) / 2.0;
  const double drift_y = p.vy * static_cast<double>(p.T - 1) / 2.0;
  for (int b = 0; b < p.n_blobs; ++b) {
    Blob blob{};
    blob.x = uniform(gen, 0.0, static_cast<double>(p.W - 1)) - drift_x;
    blob.y = uniform(gen, 0.0, static_cast<double>(p.H - 1)) - drift_y;
    blob.amplitude = uniform(gen, p.amplitude_min, p.amplitude_max);
    blob.sigma = uniform(gen, p.sigma_min, p.sigma_max);
    blobs.push_back(blob);
  }

  auto frames = torch::zeros({p.T, p.H, p.W}, torch::kFloat64);
  auto acc = frames.accessor<double, 3>();
  for (std::int64_t t = 0; t < p.T; ++t) {
    const double td = static_cast<double>(t);
    for (const auto& blob : blobs) {
      const double cx = blob.x + p.vx * td;
      const double cy = blob.y + p.vy * td;
      // Heat-kernel widening keeps the blob mass constant; decay scales it.
      const double var0 = blob.sigma * blob.sigma;
      const double var = var0 + 2.0 * p.diffusion * td;
      const double amp = blob.amplitude * std::pow(p.decay, td) * var0 / var;
      for (std::int64_t i = 0; i < p.H; ++i) {
        const double dy = static_cast<double>(i) - cy;
        for (std::int64_t j = 0; j < p.W; ++j) {
          const double dx = static_cast<double>(j) - cx;
          acc[t][i][j] += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * var));
        }
      }
    }
  }

  RadarSequence seq;
  const auto& r = p.native_range;
  seq.frames = (frames.clamp(0.0, 1.0) * r.span() + r.lo).to(torch::kFloat32);
  seq.cadence_minutes = p.cadence_minutes;
  seq.native_range = r;
  seq.dataset_id = "synthetic";
  return seq;
}

SplitManifest chronological_split(std::int64_t n, std::array<double, 3> fractions) {
  if (n < 3) {
    throw Error("chronological_split: need at least 3 windows");
  }
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 ||
      std::any_of(fractions.begin(), fractions.end(), [](double f) { return f < 0.0; })) {
    throw Error("chronological_split: fractions must be non-negative and sum to 1");
  }
  const auto nd = static_cast<double>(n);
  std::array<std::int64_t, 3> sizes{};
  sizes[0] = static_cast<std::int64_t>(std::floor(nd * fractions[0] + 1e-9));
  sizes[1] = static_cast<std::int64_t>(std::floor(nd * fractions[1] + 1e-9));
  sizes[2] = n - sizes[0] - sizes[1];
  // Minimum one window per split, taken from the largest split.
  for (auto& s : sizes) {
    if (s == 0) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      --*largest;
      s = 1;
    }
  }

  SplitManifest m;
  std::int64_t next = 0;
  for (std::int64_t i = 0; i < sizes[0]; ++i) m.train.push_back(next++);
  for (std::int64_t i = 0; i < sizes[1]; ++i) m.val.push_back(next++);
  for (std::int64_t i = 0; i < sizes[2]; ++i) m.test.push_back(next++);
  m.validate();
  return m;
}

std::pair<torch::Tensor, torch::Tensor> stack_windows(const std::vector<SequenceWindow>& windows,
                                                      const std::vector<std::int64_t>& indices) {
  if (indices.empty()) {
    throw Error("stack_windows: empty index list");
  }
  std::vector<torch::Tensor> cond;
  std::vector<torch::Tensor> target;
  cond.reserve(indices.size());
  target.reserve(indices.size());
  for (const auto i : indices) {
    if (i < 0 || i >= static_cast<std::int64_t>(windows.size())) {
      throw Error("stack_windows: index " + std::to_string(i) + " out of range");
    }
    cond.push_back(windows[static_cast<std::size_t>(i)].condition);
    target.push_back(windows[static_cast<std::size_t>(i)].target);
  }
  return {torch::stack(cond), torch::stack(target)};
}

void save_sequence(const std::filesystem::path& dir, const std::string& name,
                   const RadarSequence& seq) {
  std::filesystem::create_directories(dir);
  save_tensor(dir / (name + ".mfct"), seq.frames.to(torch::kFloat32));
  nlohmann::json meta = {
      {"dataset_id", seq.dataset_id},
      {"cadence_minutes", seq.cadence_minutes},
      {"native_range", {seq.native_range.lo, seq.native_range.hi}},
  };
  std::ofstream out(dir / (name + ".json"));
  out << meta.dump(2) << "\n";
}

RadarSequence load_sequence(const std::filesystem::path& container) {
  auto sidecar = container;
  sidecar.replace_extension(".json");
  std::ifstream in(sidecar);
  if (!in) {
    throw Error("missing metadata sidecar " + sidecar.string());
  }
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(sidecar.string() + ": " + e.what());
  }

  RadarSequence seq;
  seq.frames = load_tensor(container).to(torch::kFloat32);
  seq.dataset_id = meta.value("dataset_id", std::string("unknown"));
  seq.cadence_minutes = meta.value("cadence_minutes", 5.0);
  const auto range = meta.at("native_range").get<std::vector<double>>();
  if (range.size() != 2) {
    throw Error(sidecar.string() + ": native_range must be [lo, hi]");
  }
  seq.native_range = {range[0], range[1]};
  // Out-of-range native values are clipped, matching common radar QC.
  seq.frames = seq.frames.clamp(seq.native_range.lo, seq.native_range.hi);
  seq.validate();
  return seq;
}

std::vector<RadarSequence> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error("dataset directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> containers;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mfct") {
      containers.push_back(entry.path());
    }
  }
  std::sort(containers.begin(), containers.end());
  std::vector<RadarSequence> out;
  out.reserve(containers.size());
  for (const auto& c : containers) {
    out.push_back(load_sequence(c));
  }
  return out;
}

DatasetWindows load_windows(const std::filesystem::path& dir, std::int64_t J, std::int64_t K,
                            std::int64_t stride, std::int64_t size) {
  auto sequences = load_dataset(dir);
  if (sequences.empty()) {
    throw Error("no sequences found in " + dir.string());
  }
  DatasetWindows out;
  out.native_range = sequences.front().native_range;
  out.dataset_id = sequences.front().dataset_id;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    auto& seq = sequences[s];
    if (size > 0 && (seq.height() != size || seq.width() != size)) {
      seq.frames = resize_bilinear(seq.frames, size, size);
    }
    auto set = make_windows(seq, J, K, stride, static_cast<std::int64_t>(s));
    for (auto& w : set.windows) {
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace mfcrf
