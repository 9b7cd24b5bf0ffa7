#pragma once

#include <torch/types.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mfcrf {

struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;

  double span() const { return hi - lo; }
};

/// A T x H x W stack of radar frames in native units.
struct RadarSequence {
  torch::Tensor frames;  // float32, T x H x W
  double cadence_minutes = 5.0;
  ValueRange native_range;
  std::string dataset_id = "synthetic";

  std::int64_t length() const { return frames.size(0); }
  std::int64_t height() const { return frames.size(1); }
  std::int64_t width() const { return frames.size(2); }

  /// Throws mfcrf::Error unless T >= 1, H, W >= 8 and every value lies in the native range.
  void validate() const;
};

/// Normalized condition/target pair cut from one sequence.
struct SequenceWindow {
  torch::Tensor condition;  // J x H x W in [0, 1]
  torch::Tensor target;     // K x H x W in [0, 1]
  std::int64_t sequence_index = 0;
  std::int64_t start_frame = 0;

  std::int64_t J() const { return condition.size(0); }
  std::int64_t K() const { return target.size(0); }
};

struct WindowSet {
  std::vector<SequenceWindow> windows;
  bool too_short = false;  // set when T < J + K
};

struct SplitManifest {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> val;
  std::vector<std::int64_t> test;

  /// Disjoint, each list increasing, and train < val < test element-wise.
  void validate() const;
};

/// (frame - lo) / (hi - lo) clipped to [0, 1]. Rejects non-finite values, reporting the flat index.
torch::Tensor normalize(const torch::Tensor& frame, const ValueRange& range);
torch::Tensor denormalize(const torch::Tensor& normalized, const ValueRange& range);

/// Corner-aligned bilinear resize of the two trailing dimensions.
torch::Tensor resize_bilinear(const torch::Tensor& frames, std::int64_t out_h = 128,
                              std::int64_t out_w = 128);

WindowSet make_windows(const RadarSequence& seq, std::int64_t J = 5, std::int64_t K = 20,
                       std::int64_t stride = 1, std::int64_t sequence_index = 0);

struct AdvectionParams {
  std::uint64_t seed = 0;
  int n_blobs = 4;
  double vx = 2.0;  // pixels per frame, along width
  double vy = 0.0;  // pixels per frame, along height
  double diffusion = 0.0;
  double decay = 1.0;
  std::int64_t T = 25;
  std::int64_t H = 64;
  std::int64_t W = 64;
  double amplitude_min = 0.5;
  double amplitude_max = 1.0;
  double sigma_min = 3.0;
  double sigma_max = 6.0;
  ValueRange native_range{0.0, 1.0};
  double cadence_minutes = 5.0;

  void validate() const;
};

/// Gaussian blobs moved by (vx, vy) per frame, widened by diffusion and scaled by decay.
/// Bit-deterministic for a fixed seed.
RadarSequence synthesize_advection(const AdvectionParams& params);

/// Sizes are floor(n * f) for train and val with the remainder in test; every split keeps
/// at least one window. Requires n >= 3 and fractions summing to 1.
SplitManifest chronological_split(std::int64_t n_windows,
                                  std::array<double, 3> fractions = {0.7, 0.1, 0.2});

/// Stacks windows[indices] into (B x J x H x W, B x K x H x W).
std::pair<torch::Tensor, torch::Tensor> stack_windows(const std::vector<SequenceWindow>& windows,
                                                      const std::vector<std::int64_t>& indices);

// Dataset directory: <name>.mfct holds the T x H x W native frames and <name>.json carries
// {"dataset_id", "cadence_minutes", "native_range": [lo, hi]}. Sequences are ordered by name.
void save_sequence(const std::filesystem::path& dir, const std::string& name,
                   const RadarSequence& seq);
RadarSequence load_sequence(const std::filesystem::path& container);
std::vector<RadarSequence> load_dataset(const std::filesystem::path& dir);

struct DatasetWindows {
  std::vector<SequenceWindow> windows;
  ValueRange native_range;
  std::string dataset_id;
};

/// Loads every sequence, optionally resizes to `size` x `size` (0 keeps native size), and cuts
/// windows in sequence order.
DatasetWindows load_windows(const std::filesystem::path& dir, std::int64_t J, std::int64_t K,
                            std::int64_t stride = 1, std::int64_t size = 0);

}  // namespace mfcrf
