#pragma once

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mfcrf {

/// Everything needed to resume training bit-exactly or to sample with EMA weights.
struct Checkpoint {
  nlohmann::json config;    // resolved run config
  std::string fingerprint;  // of `config`
  std::map<std::string, torch::Tensor> parameters;
  std::map<std::string, torch::Tensor> buffers;
  std::vector<torch::Tensor> ema_shadow;  // in module parameter order
  double ema_decay = 0.95;
  torch::Tensor optimizer_state;  // uint8 bytes of the optimizer's own archive
  torch::Tensor rng_state;        // uint8 generator state
  torch::Tensor permutation;      // current epoch's window order (int64)
  std::int64_t cursor = 0;        // next position in `permutation`
  std::int64_t step = 0;          // optimizer steps taken
  std::int64_t epoch = 0;         // completed epochs
  double best_csi_m = -1.0;       // -1 until the first validation
  std::vector<double> val_history;
};

// File layout: "MFCK", u16 version, u64 header length, JSON header (scalars and the ordered
// tensor list), then each tensor in the MFCT container encoding.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Verifies the stored fingerprint against the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mfcrf
