#pragma once

#include <torch/types.h>

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace mfcrf {

// Tensor container layout (all integers little-endian):
//
//   offset  size        field
//   0       4           magic "MFCT"
//   4       2           version (u16, currently 1)
//   6       1           dtype code (u8): 1=float32 2=float64 3=int64 4=uint8 5=int32
//   7       1           rank (u8)
//   8       8*rank      dims (u64 each)
//   8+8r    prod(dims)*elem_size   row-major payload
//
// A zero-sized dimension is legal; the payload is then empty.

inline constexpr char kTensorMagic[4] = {'M', 'F', 'C', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;

enum class DtypeCode : std::uint8_t {
  kFloat32 = 1,
  kFloat64 = 2,
  kInt64 = 3,
  kUInt8 = 4,
  kInt32 = 5,
};

DtypeCode dtype_code(torch::Dtype dtype);
torch::Dtype dtype_from_code(DtypeCode code);

void write_tensor(std::ostream& out, const torch::Tensor& tensor);
torch::Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const torch::Tensor& tensor);
torch::Tensor load_tensor(const std::filesystem::path& path);

}  // namespace mfcrf
