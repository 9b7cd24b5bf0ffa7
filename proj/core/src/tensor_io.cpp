#include "mfcrf/tensor_io.hpp"

#include "mfcrf/error.hpp"

#include <torch/torch.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mfcrf {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw Error(std::string("tensor container truncated while reading ") + what);
  }
  return value;
}

}  // namespace

DtypeCode dtype_code(torch::Dtype dtype) {
  switch (dtype) {
    case torch::kFloat32: return DtypeCode::kFloat32;
    case torch::kFloat64: return DtypeCode::kFloat64;
    case torch::kInt64: return DtypeCode::kInt64;
    case torch::kUInt8: return DtypeCode::kUInt8;
    case torch::kInt32: return DtypeCode::kInt32;
    default: break;
  }
  throw Error("tensor container: unsupported dtype " + std::string(c10::toString(dtype)));
}

torch::Dtype dtype_from_code(DtypeCode code) {
  switch (code) {
    case DtypeCode::kFloat32: return torch::kFloat32;
    case DtypeCode::kFloat64: return torch::kFloat64;
    case DtypeCode::kInt64: return torch::kInt64;
    case DtypeCode::kUInt8: return torch::kUInt8;
    case DtypeCode::kInt32: return torch::kInt32;
  }
  throw Error("tensor container: unknown dtype code " +
              std::to_string(static_cast<int>(code)));
}

void write_tensor(std::ostream& out, const torch::Tensor& tensor) {
  const auto code = dtype_code(tensor.scalar_type());
  if (tensor.dim() > 255) {
    throw Error("tensor container: rank above 255");
  }
  const auto data = tensor.detach().to(torch::kCPU).contiguous();

  out.write(kTensorMagic, 4);
  put<std::uint16_t>(out, kTensorVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(code));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(data.dim()));
  for (const auto d : data.sizes()) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  }
  const auto bytes = static_cast<std::streamsize>(data.numel() * data.element_size());
  if (bytes > 0) {
    out.write(static_cast<const char*>(data.data_ptr()), bytes);
  }
  if (!out) {
    throw Error("tensor container: write failed");
  }
}

torch::Tensor read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || std::memcmp(magic.data(), kTensorMagic, 4) != 0) {
    throw Error("tensor container: bad magic (expected \"MFCT\")");
  }
  const auto version = get<std::uint16_t>(in, "version");
  if (version != kTensorVersion) {
    throw Error("tensor container: unsupported version " + std::to_string(version));
  }
  const auto dtype = dtype_from_code(static_cast<DtypeCode>(get<std::uint8_t>(in, "dtype")));
  const auto rank = get<std::uint8_t>(in, "rank");

  std::vector<std::int64_t> dims(rank);
  for (auto& d : dims) {
    const auto raw = get<std::uint64_t>(in, "dims");
    if (raw > static_cast<std::uint64_t>(INT64_MAX)) {
      throw Error("tensor container: dimension overflows int64");
    }
    d = static_cast<std::int64_t>(raw);
  }

  auto tensor = torch::empty(dims, torch::TensorOptions().dtype(dtype));
  const auto bytes = static_cast<std::streamsize>(tensor.numel() * tensor.element_size());
  if (bytes > 0) {
    in.read(static_cast<char*>(tensor.data_ptr()), bytes);
    if (in.gcount() != bytes) {
      throw Error("tensor container: payload truncated (expected " + std::to_string(bytes) +
                  " bytes, got " + std::to_string(in.gcount()) + ")");
    }
  }
  return tensor;
}

void save_tensor(const std::filesystem::path& path, const torch::Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open " + path.string() + " for writing");
  }
  write_tensor(out, tensor);
}

torch::Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  try {
    return read_tensor(in);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace mfcrf
