#include "mfcrf/checkpoint.hpp"

#include "mfcrf/config.hpp"
#include "mfcrf/error.hpp"
#include "mfcrf/tensor_io.hpp"

#include <array>
#include <fstream>

namespace mfcrf {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'F', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  for (const auto& [name, t] : c.parameters) tensors.emplace_back("param:" + name, t);
  for (const auto& [name, t] : c.buffers) tensors.emplace_back("buffer:" + name, t);
  for (std::size_t i = 0; i < c.ema_shadow.size(); ++i) {
    tensors.emplace_back("ema:" + std::to_string(i), c.ema_shadow[i]);
  }
  if (c.optimizer_state.defined()) tensors.emplace_back("optimizer", c.optimizer_state);
  if (c.rng_state.defined()) tensors.emplace_back("rng", c.rng_state);
  if (c.permutation.defined()) tensors.emplace_back("permutation", c.permutation);

  nlohmann::json header;
  header["config"] = c.config;
  header["fingerprint"] = c.fingerprint;
  header["ema_decay"] = c.ema_decay;
  header["cursor"] = c.cursor;
  header["step"] = c.step;
  header["epoch"] = c.epoch;
  header["best_csi_m"] = c.best_csi_m;
  header["val_history"] = c.val_history;
  auto& names = header["tensors"] = nlohmann::json::array();
  for (const auto& entry : tensors) names.push_back(entry.first);
  const auto text = header.dump();

  // Write to a sibling file first so an interrupted save never clobbers a good checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint16_t>(out, kVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& entry : tensors) write_tensor(out, entry.second.detach().cpu());
    if (!out) throw Error("failed while writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(path.string() + " is not a checkpoint (bad magic)");
  const auto version = take<std::uint16_t>(in, "version");
  if (version != kVersion) {
    throw Error("checkpoint " + path.string() + " has unsupported version " +
                std::to_string(version));
  }
  const auto len = take<std::uint64_t>(in, "header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("checkpoint truncated while reading header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header is corrupt: ") + e.what());
  }

  Checkpoint c;
  c.config = header.at("config");
  c.fingerprint = header.at("fingerprint").get<std::string>();
  if (fingerprint(c.config) != c.fingerprint) {
    throw Error("checkpoint " + path.string() + ": config fingerprint mismatch (stored " +
                c.fingerprint + ", computed " + fingerprint(c.config) + ")");
  }
  c.ema_decay = header.at("ema_decay").get<double>();
  c.cursor = header.at("cursor").get<std::int64_t>();
  c.step = header.at("step").get<std::int64_t>();
  c.epoch = header.at("epoch").get<std::int64_t>();
  c.best_csi_m = header.at("best_csi_m").get<double>();
  c.val_history = header.at("val_history").get<std::vector<double>>();

  for (const auto& name_json : header.at("tensors")) {
    const auto name = name_json.get<std::string>();
    auto t = read_tensor(in);
    auto strip = [&](const std::string& prefix) { return name.substr(prefix.size()); };
    if (name.rfind("param:", 0) == 0) {
      c.parameters[strip("param:")] = t;
    } else if (name.rfind("buffer:", 0) == 0) {
      c.buffers[strip("buffer:")] = t;
    } else if (name.rfind("ema:", 0) == 0) {
      c.ema_shadow.push_back(t);
    } else if (name == "optimizer") {
      c.optimizer_state = t;
    } else if (name == "rng") {
      c.rng_state = t;
    } else if (name == "permutation") {
      c.permutation = t;
    } else {
      throw Error("checkpoint contains unknown tensor entry " + name);
    }
  }
  return c;
}

}  // namespace mfcrf
