#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gigassl/io/binary.hpp"
#include "gigassl/numcore/param_store.hpp"

namespace gigassl {

// GSCK layout (little-endian):
//   "GSCK" | u32 version | u32 n_arrays
//   n_arrays x { u32 name_len | name | u32 rank | rank x u32 dim | numel x f32 }
//   u32 json_len | json header (UTF-8)
// Adam moments are stored as "<param>.m" / "<param>.v" arrays.
inline constexpr std::string_view kCheckpointMagic = "GSCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> arrays;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  w.str(ckpt.header.dump());
  w.save(path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Reader r(io::read_file(path), ErrorKind::FormatError, path.string());
  if (r.bytes(4) != kCheckpointMagic) r.fail("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto count = r.u32();
  for (std::uint32_t a = 0; a < count; ++a) {
    std::string name = r.str();
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("array '" + name + "' has invalid rank");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) r.fail("array '" + name + "' has a zero dimension");
      numel *= d;
    }
    if (numel > r.remaining() / 4) r.fail("array '" + name + "' is truncated");
    std::vector<float> data(numel);
    for (auto& v : data) v = r.f32();
    ckpt.arrays.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  try {
    ckpt.header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::parse_error& e) {
    r.fail(std::string("bad JSON header: ") + e.what());
  }
  return ckpt;
}

// Parameters, buffers and (optionally) Adam moments in store order.
template <typename T>
void append_store(Checkpoint& ckpt, const ParamStore<T>& store, bool with_optimizer) {
  for (const auto& [name, p] : store) ckpt.arrays.emplace_back(name, p.value.template cast<float>());
  for (const auto& [name, b] : store.buffers()) ckpt.arrays.emplace_back(name, b.template cast<float>());
  if (with_optimizer) {
    for (const auto& [name, p] : store) {
      ckpt.arrays.emplace_back(name + ".m", p.m.template cast<float>());
      ckpt.arrays.emplace_back(name + ".v", p.v.template cast<float>());
    }
  }
}

// Copies every parameter and buffer of the store from the checkpoint. Adam
// moments are restored when present. Returns whether they were.
template <typename T>
bool restore_store(ParamStore<T>& store, const Checkpoint& ckpt) {
  auto fetch = [&](const std::string& name, const std::vector<std::size_t>& shape) -> const Tensor<float>* {
    const Tensor<float>* t = ckpt.find(name);
    if (t && t->shape() != shape)
      throw FormatError("checkpoint array '" + name + "' has shape " + shape_string(t->shape()) + ", expected " +
                        shape_string(shape));
    return t;
  };
  for (auto& [name, p] : store) {
    const Tensor<float>* t = fetch(name, p.value.shape());
    if (!t) throw FormatError("checkpoint is missing parameter '" + name + "'");
    p.value = t->template cast<T>();
  }
  for (auto& [name, b] : store.buffers()) {
    const Tensor<float>* t = fetch(name, b.shape());
    if (!t) throw FormatError("checkpoint is missing buffer '" + name + "'");
    b = t->template cast<T>();
  }
  bool have_moments = true;
  for (auto& [name, p] : store) {
    const Tensor<float>* m = fetch(name + ".m", p.value.shape());
    const Tensor<float>* v = fetch(name + ".v", p.value.shape());
    if (!m || !v) {
      have_moments = false;
      continue;
    }
    p.m = m->template cast<T>();
    p.v = v->template cast<T>();
  }
  return have_moments;
}

}  // namespace gigassl
