#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gigassl/io/binary.hpp"
#include "gigassl/numcore/adam.hpp"
#include "gigassl/sparsemap.hpp"

namespace gigassl {

struct TrainConfig {
  std::size_t tiles = 5;  // T
  std::size_t batch_size = 16;
  double temperature = 0.5;
  std::size_t epochs = 1000;
  bool shared_aug = true;
  bool slide_aug = true;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  std::int64_t downsample = kDefaultDownsample;
  std::vector<std::size_t> block_channels{64, 64};
  int kernel_size = 3;
  std::size_t out_dim = 64;
  std::size_t proj_dim = 128;

  void validate() const {
    if (tiles < 1) throw InvalidArgument("tiles must be >= 1");
    if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2");
    if (!(temperature > 0)) throw InvalidArgument("temperature must be > 0");
    if (downsample < 1) throw InvalidArgument("downsample must be >= 1");
    if (block_channels.empty()) throw InvalidArgument("block_channels must list at least one width");
    if (proj_dim < 1) throw InvalidArgument("proj_dim must be >= 1");
    adam.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"tiles", c.tiles},
                     {"batch_size", c.batch_size},
                     {"temperature", c.temperature},
                     {"epochs", c.epochs},
                     {"shared_aug", c.shared_aug},
                     {"slide_aug", c.slide_aug},
                     {"lr", c.adam.lr},
                     {"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},
                     {"eps", c.adam.eps},
                     {"weight_decay", c.adam.weight_decay},
                     {"seed", c.seed},
                     {"downsample", c.downsample},
                     {"block_channels", c.block_channels},
                     {"kernel_size", c.kernel_size},
                     {"out_dim", c.out_dim},
                     {"proj_dim", c.proj_dim}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.tiles = j.value("tiles", d.tiles);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.temperature = j.value("temperature", d.temperature);
  c.epochs = j.value("epochs", d.epochs);
  c.shared_aug = j.value("shared_aug", d.shared_aug);
  c.slide_aug = j.value("slide_aug", d.slide_aug);
  c.adam.lr = j.value("lr", d.adam.lr);
  c.adam.beta1 = j.value("beta1", d.adam.beta1);
  c.adam.beta2 = j.value("beta2", d.adam.beta2);
  c.adam.eps = j.value("eps", d.adam.eps);
  c.adam.weight_decay = j.value("weight_decay", d.adam.weight_decay);
  c.seed = j.value("seed", d.seed);
  c.downsample = j.value("downsample", d.downsample);
  c.block_channels = j.value("block_channels", d.block_channels);
  c.kernel_size = j.value("kernel_size", d.kernel_size);
  c.out_dim = j.value("out_dim", d.out_dim);
  c.proj_dim = j.value("proj_dim", d.proj_dim);
}

namespace detail {

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw InvalidArgument("config key '" + key + "': bad value '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw InvalidArgument("config key '" + key + "': expected a boolean, got '" + text + "'");
}

}  // namespace detail

// Sets one field from its textual value. Keys match the JSON field names.
inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& raw) {
  using detail::parse_number;
  const std::string value = detail::trim(raw);
  if (key == "tiles") c.tiles = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "temperature") c.temperature = parse_number<double>(key, value);
  else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
  else if (key == "shared_aug") c.shared_aug = detail::parse_bool(key, value);
  else if (key == "slide_aug") c.slide_aug = detail::parse_bool(key, value);
  else if (key == "lr") c.adam.lr = parse_number<double>(key, value);
  else if (key == "beta1") c.adam.beta1 = parse_number<double>(key, value);
  else if (key == "beta2") c.adam.beta2 = parse_number<double>(key, value);
  else if (key == "eps") c.adam.eps = parse_number<double>(key, value);
  else if (key == "weight_decay") c.adam.weight_decay = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "downsample") c.downsample = parse_number<std::int64_t>(key, value);
  else if (key == "kernel_size") c.kernel_size = parse_number<int>(key, value);
  else if (key == "out_dim") c.out_dim = parse_number<std::size_t>(key, value);
  else if (key == "proj_dim") c.proj_dim = parse_number<std::size_t>(key, value);
  else if (key == "block_channels") {
    c.block_channels.clear();
    std::stringstream ss(value);
    for (std::string item; std::getline(ss, item, ',');)
      c.block_channels.push_back(parse_number<std::size_t>(key, detail::trim(item)));
  } else {
    throw InvalidArgument("unknown config key '" + key + "'");
  }
}

// Flat "key = value" file; '#' starts a comment.
inline void load_train_config(const std::filesystem::path& path, TrainConfig& c) {
  std::stringstream in(io::read_file(path));
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    apply_setting(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

}  // namespace gigassl
