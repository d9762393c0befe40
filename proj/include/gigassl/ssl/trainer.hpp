#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gigassl/random.hpp"
#include "gigassl/ssl/bank.hpp"
#include "gigassl/ssl/model.hpp"
#include "gigassl/ssl/ntxent.hpp"
#include "gigassl/ssl/train_config.hpp"
#include "gigassl/ssl/view.hpp"

namespace gigassl {

namespace rng_tag {
inline constexpr std::uint64_t kInit = 0x1417;
inline constexpr std::uint64_t kShuffle = 0x5a0f;
inline constexpr std::uint64_t kView = 0x71e3;
}  // namespace rng_tag

inline ViewOptions view_options(const TrainConfig& cfg) {
  return {cfg.tiles, cfg.shared_aug, cfg.slide_aug, cfg.downsample};
}

inline PoolingNetworkConfig network_config(const TrainConfig& cfg, std::size_t feat_dim) {
  PoolingNetworkConfig net;
  net.in_channels = feat_dim;
  net.block_channels = cfg.block_channels;
  net.kernel_size = cfg.kernel_size;
  net.out_dim = cfg.out_dim;
  return net;
}

/// Two views per slide, pooled, projected, NT-Xent, one Adam step.
/// `view_rng(b, v)` supplies the stream for view v of batch entry b.
template <typename T>
double train_step(GigaSslModel<T>& model, std::span<const EmbeddingBank* const> batch, const TrainConfig& cfg,
                  const std::function<Rng(std::size_t, std::size_t)>& view_rng) {
  if (batch.size() < 2) throw InvalidArgument("a training batch needs at least 2 slides");
  const ViewOptions opts = view_options(cfg);
  std::vector<SparseMap<T>> views;
  views.reserve(2 * batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t v = 0; v < 2; ++v) {
      Rng rng = view_rng(b, v);
      views.push_back(sample_view<T>(*batch[b], opts, rng).first);
    }

  model.store().zero_grad();
  model.set_mode(Mode::Train);
  Matrix<T> pooled = model.network().forward(std::span<const SparseMap<T>>(views));
  Matrix<T> z = model.projector().forward(pooled);
  auto result = nt_xent(z, adjacent_pairing(batch.size()), cfg.temperature);
  model.network().backward(model.projector().backward(result.grad));
  adam_step(model.store(), cfg.adam);
  return result.loss;
}

struct TrainReport {
  std::vector<double> epoch_loss;  // index = epoch
  std::size_t steps = 0;
  std::size_t n_slides = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Epoch loop over an in-memory corpus. Every random draw comes from a stream
/// keyed by (seed, epoch, ...), so a run resumed at an epoch boundary replays
/// exactly what an uninterrupted run would have done.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<EmbeddingBank> banks) : cfg_(std::move(cfg)), banks_(std::move(banks)) {
    cfg_.validate();
    if (banks_.size() < 2) throw InvalidArgument("pretraining needs at least 2 slides");
    const auto dim = banks_.front().feat_dim;
    for (const auto& b : banks_) {
      if (b.feat_dim != dim)
        throw DimensionMismatch(b.slide_id + ": feature dim " + std::to_string(b.feat_dim) + " differs from " +
                                std::to_string(dim));
      if (b.n_tiles < cfg_.tiles)
        throw InsufficientTiles(b.slide_id + ": " + std::to_string(b.n_tiles) + " tiles per augmentation, " +
                                std::to_string(cfg_.tiles) + " needed");
      if (b.n_augs < 2) throw InvalidArgument(b.slide_id + ": bank has no augmented slices");
    }
    model_ = std::make_unique<GigaSslModel<T>>(network_config(cfg_, dim), cfg_.proj_dim);
    Rng init = derive_rng(cfg_.seed, {rng_tag::kInit});
    model_->init(init);
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  GigaSslModel<T>& model() { return *model_; }
  std::size_t epoch() const noexcept { return epoch_; }
  const std::vector<double>& history() const noexcept { return history_; }

  double run_epoch() {
    Rng shuffle = derive_rng(cfg_.seed, {rng_tag::kShuffle, epoch_});
    const auto order = sample_without_replacement(banks_.size(), banks_.size(), shuffle);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      if (end - start < 2) break;
      std::vector<const EmbeddingBank*> batch;
      std::vector<std::size_t> ids;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&banks_[order[i]]);
        ids.push_back(order[i]);
      }
      const std::uint64_t ep = epoch_;
      const std::uint64_t seed = cfg_.seed;
      total += train_step<T>(*model_, batch, cfg_, [&](std::size_t b, std::size_t v) {
        return derive_rng(seed, {rng_tag::kView, ep, ids[b], v});
      });
      ++batches;
    }
    ++epoch_;
    history_.push_back(total / static_cast<double>(batches));
    return history_.back();
  }

  void run(const std::function<void(std::size_t, double)>& on_epoch = {}) {
    while (epoch_ < cfg_.epochs) {
      const double loss = run_epoch();
      if (on_epoch) on_epoch(epoch_, loss);
    }
  }

  Checkpoint checkpoint() const {
    Checkpoint ckpt;
    ckpt.header = {{"format", "gigassl-checkpoint"},
                   {"network", model_->network().config()},
                   {"proj_dim", model_->proj_dim()},
                   {"train", cfg_},
                   {"epoch", epoch_},
                   {"step", model_->store().step()},
                   {"loss_history", history_},
                   {"n_slides", banks_.size()}};
    append_store(ckpt, model_->store(), true);
    return ckpt;
  }

  // Restores weights, buffers, optimizer moments and progress. The network
  // shape must match this trainer's.
  void resume(const Checkpoint& ckpt) {
    const auto& h = ckpt.header;
    if (!h.contains("network") || !h.contains("epoch") || !h.contains("step"))
      throw FormatError("checkpoint header is not a pretraining checkpoint");
    const auto net = h.at("network").get<PoolingNetworkConfig>();
    const auto& mine = model_->network().config();
    if (net.in_channels != mine.in_channels || net.block_channels != mine.block_channels ||
        net.kernel_size != mine.kernel_size || net.out_dim != mine.out_dim)
      throw InvalidArgument("checkpoint network shape differs from the configured one");
    if (!restore_store(model_->store(), ckpt)) throw FormatError("checkpoint carries no optimizer state");
    model_->store().set_step(h.at("step").get<std::uint64_t>());
    epoch_ = h.at("epoch").get<std::size_t>();
    history_ = h.value("loss_history", std::vector<double>{});
  }

 private:
  TrainConfig cfg_;
  std::vector<EmbeddingBank> banks_;
  std::unique_ptr<GigaSslModel<T>> model_;
  std::size_t epoch_ = 0;
  std::vector<double> history_;
};

inline std::vector<EmbeddingBank> load_bank_dir(const std::filesystem::path& dir) {
  std::vector<EmbeddingBank> banks;
  for (const auto& p : list_banks(dir)) banks.push_back(load_bank(p));
  return banks;
}

inline std::string format_loss_csv(const std::vector<double>& history) {
  std::string out = "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e + 1, history[e]);
    out += buf;
  }
  return out;
}

struct PretrainPaths {
  std::filesystem::path bank_dir;
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> loss_csv;  // default: <checkpoint>.loss.csv
  std::optional<std::filesystem::path> report;    // default: <checkpoint>.report.json
  std::optional<std::filesystem::path> resume;
};

/// Trains on every bank of a directory and writes the checkpoint, the per-epoch
/// loss CSV and a JSON report.
inline nlohmann::json pretrain(const TrainConfig& cfg, const PretrainPaths& paths,
                               const std::function<void(std::size_t, double)>& on_epoch = {}) {
  auto banks = load_bank_dir(paths.bank_dir);
  if (banks.size() < 2)
    throw InvalidArgument(paths.bank_dir.string() + ": pretraining needs at least 2 banks, found " +
                          std::to_string(banks.size()));
  Trainer<float> trainer(cfg, std::move(banks));
  if (paths.resume) trainer.resume(load_checkpoint(*paths.resume));
  trainer.run(on_epoch);
  save_checkpoint(trainer.checkpoint(), paths.checkpoint);

  const auto loss_csv = paths.loss_csv.value_or(std::filesystem::path(paths.checkpoint.string() + ".loss.csv"));
  io::write_text(loss_csv, format_loss_csv(trainer.history()));
  nlohmann::json report = {{"checkpoint", paths.checkpoint.filename().string()},
                           {"epochs", trainer.epoch()},
                           {"steps", trainer.model().store().step()},
                           {"shared_aug", cfg.shared_aug},
                           {"slide_aug", cfg.slide_aug},
                           {"train", cfg},
                           {"final_loss", trainer.history().empty() ? 0.0 : trainer.history().back()},
                           {"resumed", paths.resume.has_value()}};
  const auto report_path = paths.report.value_or(std::filesystem::path(paths.checkpoint.string() + ".report.json"));
  io::write_text(report_path, report.dump(2) + "\n");
  return report;
}

}  // namespace gigassl
