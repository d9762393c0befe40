// gigassl: corpus generation, pretraining, embedding and linear probing.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gigassl/datagen.hpp"
#include "gigassl/gradcheck.hpp"
#include "gigassl/inference.hpp"
#include "gigassl/labels.hpp"
#include "gigassl/probe.hpp"
#include "gigassl/selftest.hpp"
#include "gigassl/ssl/trainer.hpp"

using namespace gigassl;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct GenArgs {
  GenConfig cfg;
  fs::path out = "corpus";
  std::size_t threads = 0;
};

struct PretrainArgs {
  TrainConfig cfg;
  fs::path banks = "corpus";
  fs::path out = "model.gsck";
  std::string config_file;
  std::string resume;
  std::string log_csv;
  std::string report;
  std::size_t log_every = 10;
  bool no_shared_aug = false;
  bool no_slide_aug = false;
};

struct EmbedArgs {
  fs::path banks = "corpus";
  fs::path checkpoint = "model.gsck";
  fs::path out = "embeddings.gse";
  std::string csv;
  std::size_t views = kDefaultViews;
  std::size_t tiles = 0;
  std::uint64_t seed = 0;
  bool avgmil = false;
  std::size_t threads = 0;
};

struct ProbeArgs {
  fs::path embeddings = "embeddings.gse";
  fs::path labels = "corpus/labels.csv";
  fs::path out = "report.csv";
  std::vector<std::string> budgets{"all"};
  std::size_t splits = 10;
  double test_fraction = 0.2;
  double l2 = 1e-3;
  std::string normalization = "l2-unit";
  std::string task = "task";
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

std::size_t resolve_threads(std::size_t flag) { return flag > 0 ? flag : default_threads(); }

int run_gen(const GenArgs& a) {
  const auto summary = generate_corpus(a.cfg, a.out, resolve_threads(a.threads));
  std::printf("wrote %zu banks, labels.csv and corpus.json to %s\n", summary.slide_ids.size(), a.out.c_str());
  return 0;
}

int run_pretrain(PretrainArgs a, const CLI::App& sub) {
  a.cfg.shared_aug = !a.no_shared_aug;
  a.cfg.slide_aug = !a.no_slide_aug;
  // The config file supplies defaults; flags given on the command line win.
  if (!a.config_file.empty()) {
    TrainConfig from_file;
    load_train_config(a.config_file, from_file);
    auto keep = [&](const char* flag, auto& field, const auto& file_value) {
      if (sub.count(flag) == 0) field = file_value;
    };
    keep("--epochs", a.cfg.epochs, from_file.epochs);
    keep("--tiles", a.cfg.tiles, from_file.tiles);
    keep("--batch", a.cfg.batch_size, from_file.batch_size);
    keep("--tau", a.cfg.temperature, from_file.temperature);
    keep("--no-shared-aug", a.cfg.shared_aug, from_file.shared_aug);
    keep("--no-slide-aug", a.cfg.slide_aug, from_file.slide_aug);
    keep("--seed", a.cfg.seed, from_file.seed);
    keep("--lr", a.cfg.adam.lr, from_file.adam.lr);
    keep("--weight-decay", a.cfg.adam.weight_decay, from_file.adam.weight_decay);
    keep("--downsample", a.cfg.downsample, from_file.downsample);
    keep("--channels", a.cfg.block_channels, from_file.block_channels);
    keep("--out-dim", a.cfg.out_dim, from_file.out_dim);
    keep("--proj-dim", a.cfg.proj_dim, from_file.proj_dim);
    keep("--kernel", a.cfg.kernel_size, from_file.kernel_size);
    a.cfg.adam.beta1 = from_file.adam.beta1;
    a.cfg.adam.beta2 = from_file.adam.beta2;
    a.cfg.adam.eps = from_file.adam.eps;
  }
  a.cfg.validate();
  PretrainPaths paths;
  paths.bank_dir = a.banks;
  paths.checkpoint = a.out;
  if (!a.log_csv.empty()) paths.loss_csv = a.log_csv;
  if (!a.report.empty()) paths.report = a.report;
  if (!a.resume.empty()) paths.resume = a.resume;
  const auto report = pretrain(a.cfg, paths, [&](std::size_t epoch, double loss) {
    if (a.log_every > 0 && (epoch % a.log_every == 0 || epoch == a.cfg.epochs))
      std::fprintf(stderr, "epoch %zu/%zu  loss %.5f\n", epoch, a.cfg.epochs, loss);
  });
  std::printf("checkpoint %s  epochs %zu  final loss %.5f\n", a.out.c_str(), report.at("epochs").get<std::size_t>(),
              report.at("final_loss").get<double>());
  return 0;
}

int run_embed(EmbedArgs a) {
  EmbedOptions opts;
  opts.views = a.views;
  opts.seed = a.seed;
  opts.average_mil = a.avgmil;
  opts.threads = resolve_threads(a.threads);
  ModelFactory factory;
  if (!a.avgmil) {
    nlohmann::json header;
    load_model<double>(a.checkpoint, &header);
    const auto train = header.value("train", nlohmann::json::object());
    const std::size_t trained_tiles = train.value("tiles", std::size_t{5});
    opts.downsample = train.value("downsample", kDefaultDownsample);
    opts.tiles = a.tiles > 0 ? a.tiles : trained_tiles;
    if (opts.tiles != trained_tiles)
      std::fprintf(stderr,
                   "WARNING: embedding with %zu tiles per view but the checkpoint was trained with %zu; "
                   "representations are only reliable with the training value\n",
                   opts.tiles, trained_tiles);
    const fs::path ckpt = a.checkpoint;
    factory = [ckpt] { return load_model<double>(ckpt); };
  }
  const auto result = embed_dataset(a.banks, factory, opts);
  save_embeddings(result.set, a.out);
  if (!a.csv.empty()) io::write_text(a.csv, embeddings_csv(result.set));
  std::printf("embedded %zu slides (%s, dim %zu) into %s\n", result.set.size(),
              a.avgmil ? "average" : "pooling network", result.set.dim, a.out.c_str());
  for (const auto& f : result.failures) std::fprintf(stderr, "FAILED %s: %s\n", f.slide.c_str(), f.message.c_str());
  return result.failures.empty() ? 0 : kExitRuntime;
}

int run_probe(const ProbeArgs& a) {
  ProbeOptions opts;
  opts.splits = a.splits;
  opts.test_fraction = a.test_fraction;
  opts.seed = a.seed;
  opts.threads = resolve_threads(a.threads);
  opts.logistic.l2 = a.l2;
  opts.logistic.normalization =
      a.normalization == "standard-scale" ? Normalization::StandardScale : Normalization::L2Unit;
  std::vector<Budget> budgets;
  for (const auto& b : a.budgets) budgets.push_back(Budget::parse(b));
  const auto set = join_labels(load_embeddings(a.embeddings), read_labels(a.labels));
  std::vector<ProbeReport> reports;
  for (const auto& b : budgets) {
    opts.budget = b;
    reports.push_back(bootstrap_eval(set, opts, a.task));
  }
  io::write_text(a.out, report_csv(reports));
  std::fputs(report_table(reports).c_str(), stdout);
  return 0;
}

int run_gradcheck(std::size_t instances, std::uint64_t seed) {
  bool ok = true;
  std::printf("%-20s %10s %14s\n", "layer", "instances", "max_rel_error");
  for (const auto& r : gradcheck::run_all(instances, seed)) {
    const bool pass = r.max_rel_error < gradcheck::kTolerance;
    ok = ok && pass;
    std::printf("%-20s %10zu %14.3e  %s\n", r.name.c_str(), r.instances, r.max_rel_error, pass ? "ok" : "FAIL");
  }
  return ok ? 0 : kExitRuntime;
}

int run_selftest(std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : selftest::run_all(seed)) {
    ok = ok && c.passed;
    std::printf("%s  %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.empty() ? "" : "  -- ",
                c.detail.c_str());
  }
  return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised slide representations from precomputed tile embeddings"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", "gigassl 1.0");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic corpus of embedding banks");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--slides", gen.cfg.n_slides, "Number of slides");
  g->add_option("--classes", gen.cfg.n_classes, "Number of classes");
  g->add_option("--tiles", gen.cfg.n_tiles, "Tiles per augmentation slice (n)");
  g->add_option("--augs", gen.cfg.n_augs, "Augmentation slices per slide (K, slice 0 = identity)");
  g->add_option("--feat-dim", gen.cfg.feat_dim, "Tile embedding dimension F");
  g->add_option("--content-dims", gen.cfg.content_dims, "Dims carrying prototypes; the rest are style dims");
  g->add_option("--grid-extent", gen.cfg.grid_extent, "Side of the tissue grid in pixels (256 px per tile)");
  g->add_option("--prototypes", gen.cfg.n_prototypes, "Number of tile prototypes");
  g->add_option("--nuisance", gen.cfg.nuisance_strength, "Per-slide nuisance norm (sigma_slide)");
  g->add_option("--aug-noise", gen.cfg.aug_noise, "Noise added by tile augmentations (sigma_aug)");
  g->add_option("--tile-noise", gen.cfg.tile_noise, "Per-tile feature noise");
  g->add_option("--aug-angle", gen.cfg.aug_angle, "Max style-plane rotation of an augmentation (radians)");
  g->add_option("--seed", gen.cfg.seed, "Random seed");
  g->add_option("--threads", gen.threads, "Worker threads (0: GIGASSL_THREADS or all cores)");

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Contrastive pretraining of the pooling network");
  p->add_option("--banks", pre.banks, "Directory of .gsb banks");
  p->add_option("--out", pre.out, "Checkpoint to write");
  p->add_option("--config", pre.config_file, "key = value config file; flags override it");
  p->add_option("--epochs", pre.cfg.epochs, "Training epochs");
  p->add_option("--tiles", pre.cfg.tiles, "Tiles per view (T)");
  p->add_option("--batch", pre.cfg.batch_size, "Slides per batch (B)");
  p->add_option("--tau", pre.cfg.temperature, "NT-Xent temperature");
  p->add_flag("--no-shared-aug", pre.no_shared_aug,
              "Draw an independent tile augmentation per tile instead of one per view");
  p->add_flag("--no-slide-aug", pre.no_slide_aug, "Disable flips, rotations and scaling of views");
  p->add_option("--seed", pre.cfg.seed, "Random seed");
  p->add_option("--lr", pre.cfg.adam.lr, "Adam learning rate");
  p->add_option("--weight-decay", pre.cfg.adam.weight_decay, "L2 weight decay");
  p->add_option("--downsample", pre.cfg.downsample, "Pixel-to-lattice downsampling factor d");
  p->add_option("--channels", pre.cfg.block_channels, "Residual block widths")->delimiter(',');
  p->add_option("--out-dim", pre.cfg.out_dim, "Slide representation size");
  p->add_option("--proj-dim", pre.cfg.proj_dim, "Projection head output size");
  p->add_option("--kernel", pre.cfg.kernel_size, "Convolution kernel size (odd)");
  p->add_option("--resume", pre.resume, "Continue from this checkpoint");
  p->add_option("--log", pre.log_csv, "Per-epoch loss CSV (default: <out>.loss.csv)");
  p->add_option("--report", pre.report, "JSON report (default: <out>.report.json)");
  p->add_option("--log-every", pre.log_every, "Print progress every N epochs (0: never)");

  EmbedArgs emb;
  auto* e = app.add_subcommand("embed", "Extract one embedding per slide");
  e->add_option("--banks", emb.banks, "Directory of .gsb banks");
  e->add_option("--checkpoint", emb.checkpoint, "Pretrained checkpoint");
  e->add_option("--out", emb.out, "Embeddings file (.gse)");
  e->add_option("--csv", emb.csv, "Also write a CSV export");
  e->add_option("--views", emb.views, "Views averaged per slide (R)");
  e->add_option("--tiles", emb.tiles, "Tiles per view (0: the checkpoint's training value, 5 by default)");
  e->add_option("--seed", emb.seed, "Random seed");
  e->add_flag("--avgmil", emb.avgmil, "Average tile embeddings instead (baseline; no checkpoint needed)");
  e->add_option("--threads", emb.threads, "Worker threads (0: GIGASSL_THREADS or all cores)");

  ProbeArgs pr;
  auto* q = app.add_subcommand("probe", "Linear probe with bootstrapped stratified splits");
  q->add_option("--embeddings", pr.embeddings, "Embeddings file (.gse)");
  q->add_option("--labels", pr.labels, "CSV slide_id,label");
  q->add_option("--out", pr.out, "Report CSV");
  q->add_option("--budget", pr.budgets, "Training label budgets: all, a fraction or a count (repeatable)");
  q->add_option("--splits", pr.splits, "Number of bootstrapped splits");
  q->add_option("--test-fraction", pr.test_fraction, "Held-out fraction per class");
  q->add_option("--l2", pr.l2, "L2 penalty on probe weights");
  q->add_option("--normalization", pr.normalization, "Feature normalization")
      ->check(CLI::IsMember({"l2-unit", "standard-scale"}));
  q->add_option("--task", pr.task, "Task name written in the report");
  q->add_option("--seed", pr.seed, "Random seed");
  q->add_option("--threads", pr.threads, "Worker threads (0: GIGASSL_THREADS or all cores)");

  std::size_t gc_instances = 20;
  std::uint64_t gc_seed = 1234;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable layer");
  gc->add_option("--instances", gc_instances, "Random instances per layer");
  gc->add_option("--seed", gc_seed, "Random seed");

  std::uint64_t st_seed = 7;
  auto* st = app.add_subcommand("selftest", "Run the built-in property checks");
  st->add_option("--seed", st_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForVersion& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitValidation;
  }

  try {
    if (*g) return run_gen(gen);
    if (*p) return run_pretrain(pre, *p);
    if (*e) return run_embed(emb);
    if (*q) return run_probe(pr);
    if (*gc) return run_gradcheck(gc_instances, gc_seed);
    if (*st) return run_selftest(st_seed);
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return is_validation_error(err.kind()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitRuntime;
  }
  return kExitValidation;
}
