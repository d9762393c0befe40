// Acceptance run: one PASS/FAIL line per criterion. Pass criterion names
// (A1 ... A9) as arguments to run a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <string>

#include "gigassl/datagen.hpp"
#include "gigassl/gradcheck.hpp"
#include "gigassl/inference.hpp"
#include "gigassl/probe.hpp"
#include "gigassl/ssl/trainer.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace gigassl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- A1 - A4

Matrix<double> features_of(const SparseMap<double>& map) {
  Matrix<double> m(map.size(), map.feat_dim);
  m.data = map.features;
  return m;
}

std::shared_ptr<const Rulebook> rulebook_for(const SparseMap<double>& map, int k) {
  return std::make_shared<const Rulebook>(build_rulebook(map, k));
}

SparseMap<double> slice_zero(const EmbeddingBank& bank) {
  std::vector<TileRecord<double>> tiles;
  for (std::size_t t = 0; t < bank.n_tiles; ++t) {
    const auto f = bank.feature(0, t);
    tiles.push_back({bank.coord(0, t)[0], bank.coord(0, t)[1], std::vector<double>(f.begin(), f.end())});
  }
  return build_sparse_map<double>(tiles, kDefaultDownsample);
}

Outcome a1_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  double worst = 0;
  std::string worst_name;
  std::size_t min_instances = SIZE_MAX;
  for (const auto& r : gradcheck::run_all(20, 1234)) {
    pass = pass && r.max_rel_error < gradcheck::kTolerance;
    min_instances = std::min(min_instances, r.instances);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  pass = pass && min_instances >= 20 && secs < 120;
  return {pass, fmt("worst rel error %.2e (%s), %zu instances per op, %.1fs", worst, worst_name.c_str(),
                    min_instances, secs)};
}

Outcome a2_dense_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> count(1, 80);
  const std::size_t window = 16, c_in = 4, c_out = 3;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto map = oracle::random_window_map(rng, count(rng), window, c_in);
    ParamStore<double> store;
    SubmConv<double> conv(store, "c", c_in, c_out, 3);
    for (auto& v : conv.weight().value.values()) v = normal(rng);
    for (auto& v : conv.bias().value.values()) v = normal(rng);
    const auto y = conv.forward(features_of(map), rulebook_for(map, 3));
    std::vector<double> grid(window * window * c_in, 0.0);
    for (std::size_t s = 0; s < map.size(); ++s)
      for (std::size_t c = 0; c < c_in; ++c) grid[(map.sites[s].j * window + map.sites[s].i) * c_in + c] = map.feature(s)[c];
    const auto dense = oracle::dense_conv(grid, window, window, c_in, conv.weight().value.values(),
                                          conv.bias().value.values(), 3, c_out);
    for (std::size_t s = 0; s < map.size(); ++s)
      for (std::size_t co = 0; co < c_out; ++co)
        worst = std::max(worst, std::abs(y(s, co) - dense[(map.sites[s].j * window + map.sites[s].i) * c_out + co]));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-6 && secs < 30, fmt("max abs error %.2e over 100 maps, %.2fs", worst, secs)};
}

Outcome a3_ntxent() {
  Matrix<double> one(2, 3);
  one.data = {0.2, -1, 3, 1, 0.5, 0};
  const double l1 = nt_xent(one, adjacent_pairing(1), 0.5).loss;
  Matrix<double> same(4, 3);
  same.data.assign(12, 0.4);
  const double l3 = nt_xent(same, adjacent_pairing(2), 0.5).loss;
  Matrix<double> ortho(4, 2);
  ortho.data = {1, 0, 1, 0, 0, 1, 0, 1};
  const double le = nt_xent(ortho, adjacent_pairing(2), 1.0).loss;
  const double e = std::numbers::e;
  const double d3 = std::abs(l3 - std::log(3.0)), de = std::abs(le - std::log((e + 2) / e));
  return {l1 == 0.0 && d3 <= 1e-9 && de <= 1e-9, fmt("B=1 %.3g, |log 3 diff| %.2e, |log((e+2)/e) diff| %.2e", l1, d3, de)};
}

GenConfig small_corpus(std::size_t slides, std::uint64_t seed) {
  GenConfig g;
  g.n_slides = slides;
  g.n_tiles = 20;
  g.n_augs = 6;
  g.feat_dim = 8;
  g.content_dims = 4;
  g.grid_extent = 5 * kTileStride;
  g.seed = seed;
  return g;
}

Outcome a4_invariances() {
  const auto g = small_corpus(6, 44);
  const auto shared = datagen_detail::shared_state(g);
  PoolingNetworkConfig net;
  net.in_channels = g.feat_dim;
  net.block_channels = {16, 16};
  net.out_dim = 12;
  GigaSslModel<double> model(net, 16);
  Rng init(5);
  model.init(init);
  bool perm_ok = true, shift_ok = true, norm_ok = true, aug_ok = true;
  double worst_shift = 0, worst_norm = 0;
  for (std::size_t s = 0; s < g.n_slides; ++s) {
    const auto bank = generate_slide(g, s, shared);
    auto permuted = bank;
    Rng shuffle(s);
    const auto perm = sample_without_replacement(bank.n_tiles, bank.n_tiles, shuffle);
    for (std::uint32_t k = 0; k < bank.n_augs; ++k)
      for (std::uint32_t t = 0; t < bank.n_tiles; ++t) {
        permuted.coord(k, t) = bank.coord(k, perm[t]);
        std::copy(bank.feature(k, perm[t]).begin(), bank.feature(k, perm[t]).end(), permuted.feature(k, t).begin());
      }
    auto shifted = bank;
    for (auto& c : shifted.coords) {
      c[0] += 37 * 224;
      c[1] += 11 * 224;
    }
    Rng r1(s), r2(s), r3(s);
    const auto e = embed_slide(bank, model, 5, 20, r1).vector;
    const auto p = embed_slide(permuted, model, 5, 20, r2).vector;
    const auto t = embed_slide(shifted, model, 5, 20, r3).vector;
    perm_ok = perm_ok && e == p;
    double n2 = 0;
    for (std::size_t c = 0; c < e.size(); ++c) {
      worst_shift = std::max(worst_shift, std::abs(e[c] - t[c]));
      n2 += e[c] * e[c];
    }
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(n2) - 1.0));

    const auto map = slice_zero(bank);
    aug_ok = aug_ok && augment_sparse_map(map, SlideAugParams::identity()) == map;
    auto quarter = SlideAugParams::identity();
    quarter.rot_quarters = 1;
    auto rot = map;
    for (int q = 0; q < 4; ++q) rot = augment_sparse_map(rot, quarter);
    auto flip = SlideAugParams::identity();
    flip.flip_x = flip.flip_y = true;
    aug_ok = aug_ok && rot == map && augment_sparse_map(augment_sparse_map(map, flip), flip) == map;
  }
  shift_ok = worst_shift <= 1e-9;
  norm_ok = worst_norm <= 1e-6;
  return {perm_ok && shift_ok && norm_ok && aug_ok,
          fmt("permutation %s, max translation diff %.2e, max |norm-1| %.2e, slide-aug identities %s",
              perm_ok ? "bit-exact" : "DIFFERS", worst_shift, worst_norm, aug_ok ? "hold" : "BROKEN")};
}

// ---------------------------------------------------------------- A5 - A8

GenConfig spatial_corpus(std::uint64_t seed, double nuisance) {
  GenConfig g;
  g.n_slides = 200;
  g.n_classes = 2;
  g.n_tiles = 20;
  g.n_augs = 50;
  g.feat_dim = 16;
  g.content_dims = 8;
  g.grid_extent = 5 * kTileStride;
  g.nuisance_strength = nuisance;
  g.seed = seed;
  return g;
}

struct Corpus {
  std::vector<EmbeddingBank> banks;
  std::vector<int> labels;
};

Corpus generate(const GenConfig& g) {
  const auto shared = datagen_detail::shared_state(g);
  Corpus c;
  for (std::size_t s = 0; s < g.n_slides; ++s) {
    int label = 0;
    c.banks.push_back(generate_slide(g, s, shared, &label));
    c.labels.push_back(label);
  }
  return c;
}

TrainConfig pretrain_config(std::uint64_t seed, bool shared_aug) {
  TrainConfig t;
  t.epochs = 200;
  t.seed = seed;
  t.shared_aug = shared_aug;
  return t;
}

std::unique_ptr<GigaSslModel<double>> train(const TrainConfig& cfg, const Corpus& corpus) {
  Trainer<float> trainer(cfg, corpus.banks);
  trainer.run();
  auto model = std::make_unique<GigaSslModel<double>>(trainer.model().network().config(), cfg.proj_dim);
  restore_store(model->store(), trainer.checkpoint());
  return model;
}

std::vector<std::vector<double>> embed_all(const Corpus& corpus, GigaSslModel<double>& model, std::size_t views,
                                           std::uint64_t seed) {
  std::vector<std::vector<double>> rows;
  for (const auto& b : corpus.banks) {
    Rng rng = slide_rng(seed, b.slide_id);
    rows.push_back(embed_slide(b, model, 5, views, rng).vector);
  }
  return rows;
}

ProbeReport probe(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                  Normalization norm = Normalization::L2Unit, Budget budget = Budget::all()) {
  ProbeOptions opts;
  opts.seed = 3;
  opts.budget = budget;
  opts.logistic.normalization = norm;
  opts.threads = default_threads();
  return bootstrap_eval(make_labeled_set(rows, labels), opts, "spatial");
}

// Shared between A5, A7 and A8.
struct SpatialRun {
  Corpus corpus;
  std::unique_ptr<GigaSslModel<double>> model;
  std::vector<std::vector<double>> giga;
  double train_secs = 0;
};

SpatialRun& spatial_run() {
  static SpatialRun run = [] {
    SpatialRun r;
    r.corpus = generate(spatial_corpus(1, 0.0));
    const auto t0 = std::chrono::steady_clock::now();
    r.model = train(pretrain_config(1, true), r.corpus);
    r.train_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.giga = embed_all(r.corpus, *r.model, kDefaultViews, 0);
    return r;
  }();
  return run;
}

Outcome a5_separation() {
  const auto t0 = std::chrono::steady_clock::now();
  auto& run = spatial_run();
  std::vector<std::vector<double>> avg;
  for (const auto& b : run.corpus.banks) avg.push_back(average_mil_embed(b));
  const double giga = probe(run.giga, run.corpus.labels).mean;
  const double mil = probe(avg, run.corpus.labels, Normalization::StandardScale).mean;
  const double marginal = verify_marginal_equality(run.corpus.banks, run.corpus.labels);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = giga >= 0.85 && mil <= 0.60 && giga - mil >= 0.2 && marginal < 3.0 && secs < 600;
  return {pass, fmt("Giga-SSL AUC %.3f, AverageMIL AUC %.3f, marginal statistic %.2f, %.0fs", giga, mil, marginal, secs)};
}

Outcome a6_shared_augmentation() {
  // Mean over three seeded corpora: on a single corpus both modes can reach
  // the ceiling.
  const std::uint64_t seeds[] = {1, 2, 3};
  double shared_sum = 0, split_sum = 0;
  std::string per_seed;
  for (std::uint64_t seed : seeds) {
    auto g = spatial_corpus(seed, 0.5);
    g.aug_angle = std::numbers::pi;
    const auto corpus = generate(g);
    double auc[2];
    for (int mode = 0; mode < 2; ++mode) {
      auto model = train(pretrain_config(seed, mode == 0), corpus);
      auc[mode] = probe(embed_all(corpus, *model, kDefaultViews, 0), corpus.labels).mean;
    }
    shared_sum += auc[0];
    split_sum += auc[1];
    per_seed += fmt(" [seed %llu: %.3f vs %.3f]", static_cast<unsigned long long>(seed), auc[0], auc[1]);
  }
  const double n = static_cast<double>(std::size(seeds));
  const double gap = (shared_sum - split_sum) / n;
  return {gap >= 0.03, fmt("shared %.3f, not shared %.3f, gap %.3f;%s", shared_sum / n, split_sum / n, gap, per_seed.c_str())};
}

Outcome a7_ensembling() {
  auto& run = spatial_run();
  const double r1 = probe(embed_all(run.corpus, *run.model, 1, 0), run.corpus.labels).mean;
  const double r50 = probe(run.giga, run.corpus.labels).mean;

  const std::size_t views[] = {1, 5, 10, 50};
  std::vector<double> spread;
  for (std::size_t R : views) {
    double total = 0;
    for (std::size_t s = 0; s < 20; ++s) {
      const auto& bank = run.corpus.banks[s * 10];
      std::vector<std::vector<double>> draws;
      for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Rng rng = slide_rng(1000 + seed, bank.slide_id);
        draws.push_back(embed_slide(bank, *run.model, 5, R, rng).vector);
      }
      std::vector<double> mean(draws[0].size(), 0.0);
      for (const auto& d : draws)
        for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += d[c] / static_cast<double>(draws.size());
      for (const auto& d : draws)
        for (std::size_t c = 0; c < mean.size(); ++c) total += (d[c] - mean[c]) * (d[c] - mean[c]);
    }
    spread.push_back(total / (20.0 * 7.0));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < spread.size(); ++i) decreasing = decreasing && spread[i] < spread[i - 1];
  return {r50 >= r1 && decreasing,
          fmt("AUC R=1 %.3f, R=50 %.3f; seed variance R=1/5/10/50: %.2e %.2e %.2e %.2e", r1, r50, spread[0], spread[1],
              spread[2], spread[3])};
}

Outcome a8_budgets() {
  auto& run = spatial_run();
  const auto set = make_labeled_set(run.giga, run.corpus.labels);
  std::vector<ProbeReport> reports;
  bool stratified = true;
  std::string summary;
  for (const char* text : {"all", "0.25", "100", "50"}) {
    const auto budget = Budget::parse(text);
    auto r = probe(run.giga, run.corpus.labels, Normalization::L2Unit, budget);
    for (const auto& split : r.runs) {
      // Training pool = everything outside the test split.
      std::vector<bool> in_test(set.size(), false);
      for (auto i : split.test) in_test[i] = true;
      std::vector<double> pool(set.n_classes(), 0.0), drawn(set.n_classes(), 0.0);
      double pool_total = 0;
      for (std::size_t i = 0; i < set.size(); ++i)
        if (!in_test[i]) {
          pool[set.y[i]] += 1;
          pool_total += 1;
        }
      for (auto i : split.train) drawn[set.y[i]] += 1;
      const double n = static_cast<double>(split.train.size());
      for (std::size_t c = 0; c < set.n_classes(); ++c)
        stratified = stratified && std::abs(drawn[c] - n * pool[c] / pool_total) <= 1.0;
      if (budget.kind == Budget::Kind::Count) stratified = stratified && split.train.size() == budget.count;
    }
    summary += fmt(" %s=%.3f", r.budget.c_str(), r.mean);
    reports.push_back(std::move(r));
  }
  TempDir dir;
  io::write_text(dir / "probe.csv", report_csv(reports));
  const auto csv = io::read_file(dir / "probe.csv");
  const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  const bool csv_ok = lines == 1 + reports.size() * (10 + 2);
  return {stratified && csv_ok,
          fmt("mean AUC%s; stratification %s; CSV %zu lines", summary.c_str(), stratified ? "exact" : "VIOLATED", lines)};
}

// ---------------------------------------------------------------- A9

void pipeline(const std::filesystem::path& root) {
  generate_corpus(small_corpus(12, 8), root / "banks", 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.block_channels = {8, 8};
  cfg.out_dim = 8;
  cfg.proj_dim = 8;
  cfg.seed = 8;
  PretrainPaths paths;
  paths.bank_dir = root / "banks";
  paths.checkpoint = root / "model.gsck";
  pretrain(cfg, paths);
  EmbedOptions eopts;
  eopts.views = 10;
  eopts.seed = 8;
  eopts.threads = 2;
  const auto result = embed_dataset(root / "banks", [&] { return load_model<double>(paths.checkpoint); }, eopts);
  save_embeddings(result.set, root / "slides.gse");
  ProbeOptions popts;
  popts.splits = 3;
  popts.seed = 8;
  const auto labels = read_labels(root / "banks" / "labels.csv");
  const auto set = join_labels(result.set, labels);
  io::write_text(root / "probe.csv", report_csv({bootstrap_eval(set, popts, "demo")}));
}

Outcome a9_determinism() {
  TempDir a, b;
  pipeline(a.path());
  pipeline(b.path());
  std::size_t compared = 0, differing = 0;
  std::set<std::string> kinds;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    ++compared;
    kinds.insert(entry.path().extension().string());
    if (!std::filesystem::exists(b / rel) || io::read_file(entry.path()) != io::read_file(b / rel)) ++differing;
  }
  const bool all_kinds = kinds.count(".gsb") && kinds.count(".gse") && kinds.count(".gsck") && kinds.count(".json") &&
                         kinds.count(".csv");
  return {differing == 0 && all_kinds, fmt("%zu files compared, %zu differ", compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria = {
      {"A1", a1_gradients},       {"A2", a2_dense_oracle},        {"A3", a3_ntxent},
      {"A4", a4_invariances},     {"A5", a5_separation},          {"A6", a6_shared_augmentation},
      {"A7", a7_ensembling},      {"A8", a8_budgets},             {"A9", a9_determinism},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
