#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/inference.hpp"
#include "gigassl/random.hpp"

namespace gigassl {

/// Rows of embeddings with an integer class each. Classes are remapped to
/// 0..C-1 in increasing order of the original label.
struct LabeledSet {
  std::size_t dim = 0;
  std::vector<double> x;  // [N][dim]
  std::vector<int> y;     // 0..C-1
  std::vector<std::string> ids;
  std::vector<int> class_labels;  // original label of each class index

  std::size_t size() const noexcept { return y.size(); }
  std::size_t n_classes() const noexcept { return class_labels.size(); }
  const double* row(std::size_t i) const { return x.data() + i * dim; }

  void validate() const {
    if (x.size() != y.size() * dim || ids.size() != y.size()) throw DimensionMismatch("labeled set rows misaligned");
    if (n_classes() < 2) throw DegenerateLabels("labeled set has fewer than 2 classes");
  }
};

inline LabeledSet make_labeled_set(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
                                   std::vector<std::string> ids = {}) {
  if (rows.size() != labels.size()) throw DimensionMismatch("one label per row expected");
  LabeledSet s;
  s.dim = rows.empty() ? 0 : rows.front().size();
  s.class_labels = labels;
  std::sort(s.class_labels.begin(), s.class_labels.end());
  s.class_labels.erase(std::unique(s.class_labels.begin(), s.class_labels.end()), s.class_labels.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != s.dim) throw DimensionMismatch("rows differ in dimension");
    s.x.insert(s.x.end(), rows[i].begin(), rows[i].end());
    s.y.push_back(static_cast<int>(std::lower_bound(s.class_labels.begin(), s.class_labels.end(), labels[i]) -
                                   s.class_labels.begin()));
  }
  if (ids.empty())
    for (std::size_t i = 0; i < rows.size(); ++i) ids.push_back(std::to_string(i));
  s.ids = std::move(ids);
  s.validate();
  return s;
}

// Joins an embeddings file with a label table; every embedded slide needs a label.
inline LabeledSet join_labels(const EmbeddingSet& emb, const std::map<std::string, int>& labels) {
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    auto it = labels.find(emb.ids[i]);
    if (it == labels.end()) throw InvalidArgument("slide '" + emb.ids[i] + "' has no label");
    const auto r = emb.row(i);
    rows.emplace_back(r.begin(), r.end());
    y.push_back(it->second);
  }
  return make_labeled_set(rows, y, emb.ids);
}

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

/// Mann-Whitney AUC: probability that a positive outscores a negative, ties
/// counting one half. Computed from average ranks.
inline double auc(const std::vector<double>& scores, const std::vector<int>& positive) {
  if (scores.size() != positive.size()) throw DimensionMismatch("auc: one label per score expected");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateLabels("auc needs both positive and negative samples");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(n_neg));
}

// Binary: AUC of the class-1 score. Otherwise the unweighted mean of the
// one-vs-rest AUCs. `probs` is [N][C].
inline double multiclass_auc(const std::vector<double>& probs, const std::vector<int>& y, std::size_t n_classes) {
  const std::size_t n = y.size();
  if (probs.size() != n * n_classes) throw DimensionMismatch("auc: score matrix shape mismatch");
  auto one_vs_rest = [&](std::size_t c) {
    std::vector<double> s(n);
    std::vector<int> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = probs[i * n_classes + c];
      pos[i] = y[i] == static_cast<int>(c);
    }
    return auc(s, pos);
  };
  if (n_classes == 2) return one_vs_rest(1);
  double total = 0;
  for (std::size_t c = 0; c < n_classes; ++c) total += one_vs_rest(c);
  return total / static_cast<double>(n_classes);
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

enum class Normalization { L2Unit, StandardScale, None };

inline const char* to_string(Normalization n) {
  switch (n) {
    case Normalization::L2Unit: return "l2-unit";
    case Normalization::StandardScale: return "standard-scale";
    default: return "none";
  }
}

struct Normalizer {
  Normalization kind = Normalization::None;
  std::vector<double> mean, scale;  // standard-scale only, fitted on train rows

  static Normalizer fit(const std::vector<double>& x, std::size_t dim, Normalization kind) {
    Normalizer nz;
    nz.kind = kind;
    if (kind != Normalization::StandardScale) return nz;
    const std::size_t n = x.size() / dim;
    nz.mean.assign(dim, 0.0);
    nz.scale.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < dim; ++d) nz.mean[d] += x[i * dim + d] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < dim; ++d) {
        const double c = x[i * dim + d] - nz.mean[d];
        nz.scale[d] += c * c / static_cast<double>(n);
      }
    for (auto& s : nz.scale) s = s > 0 ? std::sqrt(s) : 1.0;
    return nz;
  }

  std::vector<double> apply(std::vector<double> x, std::size_t dim) const {
    const std::size_t n = x.size() / dim;
    for (std::size_t i = 0; i < n; ++i) {
      double* r = x.data() + i * dim;
      if (kind == Normalization::StandardScale) {
        for (std::size_t d = 0; d < dim; ++d) r[d] = (r[d] - mean[d]) / scale[d];
      } else if (kind == Normalization::L2Unit) {
        double sq = 0;
        for (std::size_t d = 0; d < dim; ++d) sq += r[d] * r[d];
        if (sq > 0)
          for (std::size_t d = 0; d < dim; ++d) r[d] /= std::sqrt(sq);
      }
    }
    return x;
  }
};

struct LogisticOptions {
  double l2 = 1e-3;
  Normalization normalization = Normalization::L2Unit;
  double tolerance = 1e-6;  // on the gradient norm
  std::size_t max_iter = 20000;
};

/// Multinomial logistic regression. Parameters are packed as W [C][D] then
/// b [C]; only W is penalised.
struct LogisticModel {
  std::size_t dim = 0, n_classes = 0;
  std::vector<double> params;
  Normalizer normalizer;
  double loss = 0;
  double grad_norm = 0;
  std::size_t iterations = 0;

  // Class probabilities [N][C] for raw (un-normalised) rows.
  std::vector<double> predict_proba(const std::vector<double>& raw) const {
    const auto x = normalizer.apply(raw, dim);
    const std::size_t n = x.size() / dim;
    std::vector<double> out(n * n_classes);
    std::vector<double> logit(n_classes);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -INFINITY;
      for (std::size_t c = 0; c < n_classes; ++c) {
        double z = params[n_classes * dim + c];
        for (std::size_t d = 0; d < dim; ++d) z += params[c * dim + d] * x[i * dim + d];
        logit[c] = z;
        mx = std::max(mx, z);
      }
      double sum = 0;
      for (std::size_t c = 0; c < n_classes; ++c) sum += (out[i * n_classes + c] = std::exp(logit[c] - mx));
      for (std::size_t c = 0; c < n_classes; ++c) out[i * n_classes + c] /= sum;
    }
    return out;
  }
};

namespace probe_detail {

// Mean cross entropy + l2/2 ||W||^2 and its gradient.
inline double objective(const std::vector<double>& x, const std::vector<int>& y, std::size_t dim, std::size_t C,
                        double l2, const std::vector<double>& p, std::vector<double>* grad) {
  const std::size_t n = y.size();
  double loss = 0;
  if (grad) grad->assign(p.size(), 0.0);
  std::vector<double> z(C);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = x.data() + i * dim;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < C; ++c) {
      double v = p[C * dim + c];
      for (std::size_t d = 0; d < dim; ++d) v += p[c * dim + d] * r[d];
      z[c] = v;
      mx = std::max(mx, v);
    }
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
    const double lse = mx + std::log(sum);
    loss += lse - z[y[i]];
    if (grad)
      for (std::size_t c = 0; c < C; ++c) {
        const double g = (std::exp(z[c] - lse) - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) / static_cast<double>(n);
        for (std::size_t d = 0; d < dim; ++d) (*grad)[c * dim + d] += g * r[d];
        (*grad)[C * dim + c] += g;
      }
  }
  loss /= static_cast<double>(n);
  for (std::size_t k = 0; k < C * dim; ++k) {
    loss += 0.5 * l2 * p[k] * p[k];
    if (grad) (*grad)[k] += l2 * p[k];
  }
  return loss;
}

inline double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace probe_detail

/// Full-batch gradient descent with Barzilai-Borwein steps safeguarded by
/// Armijo backtracking, run until the gradient norm drops below tolerance.
inline LogisticModel fit_logistic(const LabeledSet& train, const LogisticOptions& opts = {},
                                  std::optional<std::vector<double>> init = std::nullopt) {
  train.validate();
  std::vector<int> seen(train.n_classes(), 0);
  for (int c : train.y) seen[c] = 1;
  if (std::count(seen.begin(), seen.end(), 1) < 2) throw DegenerateLabels("training rows cover a single class");
  if (!(opts.l2 >= 0)) throw InvalidArgument("l2 must be >= 0");

  LogisticModel m;
  m.dim = train.dim;
  m.n_classes = train.n_classes();
  m.normalizer = Normalizer::fit(train.x, train.dim, opts.normalization);
  const auto x = m.normalizer.apply(train.x, train.dim);
  const std::size_t P = m.n_classes * (m.dim + 1);
  m.params = init.value_or(std::vector<double>(P, 0.0));
  if (m.params.size() != P) throw DimensionMismatch("logistic init has the wrong size");

  using probe_detail::norm2;
  using probe_detail::objective;
  std::vector<double> g, g_new, p_new(P);
  double f = objective(x, train.y, m.dim, m.n_classes, opts.l2, m.params, &g);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < opts.max_iter && norm2(g) >= opts.tolerance; ++it) {
    const double gg = norm2(g) * norm2(g);
    double f_new = 0;
    for (int tries = 0;; ++tries) {
      for (std::size_t k = 0; k < P; ++k) p_new[k] = m.params[k] - step * g[k];
      f_new = objective(x, train.y, m.dim, m.n_classes, opts.l2, p_new, nullptr);
      if (f_new <= f - 1e-4 * step * gg || tries > 60) break;
      step *= 0.5;
    }
    objective(x, train.y, m.dim, m.n_classes, opts.l2, p_new, &g_new);
    double sy = 0, yy = 0;
    for (std::size_t k = 0; k < P; ++k) {
      const double s = p_new[k] - m.params[k], yk = g_new[k] - g[k];
      sy += s * yk;
      yy += yk * yk;
    }
    m.params.swap(p_new);
    g.swap(g_new);
    f = f_new;
    // BB2 step; fall back to a modest step when curvature is not positive.
    step = (sy > 0 && yy > 0) ? sy / yy : 1.0;
  }
  m.loss = f;
  m.grad_norm = norm2(g);
  m.iterations = it;
  return m;
}

// ---------------------------------------------------------------------------
// Bootstrapped evaluation
// ---------------------------------------------------------------------------

struct Budget {
  enum class Kind { All, Fraction, Count } kind = Kind::All;
  double fraction = 1.0;
  std::size_t count = 0;

  static Budget all() { return {}; }
  static Budget of_fraction(double f) { return {Kind::Fraction, f, 0}; }
  static Budget of_count(std::size_t n) { return {Kind::Count, 1.0, n}; }

  // "all", a fraction in (0, 1] written with a decimal point, or a count.
  static Budget parse(const std::string& text) {
    if (text == "all") return all();
    try {
      std::size_t used = 0;
      if (text.find_first_of(".eE") != std::string::npos) {
        const double f = std::stod(text, &used);
        if (used == text.size() && f > 0 && f <= 1) return of_fraction(f);
      } else {
        const long long n = std::stoll(text, &used);
        if (used == text.size() && n > 0) return of_count(static_cast<std::size_t>(n));
      }
    } catch (const std::exception&) {
    }
    throw InvalidArgument("budget must be 'all', a fraction in (0, 1] or a positive count, got '" + text + "'");
  }

  std::string label() const {
    if (kind == Kind::All) return "all";
    if (kind == Kind::Count) return std::to_string(count);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", fraction);
    return buf;
  }
};

struct ProbeOptions {
  std::size_t splits = 10;
  double test_fraction = 0.2;
  Budget budget{};
  std::uint64_t seed = 0;
  LogisticOptions logistic{};
  std::size_t threads = 1;
};

struct SplitResult {
  std::size_t split = 0;
  double auc = 0;
  std::vector<std::size_t> train;  // row indices, sorted
  std::vector<std::size_t> test;   // row indices, sorted
};

struct ProbeReport {
  std::string task;
  std::string budget;
  std::vector<SplitResult> runs;
  double mean = 0;
  double std = 0;  // sample standard deviation over splits
};

// Per-class sizes that sum to `total`, proportional to `sizes`, by largest
// remainder (ties to the lower class index).
inline std::vector<std::size_t> allocate_stratified(const std::vector<std::size_t>& sizes, std::size_t total) {
  const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> out(sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const double exact = static_cast<double>(total) * static_cast<double>(sizes[c]) / static_cast<double>(n);
    out[c] = static_cast<std::size_t>(std::floor(exact));
    used += out[c];
    rem.emplace_back(exact - static_cast<double>(out[c]), c);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; used < total; ++r, ++used) ++out[rem[r % rem.size()].second];
  return out;
}

/// Stratified train/test splits; the training part is cut down to the budget
/// with the class ratio kept, a probe is fitted and scored on the test part.
inline ProbeReport bootstrap_eval(const LabeledSet& set, const ProbeOptions& opts, const std::string& task = "task") {
  set.validate();
  if (opts.splits < 1) throw InvalidArgument("splits must be >= 1");
  if (!(opts.test_fraction > 0 && opts.test_fraction < 1)) throw InvalidArgument("test fraction must lie in (0, 1)");
  const std::size_t C = set.n_classes();
  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i = 0; i < set.size(); ++i) by_class[set.y[i]].push_back(i);
  for (std::size_t c = 0; c < C; ++c)
    if (by_class[c].size() < 2)
      throw BudgetTooSmall("class " + std::to_string(set.class_labels[c]) +
                           " has fewer than 2 samples; a stratified split is impossible");

  ProbeReport report;
  report.task = task;
  report.budget = opts.budget.label();
  report.runs.resize(opts.splits);
  parallel_for(opts.splits, opts.threads, [&](std::size_t s) {
    Rng rng = derive_rng(opts.seed, {0xb007, s});
    std::vector<std::vector<std::size_t>> train_c(C);
    std::vector<std::size_t> test;
    for (std::size_t c = 0; c < C; ++c) {
      const auto& idx = by_class[c];
      const auto perm = sample_without_replacement(idx.size(), idx.size(), rng);
      const auto n_test = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(opts.test_fraction * static_cast<double>(idx.size()))), 1,
          idx.size() - 1);
      for (std::size_t k = 0; k < idx.size(); ++k) (k < n_test ? test : train_c[c]).push_back(idx[perm[k]]);
    }
    std::vector<std::size_t> sizes(C);
    std::size_t n_train = 0;
    for (std::size_t c = 0; c < C; ++c) n_train += (sizes[c] = train_c[c].size());
    std::size_t target = n_train;
    if (opts.budget.kind == Budget::Kind::Fraction)
      target = static_cast<std::size_t>(std::llround(opts.budget.fraction * static_cast<double>(n_train)));
    else if (opts.budget.kind == Budget::Kind::Count)
      target = opts.budget.count;
    if (target > n_train)
      throw BudgetTooSmall("budget " + opts.budget.label() + " exceeds the " + std::to_string(n_train) +
                           " training slides of a split");
    std::vector<std::size_t> train;
    if (target == n_train) {
      for (const auto& t : train_c) train.insert(train.end(), t.begin(), t.end());
    } else {
      const auto quota = allocate_stratified(sizes, target);
      for (std::size_t c = 0; c < C; ++c) {
        if (quota[c] < 1)
          throw BudgetTooSmall("budget " + opts.budget.label() + " leaves class " +
                               std::to_string(set.class_labels[c]) + " without training samples");
        const auto pick = sample_without_replacement(train_c[c].size(), quota[c], rng);
        for (auto p : pick) train.push_back(train_c[c][p]);
      }
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());

    LabeledSet tr;
    tr.dim = set.dim;
    tr.class_labels = set.class_labels;
    for (auto i : train) {
      tr.x.insert(tr.x.end(), set.row(i), set.row(i) + set.dim);
      tr.y.push_back(set.y[i]);
      tr.ids.push_back(set.ids[i]);
    }
    const LogisticModel model = fit_logistic(tr, opts.logistic);
    std::vector<double> xt;
    std::vector<int> yt;
    for (auto i : test) {
      xt.insert(xt.end(), set.row(i), set.row(i) + set.dim);
      yt.push_back(set.y[i]);
    }
    report.runs[s] = {s, multiclass_auc(model.predict_proba(xt), yt, C), std::move(train), std::move(test)};
  });

  double sum = 0;
  for (const auto& r : report.runs) sum += r.auc;
  report.mean = sum / static_cast<double>(report.runs.size());
  double sq = 0;
  for (const auto& r : report.runs) sq += (r.auc - report.mean) * (r.auc - report.mean);
  report.std = report.runs.size() > 1 ? std::sqrt(sq / static_cast<double>(report.runs.size() - 1)) : 0.0;
  return report;
}

// "task,budget,split,auc" rows followed by mean and std rows.
inline std::string report_csv(const std::vector<ProbeReport>& reports) {
  std::string out = "task,budget,split,auc\n";
  char buf[256];
  for (const auto& r : reports) {
    for (const auto& run : r.runs) {
      std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.6f\n", r.task.c_str(), r.budget.c_str(), run.split, run.auc);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "%s,%s,mean,%.6f\n%s,%s,std,%.6f\n", r.task.c_str(), r.budget.c_str(), r.mean,
                  r.task.c_str(), r.budget.c_str(), r.std);
    out += buf;
  }
  return out;
}

inline std::string report_table(const std::vector<ProbeReport>& reports) {
  std::size_t task_w = 4, budget_w = 6;
  for (const auto& r : reports) {
    task_w = std::max(task_w, r.task.size());
    budget_w = std::max(budget_w, r.budget.size());
  }
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-*s  %-*s  %6s  %8s  %8s\n", int(task_w), "task", int(budget_w), "budget", "splits",
                "mean_auc", "std");
  out += buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %-*s  %6zu  %8.4f  %8.4f\n", int(task_w), r.task.c_str(), int(budget_w),
                  r.budget.c_str(), r.runs.size(), r.mean, r.std);
    out += buf;
  }
  return out;
}

}  // namespace gigassl
