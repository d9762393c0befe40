#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gigassl/error.hpp"
#include "gigassl/numcore/linear.hpp"

namespace gigassl {

template <typename T>
struct NtXentResult {
  double loss = 0.0;
  std::vector<double> per_view;  // l_i for every view
  Matrix<T> grad;                // d loss / d projection
};

// Views (2b, 2b+1) form the positive pair of slide b.
inline std::vector<std::size_t> adjacent_pairing(std::size_t n_slides) {
  std::vector<std::size_t> pair(2 * n_slides);
  for (std::size_t b = 0; b < n_slides; ++b) {
    pair[2 * b] = 2 * b + 1;
    pair[2 * b + 1] = 2 * b;
  }
  return pair;
}

/// Normalized-temperature cross entropy over cosine similarities.
///
/// For view i with positive partner p(i):
///   l_i = -log( exp(sim(i,p(i))/tau) / sum_{x != i} exp(sim(i,x)/tau) )
/// and the loss is the mean of l_i over all views. The pairing must be an
/// involution without fixed points.
template <typename T>
NtXentResult<T> nt_xent(const Matrix<T>& projections, const std::vector<std::size_t>& pairing, double tau) {
  const std::size_t n = projections.rows;
  const std::size_t dim = projections.cols;
  if (!(tau > 0)) throw InvalidArgument("temperature must be > 0");
  if (n < 2 || n % 2 != 0) throw InvalidArgument("nt_xent needs an even number (>= 2) of views");
  if (pairing.size() != n) throw DimensionMismatch("pairing size does not match the number of views");
  for (std::size_t i = 0; i < n; ++i)
    if (pairing[i] >= n || pairing[i] == i || pairing[pairing[i]] != i)
      throw InvalidArgument("pairing must be a fixed-point-free involution");

  std::vector<double> u(n * dim);
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < dim; ++c) sq += static_cast<double>(projections(i, c)) * projections(i, c);
    norm[i] = std::sqrt(sq);
    if (!(norm[i] > 0) || !std::isfinite(norm[i]))
      throw DegenerateProjection("projection " + std::to_string(i) + " has zero or non-finite norm");
    for (std::size_t c = 0; c < dim; ++c) u[i * dim + c] = projections(i, c) / norm[i];
  }

  // logits[i][x] = cos(i, x) / tau
  std::vector<double> logits(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t x = i; x < n; ++x) {
      double dot = 0.0;
      for (std::size_t c = 0; c < dim; ++c) dot += u[i * dim + c] * u[x * dim + c];
      logits[i * n + x] = logits[x * n + i] = dot / tau;
    }

  NtXentResult<T> res;
  res.per_view.resize(n);
  std::vector<double> prob(n * n, 0.0);  // softmax over x != i
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < n; ++x)
      if (x != i) mx = std::max(mx, logits[i * n + x]);
    double sum = 0.0;
    for (std::size_t x = 0; x < n; ++x)
      if (x != i) sum += std::exp(logits[i * n + x] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t x = 0; x < n; ++x)
      if (x != i) prob[i * n + x] = std::exp(logits[i * n + x] - lse);
    res.per_view[i] = lse - logits[i * n + pairing[i]];
    total += res.per_view[i];
  }
  res.loss = total / static_cast<double>(n);

  // dL/du_i = 1/(n tau) * [ sum_{x != i} (P_ix + P_xi) u_x - u_p(i) - sum_{j: p(j)=i} u_j ]
  std::vector<double> gu(n * dim, 0.0);
  const double scale = 1.0 / (static_cast<double>(n) * tau);
  for (std::size_t i = 0; i < n; ++i) {
    double* g = &gu[i * dim];
    for (std::size_t x = 0; x < n; ++x) {
      if (x == i) continue;
      const double w = prob[i * n + x] + prob[x * n + i];
      for (std::size_t c = 0; c < dim; ++c) g[c] += w * u[x * dim + c];
    }
    const double* up = &u[pairing[i] * dim];
    for (std::size_t c = 0; c < dim; ++c) g[c] -= 2.0 * up[c];
    for (std::size_t c = 0; c < dim; ++c) g[c] *= scale;
  }

  // Through the normalisation u = z / |z|.
  res.grad = Matrix<T>(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    double proj = 0.0;
    for (std::size_t c = 0; c < dim; ++c) proj += gu[i * dim + c] * u[i * dim + c];
    for (std::size_t c = 0; c < dim; ++c)
      res.grad(i, c) = static_cast<T>((gu[i * dim + c] - u[i * dim + c] * proj) / norm[i]);
  }
  return res;
}

}  // namespace gigassl
