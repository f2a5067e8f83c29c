#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "essmm/csr.hpp"
#include "essmm/error.hpp"

namespace essmm {

enum class GraphKind { ErdosRenyi, PowerLaw };

inline GraphKind parse_graph_kind(std::string_view s) {
  if (s == "erdos_renyi" || s == "er") return GraphKind::ErdosRenyi;
  if (s == "power_law" || s == "powerlaw") return GraphKind::PowerLaw;
  throw Error(ErrorKind::InvalidArgument, "unknown graph kind '" + std::string(s) + "'");
}

// Tail exponent of the power-law out-degree distribution.
inline constexpr double kPowerLawExponent = 2.5;

namespace detail {

// Row i of a directed graph without self-loops: `degree` distinct targets
// drawn uniformly from the other n-1 nodes (Floyd's algorithm), sorted.
inline void sample_targets(index_t self, index_t n, index_t degree, std::mt19937_64& rng,
                           std::vector<index_t>& out) {
  out.clear();
  const index_t pool = n - 1;
  if (degree >= pool) {
    for (index_t v = 0; v < n; ++v)
      if (v != self) out.push_back(v);
    return;
  }
  std::unordered_set<index_t> chosen;
  chosen.reserve(static_cast<std::size_t>(degree) * 2);
  for (index_t j = pool - degree; j < pool; ++j) {
    const index_t t = std::uniform_int_distribution<index_t>(0, j)(rng);
    chosen.insert(chosen.contains(t) ? j : t);
  }
  out.assign(chosen.begin(), chosen.end());
  for (auto& v : out)
    if (v >= self) ++v;  // skip the diagonal
  std::sort(out.begin(), out.end());
}

// Pareto weights rescaled so that the capped integer degrees sum to about
// n * avg_degree. Capped mass is re-spread over uncapped nodes.
inline std::vector<index_t> power_law_degrees(index_t n, double avg_degree, std::mt19937_64& rng) {
  std::vector<double> w(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& x : w) x = std::pow(1.0 - u(rng), -1.0 / (kPowerLawExponent - 1.0));

  const double cap = static_cast<double>(n - 1);
  const double target = avg_degree * n;
  std::vector<double> d(w.size());
  double scale = target / std::accumulate(w.begin(), w.end(), 0.0);
  for (int iter = 0; iter < 50; ++iter) {
    double capped = 0.0, free_w = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      d[i] = std::min(cap, w[i] * scale);
      if (d[i] >= cap) capped += cap;
      else free_w += w[i];
    }
    if (free_w <= 0.0) break;
    const double next = (target - capped) / free_w;
    if (std::abs(next - scale) <= 1e-12 * scale) break;
    scale = next;
  }

  // Carry the rounding remainder so the integer total tracks the real one.
  std::vector<index_t> out(w.size());
  double carry = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double want = d[i] + carry;
    const double k = std::clamp(std::floor(want + 0.5), 0.0, cap);
    carry = want - k;
    out[i] = static_cast<index_t>(k);
  }
  return out;
}

}  // namespace detail

// Directed synthetic graph with unit values and no self-loops. The same
// (kind, n_nodes, avg_degree, seed) always yields the same matrix.
inline CsrMatrix gen_synthetic(GraphKind kind, index_t n_nodes, double avg_degree,
                               std::uint64_t seed) {
  if (n_nodes < 1) throw Error(ErrorKind::InvalidArgument, "n_nodes must be >= 1");
  if (!(avg_degree >= 0.0)) throw Error(ErrorKind::InvalidArgument, "avg_degree must be >= 0");
  if (avg_degree >= static_cast<double>(n_nodes)) {
    throw Error(ErrorKind::InvalidArgument,
                "average degree " + std::to_string(avg_degree) + " infeasible for " +
                    std::to_string(n_nodes) + " nodes");
  }

  std::mt19937_64 rng(seed);
  std::vector<offset_t> row_ptr(static_cast<std::size_t>(n_nodes) + 1, 0);
  std::vector<index_t> col_ind;
  std::vector<index_t> row;

  if (kind == GraphKind::ErdosRenyi) {
    // G(n, p) with geometric skips over the n-1 off-diagonal candidates.
    const double p = n_nodes > 1 ? avg_degree / static_cast<double>(n_nodes - 1) : 0.0;
    col_ind.reserve(static_cast<std::size_t>(avg_degree * n_nodes * 1.1) + 16);
    for (index_t i = 0; i < n_nodes; ++i) {
      if (p >= 1.0) {
        for (index_t v = 0; v < n_nodes; ++v)
          if (v != i) col_ind.push_back(v);
      } else if (p > 0.0) {
        std::geometric_distribution<std::int64_t> skip(p);
        std::int64_t pos = skip(rng);
        while (pos < n_nodes - 1) {
          const auto v = static_cast<index_t>(pos);
          col_ind.push_back(v >= i ? v + 1 : v);
          pos += 1 + skip(rng);
        }
      }
      row_ptr[i + 1] = static_cast<offset_t>(col_ind.size());
    }
  } else {
    const auto degrees = detail::power_law_degrees(n_nodes, avg_degree, rng);
    col_ind.reserve(static_cast<std::size_t>(avg_degree * n_nodes) + 16);
    for (index_t i = 0; i < n_nodes; ++i) {
      detail::sample_targets(i, n_nodes, degrees[i], rng, row);
      col_ind.insert(col_ind.end(), row.begin(), row.end());
      row_ptr[i + 1] = static_cast<offset_t>(col_ind.size());
    }
  }
  std::vector<float> values(col_ind.size(), 1.0f);
  return CsrMatrix::from_parts_unchecked(n_nodes, n_nodes, std::move(row_ptr), std::move(col_ind),
                                         std::move(values));
}

}  // namespace essmm
