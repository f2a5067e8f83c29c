#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "essmm/csr.hpp"
#include "essmm/error.hpp"

namespace essmm {

enum class StrategyKind { Exact, Bucket, FastRand };

inline constexpr std::uint32_t kDefaultPrime = 577;

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Exact: return "exact";
    case StrategyKind::Bucket: return "bucket";
    case StrategyKind::FastRand: return "fastrand";
  }
  return "?";
}

inline StrategyKind parse_strategy_kind(std::string_view s) {
  if (s == "exact") return StrategyKind::Exact;
  if (s == "bucket") return StrategyKind::Bucket;
  if (s == "fastrand") return StrategyKind::FastRand;
  throw Error(ErrorKind::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

// Which nonzeros of a row are kept. `s_width` caps the number of retained
// entries per row and is ignored by Exact; `prime` is used by FastRand only.
struct SamplingStrategy {
  StrategyKind kind = StrategyKind::Exact;
  offset_t s_width = 0;
  std::uint32_t prime = kDefaultPrime;

  static SamplingStrategy exact() { return {}; }
  static SamplingStrategy bucket(offset_t s) { return {StrategyKind::Bucket, s, kDefaultPrime}; }
  static SamplingStrategy fastrand(offset_t s, std::uint32_t prime = kDefaultPrime) {
    return {StrategyKind::FastRand, s, prime};
  }

  // Retained entries for a row of the given length.
  offset_t sampled_count(offset_t row_nnz) const noexcept {
    return kind == StrategyKind::Exact ? row_nnz : std::min(row_nnz, s_width);
  }

  void check() const {
    if (kind != StrategyKind::Exact && s_width < 1) {
      throw Error(ErrorKind::InvalidArgument, "s_width must be >= 1, got " + std::to_string(s_width));
    }
    if (prime < 2) throw Error(ErrorKind::InvalidArgument, "prime must be >= 2");
  }

  friend bool operator==(const SamplingStrategy&, const SamplingStrategy&) = default;
};

inline std::string describe(const SamplingStrategy& s) {
  switch (s.kind) {
    case StrategyKind::Exact: return "exact";
    case StrategyKind::Bucket: return "bucket(S=" + std::to_string(s.s_width) + ")";
    case StrategyKind::FastRand:
      return "fastrand(S=" + std::to_string(s.s_width) + ", P'=" + std::to_string(s.prime) + ")";
  }
  return "?";
}

// Position within a row of `row_nnz` entries that FastRand loads into buffer
// slot `shmem_idx`: (shmem_idx * prime) mod row_nnz, without overflow.
inline std::uint64_t fastrand_index(std::uint64_t shmem_idx, std::uint64_t row_nnz,
                                    std::uint64_t prime) {
  if (row_nnz == 0) throw Error(ErrorKind::InvalidArgument, "fastrand_index on an empty row");
  const std::uint64_t a = shmem_idx % row_nnz;
  const std::uint64_t b = prime % row_nnz;
  if (row_nnz <= (std::uint64_t{1} << 32)) return a * b % row_nnz;
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % row_nnz);
}

// Calls f(position) for every retained slot of a row, in buffer order, and
// returns the slot count. FastRand walks the residues incrementally, which
// yields the same sequence as fastrand_index(i, row_nnz, prime).
template <class F>
inline offset_t for_each_sample_position(offset_t row_nnz, const SamplingStrategy& s, F&& f) {
  const offset_t count = s.sampled_count(row_nnz);
  if (s.kind != StrategyKind::FastRand) {
    for (offset_t p = 0; p < count; ++p) f(p);
    return count;
  }
  if (count == 0) return 0;
  const auto n = static_cast<std::uint64_t>(row_nnz);
  const std::uint64_t step = s.prime % n;
  std::uint64_t pos = 0;
  for (offset_t i = 0; i < count; ++i) {
    f(static_cast<offset_t>(pos));
    pos += step;
    if (pos >= n) pos -= n;
  }
  return count;
}

// True when FastRand revisits a position within the first min(row_nnz, S)
// slots. The residues i*P' mod n cycle with period n / gcd(P', n).
inline bool fastrand_has_duplicates(offset_t row_nnz, offset_t s_width, std::uint32_t prime) {
  if (row_nnz <= 1) return false;
  const offset_t count = std::min(row_nnz, s_width);
  const offset_t period = row_nnz / std::gcd<offset_t, offset_t>(prime, row_nnz);
  return count > period;
}

inline bool has_duplicate_positions(const SamplingStrategy& s, offset_t row_nnz) {
  return s.kind == StrategyKind::FastRand && fastrand_has_duplicates(row_nnz, s.s_width, s.prime);
}

struct SampledEntry {
  index_t col;
  float value;
  offset_t position;  // index within the row's stored entries

  friend bool operator==(const SampledEntry&, const SampledEntry&) = default;
};

struct RowSample {
  std::vector<SampledEntry> entries;  // buffer order
  offset_t sampled_count = 0;
};

inline RowSample sample_row(const CsrMatrix& m, index_t row, const SamplingStrategy& strategy) {
  strategy.check();
  if (row < 0 || row >= m.n_rows()) {
    throw Error(ErrorKind::OutOfRange,
                "row " + std::to_string(row) + " outside [0, " + std::to_string(m.n_rows()) + ")");
  }
  RowSample out;
  const auto cols = m.row_cols(row);
  const auto vals = m.row_values(row);
  out.entries.reserve(static_cast<std::size_t>(strategy.sampled_count(m.row_nnz(row))));
  out.sampled_count = for_each_sample_position(m.row_nnz(row), strategy, [&](offset_t p) {
    out.entries.push_back({cols[p], vals[p], p});
  });
  return out;
}

// Retained entries over the whole matrix: sum_i min(row_nnz_i, S).
inline std::uint64_t sampled_nnz(const CsrMatrix& m, const SamplingStrategy& strategy) {
  std::uint64_t total = 0;
  for (index_t i = 0; i < m.n_rows(); ++i) {
    total += static_cast<std::uint64_t>(strategy.sampled_count(m.row_nnz(i)));
  }
  return total;
}

// Fraction of nonzeros retained with buffer width S. Bucket and FastRand
// keep the same number of slots per row, so one rate covers both.
inline double sampling_rate(const CsrMatrix& m, offset_t s_width) {
  if (s_width < 1) throw Error(ErrorKind::InvalidArgument, "s_width must be >= 1");
  if (m.nnz() == 0) return 1.0;
  return static_cast<double>(sampled_nnz(m, SamplingStrategy::bucket(s_width))) /
         static_cast<double>(m.nnz());
}

// The sampled graph as a legal CSR matrix. FastRand positions that repeat
// collapse into one entry whose value is the sum of the repeats.
inline CsrMatrix materialize_sampled(const CsrMatrix& m, const SamplingStrategy& strategy) {
  strategy.check();
  if (auto v = validate(m); !v.empty()) {
    throw Error(ErrorKind::InvalidArgument, "invalid CSR: " + v.front().message);
  }
  std::vector<offset_t> row_ptr(static_cast<std::size_t>(m.n_rows()) + 1, 0);
  std::vector<index_t> col_ind;
  std::vector<float> values;
  col_ind.reserve(static_cast<std::size_t>(sampled_nnz(m, strategy)));
  values.reserve(col_ind.capacity());

  std::vector<std::pair<offset_t, float>> picked;  // (position, value)
  for (index_t i = 0; i < m.n_rows(); ++i) {
    const auto cols = m.row_cols(i);
    const auto vals = m.row_values(i);
    picked.clear();
    for_each_sample_position(m.row_nnz(i), strategy,
                             [&](offset_t p) { picked.emplace_back(p, vals[p]); });
    // Stored order is column order, so sorting by position sorts by column.
    std::stable_sort(picked.begin(), picked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    offset_t last = -1;
    for (const auto& [p, v] : picked) {
      if (p == last) {
        values.back() += v;
      } else {
        col_ind.push_back(cols[p]);
        values.push_back(v);
        last = p;
      }
    }
    row_ptr[i + 1] = static_cast<offset_t>(col_ind.size());
  }
  return CsrMatrix::from_parts_unchecked(m.n_rows(), m.n_cols(), std::move(row_ptr),
                                         std::move(col_ind), std::move(values));
}

}  // namespace essmm
