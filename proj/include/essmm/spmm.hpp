#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "essmm/csr.hpp"
#include "essmm/error.hpp"
#include "essmm/sampler.hpp"

namespace essmm {

// Geometry of one row block: `rows_per_block` rows share a scratch buffer of
// rows_per_block * s_width (value, column) pairs that must fit in
// `budget_bytes`.
struct TileConfig {
  static constexpr std::uint64_t kBytesPerEntry = sizeof(float) + sizeof(index_t);
  static constexpr offset_t kDefaultRowsPerBlock = 4;
  static constexpr std::uint64_t kDefaultBudgetBytes = 49152;

  offset_t rows_per_block = kDefaultRowsPerBlock;
  offset_t s_width = 32;
  std::uint64_t budget_bytes = kDefaultBudgetBytes;

  static TileConfig for_strategy(const SamplingStrategy& s,
                                 offset_t rows_per_block = kDefaultRowsPerBlock,
                                 std::uint64_t budget_bytes = kDefaultBudgetBytes) {
    return {rows_per_block, s.kind == StrategyKind::Exact ? 1 : s.s_width, budget_bytes};
  }

  // G * S * 8, saturating instead of wrapping.
  std::uint64_t footprint_bytes() const noexcept {
    if (rows_per_block <= 0 || s_width <= 0) return 0;
    const auto wide = static_cast<unsigned __int128>(rows_per_block) *
                      static_cast<unsigned __int128>(s_width) * kBytesPerEntry;
    return wide > UINT64_MAX ? UINT64_MAX : static_cast<std::uint64_t>(wide);
  }

  void check() const {
    if (rows_per_block < 1) throw Error(ErrorKind::InvalidArgument, "rows_per_block must be >= 1");
    if (s_width < 1) throw Error(ErrorKind::InvalidArgument, "tile s_width must be >= 1");
    if (footprint_bytes() > budget_bytes) {
      throw Error(ErrorKind::BudgetExceeded,
                  "tile " + std::to_string(rows_per_block) + " rows x " + std::to_string(s_width) +
                      " entries x 8 B = " + std::to_string(footprint_bytes()) +
                      " B exceeds budget of " + std::to_string(budget_bytes) + " B");
    }
  }
};

enum class NormKind { None, Row };
enum class NormDivisor { SampledCount, OriginalDegree };

// Row normalization divides each output row by the number of retained
// entries (default) or by the row's full degree.
struct NormMode {
  NormKind kind = NormKind::None;
  NormDivisor divisor = NormDivisor::SampledCount;

  static NormMode none() { return {}; }
  static NormMode row(NormDivisor d = NormDivisor::SampledCount) { return {NormKind::Row, d}; }
};

inline const char* to_string(NormDivisor d) {
  return d == NormDivisor::SampledCount ? "sampled-count" : "original-degree";
}

// Counters for one kernel invocation. Stage times are summed over workers.
struct SpmmCounters {
  std::uint64_t blocks = 0;
  std::uint64_t peak_scratch_bytes = 0;
  std::uint64_t sampled_nnz = 0;
  std::uint64_t max_row_iterations = 0;  // longest stage-2 loop over any row
  std::uint64_t stage1_ns = 0;
  std::uint64_t stage2_ns = 0;

  void merge(const SpmmCounters& o) {
    blocks += o.blocks;
    peak_scratch_bytes = std::max(peak_scratch_bytes, o.peak_scratch_bytes);
    sampled_nnz += o.sampled_nnz;
    max_row_iterations = std::max(max_row_iterations, o.max_row_iterations);
    stage1_ns += o.stage1_ns;
    stage2_ns += o.stage2_ns;
  }
};

struct ExecOptions {
  unsigned threads = 1;  // 0 picks std::thread::hardware_concurrency()
  SpmmCounters* counters = nullptr;
  // Called once per worker with its scratch size in bytes, before any block runs.
  std::function<void(std::uint64_t)> on_scratch_alloc;
};

namespace detail {

struct ScratchEntry {
  float value;
  index_t col;
};
static_assert(sizeof(ScratchEntry) == TileConfig::kBytesPerEntry);

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

// out[0..n) = sum_k value(k) * b.row(col(k)), accumulated in k order. The
// exact and sampled kernels both go through here so that identical entry
// sequences produce identical bits.
template <class Entry>
inline void accumulate_row(offset_t count, Entry&& entry, const DenseMatrix& b, float* out) {
  const index_t n = b.cols();
  std::fill(out, out + n, 0.0f);
  for (offset_t k = 0; k < count; ++k) {
    const auto [v, c] = entry(k);
    const float* brow = b.row(c).data();
    for (index_t j = 0; j < n; ++j) out[j] += v * brow[j];
  }
}

inline void scale_row(float* out, index_t n, offset_t divisor) {
  const auto d = static_cast<float>(divisor);
  for (index_t j = 0; j < n; ++j) out[j] /= d;
}

// Runs fn(worker) on `workers` threads (inline when workers == 1).
template <class Fn>
inline void run_workers(unsigned workers, Fn&& fn) {
  if (workers <= 1) {
    fn(0u);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back([&fn, w] { fn(w); });
}

// Hands out contiguous chunks of [0, n) to competing workers.
class ChunkQueue {
 public:
  ChunkQueue(offset_t n, offset_t chunk) : n_(n), chunk_(std::max<offset_t>(1, chunk)) {}

  bool next(offset_t& begin, offset_t& end) {
    begin = next_.fetch_add(chunk_, std::memory_order_relaxed);
    if (begin >= n_) return false;
    end = std::min(n_, begin + chunk_);
    return true;
  }

 private:
  offset_t n_;
  offset_t chunk_;
  std::atomic<offset_t> next_{0};
};

inline void check_dims(const CsrMatrix& a, const DenseMatrix& b) {
  if (a.n_cols() != b.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "A is " + std::to_string(a.n_rows()) + "x" +
                                              std::to_string(a.n_cols()) + " but B has " +
                                              std::to_string(b.rows()) + " rows");
  }
}

using Clock = std::chrono::steady_clock;

inline std::uint64_t elapsed_ns(Clock::time_point from, Clock::time_point to) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(to - from).count());
}

}  // namespace detail

// Reference C = A * B with each output row accumulated in stored order.
inline DenseMatrix spmm_exact(const CsrMatrix& a, const DenseMatrix& b, const ExecOptions& exec = {}) {
  detail::check_dims(a, b);
  DenseMatrix c(a.n_rows(), b.cols());
  const unsigned workers = std::min<unsigned>(
      detail::resolve_threads(exec.threads), static_cast<unsigned>(std::max<index_t>(1, a.n_rows())));
  detail::ChunkQueue queue(a.n_rows(), 64);
  const auto cols = a.col_ind();
  const auto vals = a.values();
  detail::run_workers(workers, [&](unsigned) {
    offset_t begin, end;
    while (queue.next(begin, end)) {
      for (auto i = static_cast<index_t>(begin); i < end; ++i) {
        const offset_t base = a.row_begin(i);
        detail::accumulate_row(
            a.row_nnz(i),
            [&](offset_t k) { return std::pair{vals[base + k], cols[base + k]}; }, b,
            c.row(i).data());
      }
    }
  });
  return c;
}

// Two-stage budgeted kernel. For each block of G rows, stage 1 copies each
// row's sampled (value, column) pairs into a G x S scratch tile (FastRand
// repeats are copied as often as they occur); stage 2 computes every output
// row from its scratch slots in buffer order. Exact bypasses the tile and
// streams the row directly.
inline DenseMatrix spmm_sampled(const CsrMatrix& a, const DenseMatrix& b,
                                const SamplingStrategy& strategy, const TileConfig& tile,
                                NormMode norm = {}, const ExecOptions& exec = {}) {
  detail::check_dims(a, b);
  strategy.check();
  tile.check();
  const bool staged = strategy.kind != StrategyKind::Exact;
  if (staged && strategy.s_width > tile.s_width) {
    throw Error(ErrorKind::BudgetExceeded,
                "strategy width " + std::to_string(strategy.s_width) +
                    " exceeds tile width " + std::to_string(tile.s_width));
  }

  const index_t n_rows = a.n_rows();
  const index_t n_cols = b.cols();
  const offset_t g = tile.rows_per_block;
  const offset_t s = tile.s_width;
  const offset_t n_blocks = (n_rows + g - 1) / g;
  const unsigned workers = static_cast<unsigned>(
      std::min<offset_t>(detail::resolve_threads(exec.threads), std::max<offset_t>(1, n_blocks)));

  DenseMatrix c(n_rows, n_cols);
  const std::size_t scratch_len = staged ? static_cast<std::size_t>(g * s) : 0;
  std::vector<std::vector<detail::ScratchEntry>> scratch(workers);
  std::vector<SpmmCounters> counters(workers);
  for (unsigned w = 0; w < workers; ++w) {
    scratch[w].resize(scratch_len);
    counters[w].peak_scratch_bytes = scratch_len * sizeof(detail::ScratchEntry);
    if (exec.on_scratch_alloc) exec.on_scratch_alloc(counters[w].peak_scratch_bytes);
  }

  const bool timed = exec.counters != nullptr;
  const auto cols = a.col_ind();
  const auto vals = a.values();
  detail::ChunkQueue queue(n_blocks, std::max<offset_t>(1, 64 / g));

  detail::run_workers(workers, [&](unsigned w) {
    detail::ScratchEntry* tile_buf = scratch[w].data();
    SpmmCounters& ctr = counters[w];
    std::vector<offset_t> row_count(static_cast<std::size_t>(g));
    offset_t blk_begin, blk_end;
    while (queue.next(blk_begin, blk_end)) {
      for (offset_t blk = blk_begin; blk < blk_end; ++blk) {
        const auto r0 = static_cast<index_t>(blk * g);
        const auto r1 = static_cast<index_t>(std::min<offset_t>(n_rows, r0 + g));
        ++ctr.blocks;

        // Stage 1: sample and stage this block's rows.
        const auto t0 = timed ? detail::Clock::now() : detail::Clock::time_point{};
        for (index_t i = r0; i < r1; ++i) {
          const offset_t nnz = a.row_nnz(i);
          const offset_t base = a.row_begin(i);
          if (staged) {
            detail::ScratchEntry* slot = tile_buf + (i - r0) * s;
            row_count[i - r0] = for_each_sample_position(nnz, strategy, [&](offset_t p) {
              *slot++ = {vals[base + p], cols[base + p]};
            });
          } else {
            row_count[i - r0] = nnz;
          }
        }
        const auto t1 = timed ? detail::Clock::now() : detail::Clock::time_point{};

        // Stage 2: one sequential accumulation per output row.
        for (index_t i = r0; i < r1; ++i) {
          const offset_t count = row_count[i - r0];
          float* out = c.row(i).data();
          if (staged) {
            const detail::ScratchEntry* row_buf = tile_buf + (i - r0) * s;
            detail::accumulate_row(
                count, [&](offset_t k) { return std::pair{row_buf[k].value, row_buf[k].col}; }, b,
                out);
          } else {
            const offset_t base = a.row_begin(i);
            detail::accumulate_row(
                count, [&](offset_t k) { return std::pair{vals[base + k], cols[base + k]}; }, b,
                out);
          }
          if (norm.kind == NormKind::Row && count > 0) {
            const offset_t divisor =
                norm.divisor == NormDivisor::SampledCount ? count : a.row_nnz(i);
            detail::scale_row(out, n_cols, divisor);
          }
          ctr.sampled_nnz += static_cast<std::uint64_t>(count);
          ctr.max_row_iterations = std::max(ctr.max_row_iterations, static_cast<std::uint64_t>(count));
        }
        if (timed) {
          const auto t2 = detail::Clock::now();
          ctr.stage1_ns += detail::elapsed_ns(t0, t1);
          ctr.stage2_ns += detail::elapsed_ns(t1, t2);
        }
      }
    }
  });

  if (exec.counters) {
    SpmmCounters total;
    for (const auto& ctr : counters) total.merge(ctr);
    *exec.counters = total;
  }
  return c;
}

// Multiply-adds performed by the sampled kernel: sum_i min(row_nnz_i, S) * n_dense_cols.
inline std::uint64_t flop_count(const CsrMatrix& a, const SamplingStrategy& strategy,
                                std::uint64_t n_dense_cols) {
  return sampled_nnz(a, strategy) * n_dense_cols;
}

}  // namespace essmm
