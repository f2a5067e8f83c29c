#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "essmm/csr.hpp"
#include "essmm/error.hpp"
#include "essmm/gnn.hpp"
#include "essmm/sampler.hpp"
#include "essmm/spmm.hpp"

namespace essmm {

// One row of a sweep / benchmark report. Column order is the CSV order.
struct SweepResult {
  std::string dataset;
  std::string strategy;
  offset_t s_width = 0;
  double sampling_rate = 1.0;
  double flop_ratio = 1.0;
  double spmm_ms = 0.0;
  double speedup_vs_exact = 1.0;
  std::optional<double> accuracy;

  friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

inline constexpr const char* kSweepCsvHeader =
    "dataset,strategy,s_width,sampling_rate,flop_ratio,spmm_ms,speedup_vs_exact,accuracy";

namespace detail {

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

template <class T>
T parse_number(const std::string& s, const std::string& source, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(source, line, "bad number '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline void write_sweep_csv(std::ostream& os, std::span<const SweepResult> rows) {
  using detail::format_double;
  os << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    os << detail::csv_field(r.dataset) << ',' << detail::csv_field(r.strategy) << ',' << r.s_width
       << ',' << format_double(r.sampling_rate) << ',' << format_double(r.flop_ratio) << ','
       << format_double(r.spmm_ms) << ',' << format_double(r.speedup_vs_exact) << ','
       << (r.accuracy ? format_double(*r.accuracy) : std::string()) << '\n';
  }
}

inline std::vector<SweepResult> read_sweep_csv(std::istream& in, const std::string& source = "<stream>") {
  std::vector<SweepResult> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != kSweepCsvHeader) throw ParseError(source, lineno, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 8) throw ParseError(source, lineno, "expected 8 fields, got " + std::to_string(f.size()));
    SweepResult r;
    r.dataset = f[0];
    r.strategy = f[1];
    r.s_width = detail::parse_number<offset_t>(f[2], source, lineno);
    r.sampling_rate = detail::parse_number<double>(f[3], source, lineno);
    r.flop_ratio = detail::parse_number<double>(f[4], source, lineno);
    r.spmm_ms = detail::parse_number<double>(f[5], source, lineno);
    r.speedup_vs_exact = detail::parse_number<double>(f[6], source, lineno);
    if (!f[7].empty()) r.accuracy = detail::parse_number<double>(f[7], source, lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

// FNV-1a over the bit patterns of a dense matrix; equal digests for
// bitwise-equal outputs.
inline std::uint64_t digest(const DenseMatrix& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint32_t word) {
    for (int b = 0; b < 4; ++b) {
      h ^= (word >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<std::uint32_t>(m.rows()));
  mix(static_cast<std::uint32_t>(m.cols()));
  for (float v : m.data()) mix(std::bit_cast<std::uint32_t>(v));
  return h;
}

inline DenseMatrix random_dense(index_t rows, index_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  DenseMatrix m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

inline float max_abs_diff(const DenseMatrix& x, const DenseMatrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "cannot compare matrices of different shape");
  }
  float best = 0.0f;
  for (std::size_t k = 0; k < x.size(); ++k) best = std::max(best, std::abs(x.data()[k] - y.data()[k]));
  return best;
}

// Ratio of sampled to exact multiply-adds. Computed from integer counts, so
// it is the same double as sampling_rate() for Bucket/FastRand.
inline double flop_ratio(const CsrMatrix& a, const SamplingStrategy& s, std::uint64_t n_dense_cols) {
  const std::uint64_t exact = flop_count(a, SamplingStrategy::exact(), n_dense_cols);
  if (exact == 0) return 1.0;
  return static_cast<double>(flop_count(a, s, n_dense_cols)) / static_cast<double>(exact);
}

inline double strategy_rate(const CsrMatrix& a, const SamplingStrategy& s) {
  return s.kind == StrategyKind::Exact ? 1.0 : sampling_rate(a, s.s_width);
}

// --- analyze ---------------------------------------------------------------

struct RateRow {
  offset_t s_width;
  double sampling_rate;
};

inline std::vector<RateRow> analyze(const CsrMatrix& m, std::span<const offset_t> s_list) {
  std::vector<RateRow> out;
  out.reserve(s_list.size());
  for (offset_t s : s_list) out.push_back({s, sampling_rate(m, s)});
  return out;
}

inline void write_rates_csv(std::ostream& os, std::span<const RateRow> rows) {
  os << "s_width,sampling_rate\n";
  for (const auto& r : rows) os << r.s_width << ',' << detail::format_double(r.sampling_rate) << '\n';
}

// --- spmm-bench ------------------------------------------------------------

struct SpmmBenchConfig {
  std::string dataset = "graph";
  index_t dense_cols = 128;
  SamplingStrategy strategy;
  TileConfig tile;
  NormMode norm;
  unsigned repeats = 10;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

struct SpmmBenchResult {
  SweepResult row;
  double exact_ms = 0.0;
  float max_abs_diff = 0.0f;
  std::uint64_t exact_digest = 0;
  std::uint64_t sampled_digest = 0;
  SpmmCounters counters;  // from the last sampled run
  bool budget_ok = false;
  bool load_balance_ok = false;
};

namespace detail {

inline bool budget_holds(const SpmmCounters& c, const SamplingStrategy& s, const TileConfig& t) {
  const std::uint64_t expected = s.kind == StrategyKind::Exact ? 0 : t.footprint_bytes();
  return c.peak_scratch_bytes == expected && c.peak_scratch_bytes <= t.budget_bytes;
}

inline bool load_balance_holds(const SpmmCounters& c, const SamplingStrategy& s, const CsrMatrix& a) {
  const auto bound = s.kind == StrategyKind::Exact ? a.max_row_nnz() : s.s_width;
  return c.max_row_iterations <= static_cast<std::uint64_t>(bound);
}

template <class Fn>
double time_ms(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Exact vs sampled SpMM on a seeded random B. One untimed warm-up of each
// precedes `repeats` timed runs; the sampled time includes stage-1 sampling.
inline SpmmBenchResult spmm_bench(const CsrMatrix& a, const SpmmBenchConfig& cfg) {
  if (cfg.repeats < 1) throw Error(ErrorKind::InvalidArgument, "repeats must be >= 1");
  cfg.strategy.check();
  cfg.tile.check();
  const DenseMatrix b = random_dense(a.n_cols(), cfg.dense_cols, cfg.seed);
  const ExecOptions plain{cfg.threads, nullptr, {}};

  SpmmBenchResult res;
  SpmmCounters counters;
  const ExecOptions instrumented{cfg.threads, &counters, {}};
  DenseMatrix exact = spmm_exact(a, b, plain);
  DenseMatrix sampled = spmm_sampled(a, b, cfg.strategy, cfg.tile, cfg.norm, instrumented);
  res.counters = counters;

  double exact_total = 0.0, sampled_total = 0.0;
  for (unsigned r = 0; r < cfg.repeats; ++r) {
    exact_total += detail::time_ms([&] { exact = spmm_exact(a, b, plain); });
    sampled_total += detail::time_ms(
        [&] { sampled = spmm_sampled(a, b, cfg.strategy, cfg.tile, cfg.norm, plain); });
  }
  res.exact_ms = exact_total / cfg.repeats;

  res.row.dataset = cfg.dataset;
  res.row.strategy = to_string(cfg.strategy.kind);
  res.row.s_width = cfg.strategy.kind == StrategyKind::Exact ? 0 : cfg.strategy.s_width;
  res.row.sampling_rate = strategy_rate(a, cfg.strategy);
  res.row.flop_ratio = flop_ratio(a, cfg.strategy, static_cast<std::uint64_t>(cfg.dense_cols));
  res.row.spmm_ms = sampled_total / cfg.repeats;
  res.row.speedup_vs_exact = res.row.spmm_ms > 0.0 ? res.exact_ms / res.row.spmm_ms : 1.0;
  res.max_abs_diff = max_abs_diff(exact, sampled);
  res.exact_digest = digest(exact);
  res.sampled_digest = digest(sampled);
  res.budget_ok = detail::budget_holds(res.counters, cfg.strategy, cfg.tile);
  res.load_balance_ok = detail::load_balance_holds(res.counters, cfg.strategy, a);
  return res;
}

// --- infer / sweep ---------------------------------------------------------

struct InferConfig {
  SamplingStrategy strategy;
  TileConfig tile;
  unsigned threads = 1;
  unsigned repeats = 1;
  NormDivisor mean_divisor = NormDivisor::SampledCount;
};

struct InferResult {
  double accuracy = 0.0;
  std::vector<double> layer_spmm_ms;  // mean over repeats
  double spmm_ms = 0.0;               // sum over layers
  double total_ms = 0.0;              // mean forward time
  std::uint64_t logits_digest = 0;
};

inline InferResult infer(const GnnModel& model, const LabeledDataset& data, const InferConfig& cfg) {
  if (cfg.repeats < 1) throw Error(ErrorKind::InvalidArgument, "repeats must be >= 1");
  const InferOptions opt{cfg.threads, cfg.mean_divisor};
  std::vector<LayerStats> stats;
  DenseMatrix logits = forward(model, data, cfg.strategy, cfg.tile, opt, &stats);  // warm-up

  InferResult res;
  res.layer_spmm_ms.assign(model.layers.size(), 0.0);
  double total = 0.0;
  for (unsigned r = 0; r < cfg.repeats; ++r) {
    total += detail::time_ms([&] { logits = forward(model, data, cfg.strategy, cfg.tile, opt, &stats); });
    for (std::size_t l = 0; l < stats.size(); ++l) res.layer_spmm_ms[l] += stats[l].spmm_ms;
  }
  for (auto& ms : res.layer_spmm_ms) ms /= cfg.repeats;
  for (double ms : res.layer_spmm_ms) res.spmm_ms += ms;
  res.total_ms = total / cfg.repeats;
  res.accuracy = accuracy(logits, data.labels, data.eval_mask);
  res.logits_digest = digest(logits);
  return res;
}

struct SweepConfig {
  std::string dataset = "graph";
  std::vector<StrategyKind> strategies{StrategyKind::Bucket, StrategyKind::FastRand};
  std::vector<offset_t> s_list{16, 32, 64, 128, 256, 512};
  std::uint32_t prime = kDefaultPrime;
  offset_t rows_per_block = TileConfig::kDefaultRowsPerBlock;
  std::uint64_t budget_bytes = TileConfig::kDefaultBudgetBytes;
  unsigned threads = 1;
  unsigned repeats = 1;
  NormDivisor mean_divisor = NormDivisor::SampledCount;
};

// Strategy x S cross product, strategies outermost, against one exact baseline.
inline std::vector<SweepResult> sweep(const GnnModel& model, const LabeledDataset& data,
                                      const SweepConfig& cfg) {
  model.check();
  std::uint64_t dense_cols = 0;
  for (const auto& l : model.layers) dense_cols += static_cast<std::uint64_t>(l.out_dim());

  const auto exact_strategy = SamplingStrategy::exact();
  const InferResult exact = infer(model, data,
                                  {exact_strategy,
                                   TileConfig::for_strategy(exact_strategy, cfg.rows_per_block,
                                                            cfg.budget_bytes),
                                   cfg.threads, cfg.repeats, cfg.mean_divisor});
  std::vector<SweepResult> rows;
  for (StrategyKind kind : cfg.strategies) {
    for (offset_t s : cfg.s_list) {
      const SamplingStrategy strategy{kind, s, cfg.prime};
      const InferResult r =
          infer(model, data,
                {strategy, TileConfig::for_strategy(strategy, cfg.rows_per_block, cfg.budget_bytes),
                 cfg.threads, cfg.repeats, cfg.mean_divisor});
      SweepResult row;
      row.dataset = cfg.dataset;
      row.strategy = to_string(kind);
      row.s_width = s;
      row.sampling_rate = strategy_rate(data.graph, strategy);
      row.flop_ratio = flop_ratio(data.graph, strategy, dense_cols);
      row.spmm_ms = r.spmm_ms;
      row.speedup_vs_exact = r.spmm_ms > 0.0 ? exact.spmm_ms / r.spmm_ms : 1.0;
      row.accuracy = r.accuracy;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// --- verify ----------------------------------------------------------------

struct VerifyConfig {
  SamplingStrategy strategy;
  TileConfig tile;
  index_t dense_cols = 64;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
};

struct VerifyResult {
  bool pass = false;
  bool bitwise_equal = false;         // over the compared rows
  double max_rel_diff = 0.0;          // over the compared rows
  offset_t rows_compared = 0;
  offset_t rows_with_duplicates = 0;  // FastRand rows that revisit a position; not compared
  bool budget_ok = false;
  bool load_balance_ok = false;
  SpmmCounters counters;
};

// Element error relative to the magnitude of its summands,
// |x - y| / sum_k |a_ik * b_kj|, the natural scale for reordered float sums.
inline double relative_error(float x, float y, double magnitude) {
  const double diff = std::abs(static_cast<double>(x) - static_cast<double>(y));
  if (diff == 0.0) return 0.0;
  return magnitude > 0.0 ? diff / magnitude : std::numeric_limits<double>::infinity();
}

// In-kernel sampling against the exact kernel run on the offline-sampled
// graph. Bucket (and Exact) must match bit for bit; FastRand rows without
// repeated positions must match within `tolerance`.
inline VerifyResult verify(const CsrMatrix& a, const VerifyConfig& cfg) {
  cfg.strategy.check();
  cfg.tile.check();
  const DenseMatrix b = random_dense(a.n_cols(), cfg.dense_cols, cfg.seed);

  VerifyResult res;
  const DenseMatrix kernel =
      spmm_sampled(a, b, cfg.strategy, cfg.tile, NormMode::none(), {cfg.threads, &res.counters, {}});
  const CsrMatrix pre = materialize_sampled(a, cfg.strategy);
  const DenseMatrix oracle = spmm_exact(pre, b, {cfg.threads, nullptr, {}});

  res.bitwise_equal = true;
  std::vector<double> magnitude(static_cast<std::size_t>(b.cols()));
  for (index_t i = 0; i < a.n_rows(); ++i) {
    if (has_duplicate_positions(cfg.strategy, a.row_nnz(i))) {
      ++res.rows_with_duplicates;
      continue;
    }
    ++res.rows_compared;
    std::fill(magnitude.begin(), magnitude.end(), 0.0);
    const auto cols = pre.row_cols(i);
    const auto vals = pre.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto brow = b.row(cols[k]);
      for (index_t j = 0; j < b.cols(); ++j) magnitude[j] += std::abs(double{vals[k]} * brow[j]);
    }
    const auto x = kernel.row(i);
    const auto y = oracle.row(i);
    for (index_t j = 0; j < b.cols(); ++j) {
      if (std::bit_cast<std::uint32_t>(x[j]) != std::bit_cast<std::uint32_t>(y[j])) {
        res.bitwise_equal = false;
      }
      res.max_rel_diff = std::max(res.max_rel_diff, relative_error(x[j], y[j], magnitude[j]));
    }
  }
  res.budget_ok = detail::budget_holds(res.counters, cfg.strategy, cfg.tile);
  res.load_balance_ok = detail::load_balance_holds(res.counters, cfg.strategy, a);
  const bool numeric_ok = cfg.strategy.kind == StrategyKind::FastRand
                              ? res.max_rel_diff <= cfg.tolerance
                              : res.bitwise_equal;
  res.pass = numeric_ok && res.budget_ok && res.load_balance_ok;
  return res;
}

}  // namespace essmm
