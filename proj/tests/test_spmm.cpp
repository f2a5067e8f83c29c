#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numeric>
#include <random>

#include "essmm/bench.hpp"
#include "essmm/spmm.hpp"
#include "test_helpers.hpp"

using namespace essmm;

namespace {

CsrMatrix two_by_three() { return from_coo(2, 3, {{0, 0, 1.0f}, {0, 2, 1.0f}, {1, 1, 2.0f}}); }
DenseMatrix b_three_by_two() { return DenseMatrix(3, 2, {1, 2, 3, 4, 5, 6}); }

bool bitwise_equal(const DenseMatrix& x, const DenseMatrix& y) {
  return x.rows() == y.rows() && x.cols() == y.cols() &&
         std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(float)) == 0;
}

TileConfig tile_for(offset_t s, offset_t g = 4) { return {g, s, 1ull << 40}; }

}  // namespace

TEST(SpmmExact, IdentityReproducesB) {
  const auto b = random_dense(7, 5, 1);
  EXPECT_TRUE(bitwise_equal(spmm_exact(CsrMatrix::identity(7), b), b));
}

TEST(SpmmExact, SmallExampleAgainstDenseOracle) {
  const auto a = two_by_three();
  const auto b = b_three_by_two();
  const auto c = spmm_exact(a, b);
  const auto want = oracle::dense_mul(oracle::densify(a), oracle::to_double(b.data()), 2, 3, 2);
  EXPECT_EQ(want, (std::vector<double>{6, 8, 6, 8}));
  EXPECT_EQ(oracle::to_double(c.data()), want);
}

TEST(SpmmExact, EmptyRowGivesZeros) {
  const auto a = from_coo(3, 2, {{0, 0, 1.0f}, {2, 1, 1.0f}});
  const auto c = spmm_exact(a, DenseMatrix(2, 4, std::vector<float>(8, 3.0f)));
  for (float v : c.row(1)) EXPECT_EQ(v, 0.0f);
}

TEST(SpmmExact, RandomAgainstDenseOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = oracle::random_csr(50, 40, 0.15, seed);
    const auto b = random_dense(40, 9, seed + 100);
    const auto c = spmm_exact(a, b);
    const auto want = oracle::dense_mul(oracle::densify(a), oracle::to_double(b.data()), 50, 40, 9);
    for (std::size_t k = 0; k < want.size(); ++k) ASSERT_NEAR(c.data()[k], want[k], 1e-5);
  }
}

TEST(SpmmExact, DimensionMismatch) {
  EXPECT_THROW(spmm_exact(two_by_three(), DenseMatrix(2, 2)), Error);
}

TEST(SpmmSampled, ExactStrategyIsBitwiseExact) {
  const auto a = oracle::random_csr(64, 64, 0.2, 3);
  const auto b = random_dense(64, 16, 4);
  for (offset_t g : {1, 3, 4, 8}) {
    EXPECT_TRUE(bitwise_equal(
        spmm_sampled(a, b, SamplingStrategy::exact(), tile_for(1, g)), spmm_exact(a, b)));
  }
}

TEST(SpmmSampled, BucketWidthOne) {
  const auto c = spmm_sampled(two_by_three(), b_three_by_two(), SamplingStrategy::bucket(1),
                              tile_for(1), NormMode::none());
  EXPECT_EQ(oracle::to_double(c.data()), (std::vector<double>{1, 2, 6, 8}));
}

TEST(SpmmSampled, RowNormDividesBySampledCount) {
  // Row 0 keeps 1 of 2 entries under Bucket(1); row 1 keeps its single entry.
  const auto a = two_by_three();
  const auto b = b_three_by_two();
  const auto sampled = spmm_sampled(a, b, SamplingStrategy::bucket(1), tile_for(1), NormMode::row());
  EXPECT_EQ(oracle::to_double(sampled.data()), (std::vector<double>{1, 2, 6, 8}));
  const auto original = spmm_sampled(a, b, SamplingStrategy::bucket(1), tile_for(1),
                                     NormMode::row(NormDivisor::OriginalDegree));
  EXPECT_EQ(oracle::to_double(original.data()), (std::vector<double>{0.5, 1, 6, 8}));
  const auto exact_mean = spmm_sampled(a, b, SamplingStrategy::exact(), tile_for(1), NormMode::row());
  EXPECT_EQ(oracle::to_double(exact_mean.data()), (std::vector<double>{3, 4, 6, 8}));
}

TEST(SpmmSampled, NormLeavesEmptyRowsZero) {
  const auto a = from_coo(2, 2, {{1, 0, 1.0f}});
  const auto c = spmm_sampled(a, DenseMatrix(2, 1, {4, 5}), SamplingStrategy::fastrand(2),
                              tile_for(2), NormMode::row());
  EXPECT_EQ(c(0, 0), 0.0f);
  EXPECT_EQ(c(1, 0), 4.0f);
}

TEST(SpmmSampled, FastRandRepeatsAreMultipliedEachTime) {
  // Row of 577 entries: all four slots load position 0.
  std::vector<CooEntry> coo;
  for (index_t c = 0; c < 577; ++c) coo.push_back({0, c, 1.0f});
  const auto a = from_coo(1, 577, coo);
  DenseMatrix b(577, 1);
  for (index_t k = 0; k < 577; ++k) b(k, 0) = static_cast<float>(k + 1);
  const auto c = spmm_sampled(a, b, SamplingStrategy::fastrand(4), tile_for(4));
  EXPECT_EQ(c(0, 0), 4.0f);  // 4 x b[0]
}

TEST(SpmmSampled, RejectsBadConfig) {
  const auto a = two_by_three();
  const auto b = b_three_by_two();
  EXPECT_THROW(spmm_sampled(a, DenseMatrix(2, 2), SamplingStrategy::bucket(1), tile_for(1)), Error);
  try {
    spmm_sampled(a, b, SamplingStrategy::bucket(2048), TileConfig{4, 2048, 49152});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BudgetExceeded);
  }
  // 4 x 1536 x 8 = 49152 fits exactly.
  EXPECT_NO_THROW(spmm_sampled(a, b, SamplingStrategy::bucket(1536), TileConfig{4, 1536, 49152}));
  EXPECT_THROW(spmm_sampled(a, b, SamplingStrategy::bucket(8), TileConfig{4, 4, 49152}), Error);
  EXPECT_THROW(spmm_sampled(a, b, SamplingStrategy::bucket(1), TileConfig{0, 1, 49152}), Error);
}

TEST(SpmmSampled, BudgetRejectedBeforeAnyAllocation) {
  std::atomic<int> allocations{0};
  ExecOptions exec;
  exec.on_scratch_alloc = [&](std::uint64_t) { ++allocations; };
  EXPECT_THROW(spmm_sampled(two_by_three(), b_three_by_two(), SamplingStrategy::bucket(8),
                            TileConfig{8, 8, 511}, NormMode::none(), exec),
               Error);
  EXPECT_EQ(allocations.load(), 0);
}

TEST(SpmmSampled, CountersReportFootprintAndBalance) {
  const auto a = oracle::random_csr(97, 80, 0.3, 12);
  const auto b = random_dense(80, 8, 13);
  for (offset_t s : {1, 4, 16}) {
    for (offset_t g : {1, 4, 6}) {
      SpmmCounters ctr;
      std::vector<std::uint64_t> allocs;
      std::mutex mu;
      ExecOptions exec{3, &ctr, [&](std::uint64_t bytes) {
                         std::lock_guard lock(mu);
                         allocs.push_back(bytes);
                       }};
      const TileConfig tile{g, s, 49152};
      spmm_sampled(a, b, SamplingStrategy::fastrand(s), tile, NormMode::none(), exec);
      EXPECT_EQ(ctr.blocks, static_cast<std::uint64_t>((97 + g - 1) / g));
      EXPECT_EQ(ctr.peak_scratch_bytes, static_cast<std::uint64_t>(g * s * 8));
      EXPECT_LE(ctr.peak_scratch_bytes, tile.budget_bytes);
      EXPECT_LE(ctr.max_row_iterations, static_cast<std::uint64_t>(s));
      EXPECT_EQ(ctr.sampled_nnz, sampled_nnz(a, SamplingStrategy::fastrand(s)));
      for (auto bytes : allocs) EXPECT_EQ(bytes, static_cast<std::uint64_t>(g * s * 8));
    }
  }
}

TEST(Properties, ExactnessAtFullWidth) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    const auto rows = std::uniform_int_distribution<index_t>(1, 150)(rng);
    const auto cols = std::uniform_int_distribution<index_t>(1, 150)(rng);
    const auto a = oracle::random_csr(rows, cols, std::uniform_real_distribution<double>(0.001, 0.2)(rng), seed);
    const auto b = random_dense(cols, 7, seed);
    const offset_t s = std::max<offset_t>(1, a.max_row_nnz());
    const auto exact = spmm_exact(a, b);
    ASSERT_TRUE(bitwise_equal(spmm_sampled(a, b, SamplingStrategy::bucket(s), tile_for(s)), exact));
    const auto fr = spmm_sampled(a, b, SamplingStrategy::fastrand(s), tile_for(s));
    const auto dense = oracle::densify(a);
    for (index_t i = 0; i < rows; ++i) {
      if (std::gcd<offset_t, offset_t>(577, a.row_nnz(i)) != 1) continue;
      for (index_t j = 0; j < b.cols(); ++j) {
        double magnitude = 0.0;
        for (index_t k = 0; k < cols; ++k) magnitude += std::abs(dense[i * cols + k] * b(k, j));
        ASSERT_LE(std::abs(double{fr(i, j)} - exact(i, j)), 1e-5 * magnitude);
      }
    }
  }
}

TEST(Properties, OracleEquivalenceWithPreSampledGraph) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = oracle::random_csr(120, 90, 0.05 + 0.01 * seed, seed);
    const auto b = random_dense(90, 6, seed);
    for (offset_t s : {1, 2, 8, 32}) {
      const auto bucket = SamplingStrategy::bucket(s);
      ASSERT_TRUE(bitwise_equal(spmm_sampled(a, b, bucket, tile_for(s)),
                                spmm_exact(materialize_sampled(a, bucket), b)));
      const auto fr = SamplingStrategy::fastrand(s);
      const auto kernel = spmm_sampled(a, b, fr, tile_for(s));
      const auto pre = materialize_sampled(a, fr);
      const auto oracle = spmm_exact(pre, b);
      for (index_t i = 0; i < a.n_rows(); ++i) {
        if (has_duplicate_positions(fr, a.row_nnz(i))) continue;
        for (index_t j = 0; j < b.cols(); ++j) {
          double magnitude = 0.0;
          for (std::size_t k = 0; k < pre.row_cols(i).size(); ++k)
            magnitude += std::abs(double{pre.row_values(i)[k]} * b(pre.row_cols(i)[k], j));
          ASSERT_LE(std::abs(double{kernel(i, j)} - oracle(i, j)), 1e-5 * magnitude);
        }
      }
    }
  }
}

TEST(Properties, DeterministicAcrossThreadsAndBlockSizes) {
  const auto a = oracle::random_csr(500, 300, 0.05, 77);
  const auto b = random_dense(300, 33, 78);
  for (auto strategy : {SamplingStrategy::exact(), SamplingStrategy::bucket(5), SamplingStrategy::fastrand(7)}) {
    const auto reference = spmm_sampled(a, b, strategy, tile_for(8, 4), NormMode::row(), {1, nullptr, {}});
    for (unsigned threads : {2u, 4u, 8u}) {
      for (offset_t g : {1, 4, 7, 64}) {
        ASSERT_TRUE(bitwise_equal(
            spmm_sampled(a, b, strategy, tile_for(8, g), NormMode::row(), {threads, nullptr, {}}),
            reference));
      }
    }
    ASSERT_TRUE(bitwise_equal(spmm_exact(a, b, {8, nullptr, {}}), spmm_exact(a, b)));
  }
}

TEST(FlopCount, Examples) {
  std::vector<CooEntry> coo;
  for (index_t k = 0; k < 16; ++k) coo.push_back({k / 4, k % 4, 1.0f});
  const auto m16 = from_coo(4, 4, coo);
  ASSERT_EQ(m16.nnz(), 16);
  EXPECT_EQ(flop_count(m16, SamplingStrategy::exact(), 4), 64u);

  std::vector<CooEntry> rows;
  const index_t lens[] = {5, 2, 9};
  for (index_t r = 0; r < 3; ++r)
    for (index_t c = 0; c < lens[r]; ++c) rows.push_back({r, c, 1.0f});
  const auto m = from_coo(3, 9, rows);
  EXPECT_EQ(flop_count(m, SamplingStrategy::bucket(4), 2), 20u);
  EXPECT_EQ(flop_count(m, SamplingStrategy::fastrand(4), 2), 20u);
  EXPECT_EQ(flop_ratio(m, SamplingStrategy::bucket(4), 2), sampling_rate(m, 4));
}

TEST(TileConfig, Footprint) {
  EXPECT_EQ((TileConfig{4, 512, 49152}.footprint_bytes()), 16384u);
  EXPECT_EQ((TileConfig{INT64_MAX, INT64_MAX, 1}.footprint_bytes()), UINT64_MAX);
  EXPECT_NO_THROW((TileConfig{8, 768, 49152}.check()));
  EXPECT_THROW((TileConfig{8, 769, 49152}.check()), Error);
  EXPECT_EQ(TileConfig::for_strategy(SamplingStrategy::fastrand(64)).s_width, 64);
}
