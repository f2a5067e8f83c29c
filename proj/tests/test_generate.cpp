#include <gtest/gtest.h>

#include <algorithm>

#include "essmm/generate.hpp"

using namespace essmm;

namespace {

double mean_degree(const CsrMatrix& m) { return static_cast<double>(m.nnz()) / m.n_rows(); }

}  // namespace

TEST(GenSynthetic, Deterministic) {
  const auto a = gen_synthetic(GraphKind::ErdosRenyi, 1000, 10.0, 42);
  const auto b = gen_synthetic(GraphKind::ErdosRenyi, 1000, 10.0, 42);
  EXPECT_EQ(a, b);
  const auto c = gen_synthetic(GraphKind::PowerLaw, 1000, 10.0, 7);
  EXPECT_EQ(c, gen_synthetic(GraphKind::PowerLaw, 1000, 10.0, 7));
  EXPECT_NE(c, gen_synthetic(GraphKind::PowerLaw, 1000, 10.0, 8));
}

TEST(GenSynthetic, ErdosRenyiMeanDegree) {
  const auto m = gen_synthetic(GraphKind::ErdosRenyi, 1000, 10.0, 42);
  EXPECT_GE(mean_degree(m), 9.0);
  EXPECT_LE(mean_degree(m), 11.0);
  EXPECT_TRUE(validate(m).empty());
}

TEST(GenSynthetic, PowerLawHeavyTail) {
  const auto m = gen_synthetic(GraphKind::PowerLaw, 1000, 10.0, 7);
  ASSERT_TRUE(validate(m).empty());
  std::vector<offset_t> deg(m.n_rows());
  for (index_t i = 0; i < m.n_rows(); ++i) deg[i] = m.row_nnz(i);
  const double mean = std::accumulate(deg.begin(), deg.end(), 0.0) / deg.size();
  EXPECT_GT(static_cast<double>(*std::max_element(deg.begin(), deg.end())), 3.0 * mean);
}

TEST(GenSynthetic, MeanDegreeWithinTenPercent) {
  for (GraphKind kind : {GraphKind::ErdosRenyi, GraphKind::PowerLaw}) {
    for (double avg : {1.0, 5.0, 20.0, 100.0, 400.0}) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto m = gen_synthetic(kind, 1000, avg, seed);
        ASSERT_TRUE(validate(m).empty());
        EXPECT_NEAR(mean_degree(m), avg, 0.1 * avg)
            << "kind=" << static_cast<int>(kind) << " avg=" << avg << " seed=" << seed;
      }
    }
  }
}

TEST(GenSynthetic, NoSelfLoopsUnitValues) {
  const auto m = gen_synthetic(GraphKind::PowerLaw, 300, 20.0, 5);
  for (index_t i = 0; i < m.n_rows(); ++i)
    for (index_t c : m.row_cols(i)) EXPECT_NE(c, i);
  for (float v : m.values()) EXPECT_EQ(v, 1.0f);
}

TEST(GenSynthetic, EdgeCases) {
  EXPECT_EQ(gen_synthetic(GraphKind::ErdosRenyi, 1, 0.0, 0).nnz(), 0);
  EXPECT_EQ(gen_synthetic(GraphKind::PowerLaw, 50, 0.0, 0).nnz(), 0);
  const auto full = gen_synthetic(GraphKind::ErdosRenyi, 5, 4.5, 0);
  EXPECT_EQ(full.nnz(), 20);
  EXPECT_THROW(gen_synthetic(GraphKind::ErdosRenyi, 10, 10.0, 0), Error);
  EXPECT_THROW(gen_synthetic(GraphKind::PowerLaw, 0, 1.0, 0), Error);
  EXPECT_THROW(gen_synthetic(GraphKind::PowerLaw, 10, -1.0, 0), Error);
  EXPECT_THROW(parse_graph_kind("grid"), Error);
}
