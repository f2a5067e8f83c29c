#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "essmm/bench.hpp"
#include "essmm/generate.hpp"
#include "essmm/gnn.hpp"
#include "test_helpers.hpp"

using namespace essmm;
namespace fs = std::filesystem;

namespace {

DenseMatrix identity_dense(index_t n) {
  DenseMatrix m(n, n);
  for (index_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

const TileConfig kWideTile{4, 1024, 1ull << 40};

// Dense double-precision forward pass: act(norm(A) (H W) + b) per layer.
std::vector<double> dense_forward(const GnnModel& model, const LabeledDataset& data) {
  const auto n = static_cast<std::size_t>(data.graph.n_rows());
  auto a = oracle::densify(data.graph);
  auto h = oracle::to_double(data.features.data());
  std::size_t width = static_cast<std::size_t>(data.features.cols());
  for (const auto& layer : model.layers) {
    const auto out = static_cast<std::size_t>(layer.out_dim());
    const auto hw = oracle::dense_mul(h, oracle::to_double(layer.weight.data()), n, width, out);
    auto z = oracle::dense_mul(a, hw, n, n, out);
    if (layer.aggregator == Aggregator::Mean) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto deg = static_cast<double>(data.graph.row_nnz(static_cast<index_t>(i)));
        if (deg > 0)
          for (std::size_t j = 0; j < out; ++j) z[i * out + j] /= deg;
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out; ++j) {
        if (layer.bias) z[i * out + j] += (*layer.bias)[j];
        if (layer.activation == Activation::Relu) z[i * out + j] = std::max(0.0, z[i * out + j]);
      }
    h = std::move(z);
    width = out;
  }
  return h;
}

}  // namespace

TEST(GnnLayer, IdentityEverything) {
  const auto h = random_dense(5, 3, 1);
  const LayerSpec layer{identity_dense(3), Aggregator::Sum, Activation::None, std::nullopt};
  const auto out = gnn_layer(CsrMatrix::identity(5), h, layer, SamplingStrategy::exact(), kWideTile);
  EXPECT_EQ(out, h);
}

TEST(GnnLayer, Relu) {
  const LayerSpec layer{identity_dense(2), Aggregator::Sum, Activation::Relu, std::nullopt};
  const auto out = gnn_layer(CsrMatrix::identity(1), DenseMatrix(1, 2, {-1, 2}), layer,
                             SamplingStrategy::exact(), kWideTile);
  EXPECT_EQ(out, DenseMatrix(1, 2, {0, 2}));
}

TEST(GnnLayer, MeanOverSelfAndNeighbour) {
  const auto a = from_coo(2, 2, {{0, 0, 1.0f}, {0, 1, 1.0f}, {1, 0, 1.0f}, {1, 1, 1.0f}});
  const LayerSpec layer{identity_dense(1), Aggregator::Mean, Activation::None, std::nullopt};
  const auto out = gnn_layer(a, DenseMatrix(2, 1, {2, 4}), layer, SamplingStrategy::exact(), kWideTile);
  EXPECT_EQ(out, DenseMatrix(2, 1, {3, 3}));
}

TEST(GnnLayer, BiasAndShapeErrors) {
  LayerSpec layer{identity_dense(2), Aggregator::Sum, Activation::None, std::vector<float>{1, -1}};
  const auto out = gnn_layer(CsrMatrix::identity(1), DenseMatrix(1, 2, {5, 5}), layer,
                             SamplingStrategy::exact(), kWideTile);
  EXPECT_EQ(out, DenseMatrix(1, 2, {6, 4}));
  EXPECT_THROW(gnn_layer(CsrMatrix::identity(1), DenseMatrix(1, 3), layer, SamplingStrategy::exact(), kWideTile),
               Error);
  layer.bias = std::vector<float>{1};
  EXPECT_THROW(gnn_layer(CsrMatrix::identity(1), DenseMatrix(1, 2), layer, SamplingStrategy::exact(), kWideTile),
               Error);
}

TEST(Forward, MatchesDenseOracle) {
  for (Aggregator agg : {Aggregator::Sum, Aggregator::Mean}) {
    auto task = make_synthetic_task(gen_synthetic(GraphKind::PowerLaw, 300, 8.0, 3),
                                    {12, 10, 5, agg, 0.5, 9});
    task.model.layers[0].bias = std::vector<float>(10, 0.1f);
    const auto logits = forward(task.model, task.data, SamplingStrategy::exact(), kWideTile);
    const auto want = dense_forward(task.model, task.data);
    double worst = 0.0;
    for (std::size_t k = 0; k < want.size(); ++k) worst = std::max(worst, std::abs(logits.data()[k] - want[k]));
    EXPECT_LE(worst, 1e-4) << to_string(agg);
  }
}

TEST(Forward, FullWidthBucketIsBitwiseExact) {
  const auto task = make_synthetic_task(gen_synthetic(GraphKind::PowerLaw, 400, 12.0, 5), {});
  const offset_t s = task.data.graph.max_row_nnz();
  const auto bucket = SamplingStrategy::bucket(s);
  const auto exact = forward(task.model, task.data, SamplingStrategy::exact(), kWideTile);
  const auto sampled = forward(task.model, task.data, bucket, TileConfig::for_strategy(bucket, 4, 1ull << 40));
  EXPECT_EQ(digest(exact), digest(sampled));
  EXPECT_EQ(accuracy(exact, task.data.labels, task.data.eval_mask),
            accuracy(sampled, task.data.labels, task.data.eval_mask));
  // Labels are the exact model's predictions.
  EXPECT_EQ(accuracy(exact, task.data.labels, task.data.eval_mask), 1.0);
}

TEST(Forward, PureAndThreadInvariant) {
  const auto task = make_synthetic_task(gen_synthetic(GraphKind::ErdosRenyi, 500, 15.0, 1), {});
  const auto strat = SamplingStrategy::fastrand(4);
  const auto tile = TileConfig::for_strategy(strat);
  const auto first = forward(task.model, task.data, strat, tile);
  EXPECT_EQ(forward(task.model, task.data, strat, tile), first);
  EXPECT_EQ(forward(task.model, task.data, strat, tile, {8, NormDivisor::SampledCount}), first);
}

TEST(Forward, MeanEqualsSumOverDegree) {
  auto task = make_synthetic_task(gen_synthetic(GraphKind::PowerLaw, 200, 6.0, 2), {8, 4, 3, Aggregator::Sum, 1.0, 2});
  // Self-loops guarantee no empty rows.
  EdgeList el{task.data.graph.n_rows(), {}};
  for (const auto& e : to_coo(task.data.graph)) el.edges.emplace_back(e.row, e.col);
  task.data.graph = edge_list_to_csr(el, {std::nullopt, false, true});

  const auto h = task.data.features;
  LayerSpec sum{task.model.layers[0].weight, Aggregator::Sum, Activation::None, std::nullopt};
  LayerSpec mean = sum;
  mean.aggregator = Aggregator::Mean;
  const auto s = gnn_layer(task.data.graph, h, sum, SamplingStrategy::exact(), kWideTile);
  const auto m = gnn_layer(task.data.graph, h, mean, SamplingStrategy::exact(), kWideTile);
  for (index_t i = 0; i < s.rows(); ++i)
    for (index_t j = 0; j < s.cols(); ++j)
      ASSERT_NEAR(m(i, j), s(i, j) / task.data.graph.row_nnz(i), 1e-6);
}

TEST(Accuracy, Examples) {
  const std::vector<index_t> labels{0, 1, 2, 1};
  const std::vector<index_t> mask{0, 1, 2, 3};
  DenseMatrix onehot(4, 3);
  for (index_t i = 0; i < 4; ++i) onehot(i, labels[i]) = 1.0f;
  EXPECT_EQ(accuracy(onehot, labels, mask), 1.0);
  EXPECT_EQ(accuracy(DenseMatrix(4, 3), std::vector<index_t>(4, 0), mask), 1.0);
  DenseMatrix half = onehot;
  half(2, 2) = 0.0f;  // tie -> class 0, wrong
  half(3, 0) = 5.0f;  // wrong
  EXPECT_EQ(accuracy(half, labels, mask), 0.5);
  EXPECT_THROW(accuracy(onehot, labels, std::vector<index_t>{}), Error);
  EXPECT_THROW(accuracy(onehot, std::vector<index_t>{0, 1}, mask), Error);
}

TEST(Accuracy, InvariantUnderPositiveScaling) {
  const auto logits = random_dense(50, 4, 8);
  std::vector<index_t> labels(50);
  for (index_t i = 0; i < 50; ++i) labels[i] = i % 4;
  std::vector<index_t> mask(50);
  std::iota(mask.begin(), mask.end(), 0);
  for (float scale : {0.001f, 3.0f, 1000.0f}) {
    DenseMatrix scaled = logits;
    for (auto& v : scaled.data()) v *= scale;
    EXPECT_EQ(accuracy(scaled, labels, mask), accuracy(logits, labels, mask));
  }
}

TEST(ModelManifest, SaveLoadRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "essmm_manifest_test";
  fs::create_directories(dir);
  auto task = make_synthetic_task(gen_synthetic(GraphKind::ErdosRenyi, 50, 4.0, 1), {6, 5, 3, Aggregator::Sum, 0.5, 4});
  task.model.layers[1].bias = std::vector<float>{0.5f, -0.25f, 1.0f};
  const auto manifest = (dir / "model.json").string();
  save_model(manifest, task.model);
  const auto loaded = load_model(manifest);
  ASSERT_EQ(loaded.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(loaded.layers[l].weight, task.model.layers[l].weight);
    EXPECT_EQ(loaded.layers[l].aggregator, task.model.layers[l].aggregator);
    EXPECT_EQ(loaded.layers[l].activation, task.model.layers[l].activation);
    EXPECT_EQ(loaded.layers[l].bias, task.model.layers[l].bias);
  }

  std::ofstream(dir / "bad.json") << R"({"layers": [{"weight": "layer0_weight.esmm"}, {"weight": "layer0_weight.esmm"}]})";
  EXPECT_THROW(load_model((dir / "bad.json").string()), Error);  // 6x5 then 6x5 does not chain
  std::ofstream(dir / "junk.json") << "{not json";
  EXPECT_THROW(load_model((dir / "junk.json").string()), Error);
  fs::remove_all(dir);
}
