#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "essmm/csr.hpp"
#include "essmm/error.hpp"
#include "essmm/io.hpp"
#include "essmm/sampler.hpp"
#include "essmm/spmm.hpp"

namespace essmm {

enum class Aggregator { Sum, Mean };
enum class Activation { None, Relu };

inline const char* to_string(Aggregator a) { return a == Aggregator::Sum ? "sum" : "mean"; }
inline const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "none"; }

inline Aggregator parse_aggregator(std::string_view s) {
  if (s == "sum") return Aggregator::Sum;
  if (s == "mean") return Aggregator::Mean;
  throw Error(ErrorKind::InvalidArgument, "unknown aggregator '" + std::string(s) + "'");
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "none") return Activation::None;
  throw Error(ErrorKind::InvalidArgument, "unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
  DenseMatrix weight;  // in_dim x out_dim
  Aggregator aggregator = Aggregator::Sum;
  Activation activation = Activation::None;
  std::optional<std::vector<float>> bias;  // length out_dim

  index_t in_dim() const noexcept { return weight.rows(); }
  index_t out_dim() const noexcept { return weight.cols(); }
};

struct GnnModel {
  std::vector<LayerSpec> layers;

  void check() const {
    if (layers.empty()) throw Error(ErrorKind::InvalidArgument, "model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.bias && layer.bias->size() != static_cast<std::size_t>(layer.out_dim())) {
        throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " bias has " +
                                                  std::to_string(layer.bias->size()) +
                                                  " entries, expected " +
                                                  std::to_string(layer.out_dim()));
      }
      if (l > 0 && layers[l - 1].out_dim() != layer.in_dim()) {
        throw Error(ErrorKind::ShapeMismatch,
                    "layer " + std::to_string(l) + " expects " + std::to_string(layer.in_dim()) +
                        " inputs but layer " + std::to_string(l - 1) + " produces " +
                        std::to_string(layers[l - 1].out_dim()));
      }
    }
  }
};

struct LabeledDataset {
  CsrMatrix graph;
  DenseMatrix features;  // n_nodes x in_dim
  std::vector<index_t> labels;
  std::vector<index_t> eval_mask;

  void check() const {
    if (graph.n_rows() != graph.n_cols()) {
      throw Error(ErrorKind::ShapeMismatch, "graph is not square");
    }
    if (features.rows() != graph.n_rows()) {
      throw Error(ErrorKind::ShapeMismatch, "features have " + std::to_string(features.rows()) +
                                                " rows for " + std::to_string(graph.n_rows()) +
                                                " nodes");
    }
    if (labels.size() != static_cast<std::size_t>(graph.n_rows())) {
      throw Error(ErrorKind::ShapeMismatch, "labels have " + std::to_string(labels.size()) +
                                                " entries for " + std::to_string(graph.n_rows()) +
                                                " nodes");
    }
  }
};

struct InferOptions {
  unsigned threads = 1;
  NormDivisor mean_divisor = NormDivisor::SampledCount;
};

struct LayerStats {
  double gemm_ms = 0.0;
  double spmm_ms = 0.0;
  SpmmCounters counters;
};

// C = H * W, each output row accumulated over k in order.
inline DenseMatrix gemm(const DenseMatrix& h, const DenseMatrix& w, unsigned threads = 1) {
  if (h.cols() != w.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "H has " + std::to_string(h.cols()) +
                                              " columns but W has " + std::to_string(w.rows()) +
                                              " rows");
  }
  DenseMatrix c(h.rows(), w.cols());
  const unsigned workers = std::min<unsigned>(detail::resolve_threads(threads),
                                              static_cast<unsigned>(std::max<index_t>(1, h.rows())));
  detail::ChunkQueue queue(h.rows(), 64);
  detail::run_workers(workers, [&](unsigned) {
    offset_t begin, end;
    while (queue.next(begin, end)) {
      for (auto i = static_cast<index_t>(begin); i < end; ++i) {
        const auto hrow = h.row(i);
        detail::accumulate_row(
            h.cols(), [&](offset_t k) { return std::pair{hrow[k], static_cast<index_t>(k)}; }, w,
            c.row(i).data());
      }
    }
  });
  return c;
}

// One layer: act(A_sampled * (H W) + bias). Mean aggregation divides each
// row by its retained neighbour count.
inline DenseMatrix gnn_layer(const CsrMatrix& a, const DenseMatrix& h, const LayerSpec& layer,
                             const SamplingStrategy& strategy, const TileConfig& tile,
                             const InferOptions& opt = {}, LayerStats* stats = nullptr) {
  using Clock = std::chrono::steady_clock;
  if (h.cols() != layer.in_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "features have " + std::to_string(h.cols()) +
                                              " columns but weight expects " +
                                              std::to_string(layer.in_dim()));
  }
  if (layer.bias && layer.bias->size() != static_cast<std::size_t>(layer.out_dim())) {
    throw Error(ErrorKind::ShapeMismatch, "bias length does not match weight columns");
  }
  const auto t0 = Clock::now();
  const DenseMatrix hw = gemm(h, layer.weight, opt.threads);
  const auto t1 = Clock::now();

  const NormMode norm = layer.aggregator == Aggregator::Mean ? NormMode::row(opt.mean_divisor)
                                                             : NormMode::none();
  SpmmCounters counters;
  ExecOptions exec{opt.threads, &counters, {}};
  DenseMatrix out = spmm_sampled(a, hw, strategy, tile, norm, exec);
  const auto t2 = Clock::now();

  for (index_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    if (layer.bias) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += (*layer.bias)[j];
    }
    if (layer.activation == Activation::Relu) {
      for (auto& v : row) v = std::max(v, 0.0f);
    }
  }
  if (stats) {
    stats->gemm_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    stats->spmm_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    stats->counters = counters;
  }
  return out;
}

inline DenseMatrix forward(const GnnModel& model, const LabeledDataset& data,
                           const SamplingStrategy& strategy, const TileConfig& tile,
                           const InferOptions& opt = {}, std::vector<LayerStats>* stats = nullptr) {
  model.check();
  if (data.features.cols() != model.layers.front().in_dim()) {
    throw Error(ErrorKind::ShapeMismatch,
                "features have " + std::to_string(data.features.cols()) +
                    " columns but layer 0 weight expects " +
                    std::to_string(model.layers.front().in_dim()));
  }
  if (stats) stats->assign(model.layers.size(), {});
  DenseMatrix h = data.features;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = gnn_layer(data.graph, h, model.layers[l], strategy, tile, opt,
                  stats ? &(*stats)[l] : nullptr);
  }
  return h;
}

// Fraction of masked nodes whose arg-max logit (lowest index on ties)
// equals the label.
inline double accuracy(const DenseMatrix& logits, std::span<const index_t> labels,
                       std::span<const index_t> eval_mask) {
  if (eval_mask.empty()) throw Error(ErrorKind::InvalidArgument, "empty evaluation mask");
  if (labels.size() != static_cast<std::size_t>(logits.rows())) {
    throw Error(ErrorKind::ShapeMismatch, "labels have " + std::to_string(labels.size()) +
                                              " entries for " + std::to_string(logits.rows()) +
                                              " logit rows");
  }
  std::size_t correct = 0;
  for (index_t node : eval_mask) {
    if (node < 0 || node >= logits.rows()) {
      throw Error(ErrorKind::OutOfRange, "mask node " + std::to_string(node) + " out of range");
    }
    if (labels[node] < 0 || labels[node] >= logits.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "label " + std::to_string(labels[node]) + " of node " +
                                                std::to_string(node) + " exceeds " +
                                                std::to_string(logits.cols()) + " classes");
    }
    const auto row = logits.row(node);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();  // first max
    if (best == labels[node]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_mask.size());
}

// --- model manifest --------------------------------------------------------

// {"layers": [{"weight": "w0.esmm", "bias": "b0.esmm", "aggregator": "mean",
//              "activation": "relu"}, ...]}
// Relative paths resolve against the manifest's directory.
inline GnnModel load_model(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  auto in = detail::open_in(manifest_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, manifest_path + ": " + e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).string();
  };

  if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array()) {
    throw Error(ErrorKind::Parse, manifest_path + ": expected an object with a 'layers' array");
  }
  GnnModel model;
  for (std::size_t l = 0; l < doc["layers"].size(); ++l) {
    const auto& entry = doc["layers"][l];
    const std::string where = manifest_path + ": layers[" + std::to_string(l) + "]";
    if (!entry.is_object() || !entry.contains("weight") || !entry["weight"].is_string()) {
      throw Error(ErrorKind::Parse, where + " needs a 'weight' path");
    }
    LayerSpec layer;
    layer.weight = load_dense(resolve(entry["weight"].get<std::string>()));
    layer.aggregator = parse_aggregator(entry.value("aggregator", std::string("sum")));
    layer.activation = parse_activation(entry.value("activation", std::string("none")));
    if (entry.contains("bias") && !entry["bias"].is_null()) {
      const DenseMatrix b = load_dense(resolve(entry["bias"].get<std::string>()));
      if (b.size() != static_cast<std::size_t>(layer.out_dim()) || (b.rows() != 1 && b.cols() != 1)) {
        throw Error(ErrorKind::ShapeMismatch,
                    where + " bias is " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ", expected a vector of " +
                        std::to_string(layer.out_dim()));
      }
      layer.bias.emplace(b.data().begin(), b.data().end());
    }
    model.layers.push_back(std::move(layer));
  }
  model.check();
  return model;
}

// Writes weights next to the manifest as layer<i>_weight.esmm / layer<i>_bias.esmm.
inline void save_model(const std::string& manifest_path, const GnnModel& model) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(manifest_path).parent_path();
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    nlohmann::json entry;
    const std::string wname = "layer" + std::to_string(l) + "_weight.esmm";
    save_dense((base / wname).string(), layer.weight);
    entry["weight"] = wname;
    if (layer.bias) {
      const std::string bname = "layer" + std::to_string(l) + "_bias.esmm";
      save_dense((base / bname).string(),
                 DenseMatrix(1, static_cast<index_t>(layer.bias->size()), *layer.bias));
      entry["bias"] = bname;
    }
    entry["aggregator"] = to_string(layer.aggregator);
    entry["activation"] = to_string(layer.activation);
    layers.push_back(entry);
  }
  auto out = detail::open_out(manifest_path);
  out << nlohmann::json{{"layers", layers}}.dump(2) << '\n';
}

struct DatasetPaths {
  std::string graph;
  std::string features;
  std::string labels;
  std::string mask;
};

inline LabeledDataset load_dataset(const DatasetPaths& paths, const EdgeListOptions& edge_opts = {}) {
  LabeledDataset data;
  data.graph = load_edge_list(paths.graph, edge_opts);
  data.features = load_dense(paths.features);
  if (data.features.rows() != data.graph.n_rows()) {
    throw Error(ErrorKind::ShapeMismatch,
                "features '" + paths.features + "' have " + std::to_string(data.features.rows()) +
                    " rows but graph '" + paths.graph + "' has " +
                    std::to_string(data.graph.n_rows()) + " nodes");
  }
  data.labels = load_labels(paths.labels, data.graph.n_rows());
  data.eval_mask = load_mask(paths.mask, data.graph.n_rows());
  data.check();
  return data;
}

// --- synthetic node-classification task -----------------------------------

struct SyntheticTaskOptions {
  index_t feature_dim = 32;
  index_t hidden_dim = 16;
  index_t n_classes = 4;
  Aggregator aggregator = Aggregator::Mean;
  double mask_fraction = 0.5;
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  GnnModel model;
  LabeledDataset data;
};

// Random 2-layer model and Gaussian features on `graph`; labels are the
// arg-max of the exact-inference logits, so exact accuracy is 1.0 and any
// drop measures what edge sampling changes.
inline SyntheticTask make_synthetic_task(CsrMatrix graph, const SyntheticTaskOptions& opt) {
  if (opt.feature_dim < 1 || opt.hidden_dim < 1 || opt.n_classes < 2) {
    throw Error(ErrorKind::InvalidArgument, "task needs feature/hidden dims >= 1 and >= 2 classes");
  }
  std::mt19937_64 rng(opt.seed);
  auto glorot = [&](index_t in, index_t out) {
    const float limit = std::sqrt(6.0f / static_cast<float>(in + out));
    std::uniform_real_distribution<float> u(-limit, limit);
    DenseMatrix w(in, out);
    for (auto& v : w.data()) v = u(rng);
    return w;
  };

  SyntheticTask task;
  task.model.layers.push_back(
      {glorot(opt.feature_dim, opt.hidden_dim), opt.aggregator, Activation::Relu, std::nullopt});
  task.model.layers.push_back(
      {glorot(opt.hidden_dim, opt.n_classes), opt.aggregator, Activation::None, std::nullopt});

  const index_t n = graph.n_rows();
  task.data.features = DenseMatrix(n, opt.feature_dim);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : task.data.features.data()) v = normal(rng);

  std::bernoulli_distribution pick(opt.mask_fraction);
  for (index_t i = 0; i < n; ++i)
    if (pick(rng)) task.data.eval_mask.push_back(i);
  if (task.data.eval_mask.empty() && n > 0) task.data.eval_mask.push_back(0);

  task.data.graph = std::move(graph);
  task.data.labels.assign(static_cast<std::size_t>(n), 0);
  const DenseMatrix logits = forward(task.model, task.data, SamplingStrategy::exact(),
                                     TileConfig::for_strategy(SamplingStrategy::exact()));
  for (index_t i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    task.data.labels[i] = static_cast<index_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return task;
}

}  // namespace essmm
