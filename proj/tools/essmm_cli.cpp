// essmm: command-line front end for edge-sampled SpMM experiments.
//
//   essmm gen        synthetic graph (and optionally a node-classification task)
//   essmm analyze    sampling rate per buffer width S
//   essmm spmm-bench exact vs sampled SpMM timing
//   essmm infer      GNN inference accuracy and timing
//   essmm sweep      inference over strategies x S, written as CSV
//   essmm verify     in-kernel sampling vs exact SpMM on the pre-sampled graph

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "essmm/essmm.hpp"

namespace {

using namespace essmm;

struct GraphFlags {
  std::string graph;
  bool symmetrize = false;
  bool self_loops = false;

  void add(CLI::App* app, bool required = true) {
    auto* opt = app->add_option("--graph", graph, "Edge-list file")->check(CLI::ExistingFile);
    if (required) opt->required();
    app->add_flag("--symmetrize", symmetrize, "Add the reverse of every edge");
    app->add_flag("--self-loops", self_loops, "Add (i, i) for every node");
  }

  EdgeListOptions options() const { return {std::nullopt, symmetrize, self_loops}; }
  CsrMatrix load() const { return load_edge_list(graph, options()); }
};

struct KernelFlags {
  std::string strategy = "fastrand";
  offset_t s_width = 32;
  std::uint32_t prime = kDefaultPrime;
  offset_t rows_per_block = TileConfig::kDefaultRowsPerBlock;
  std::uint64_t budget_bytes = TileConfig::kDefaultBudgetBytes;
  unsigned threads = 1;
  unsigned repeats = 10;
  std::uint64_t seed = 0;
  std::string norm_divisor = "sampled";

  void add(CLI::App* app, bool with_strategy = true) {
    if (with_strategy) {
      app->add_option("--strategy", strategy, "exact | bucket | fastrand")
          ->check(CLI::IsMember({"exact", "bucket", "fastrand"}))
          ->capture_default_str();
      app->add_option("--s-width", s_width, "Buffer width S (entries kept per row)")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
    }
    app->add_option("--prime", prime, "FastRand multiplier P'")->capture_default_str();
    app->add_option("--rows-per-block", rows_per_block, "Rows G sharing one scratch tile")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--budget-bytes", budget_bytes, "Scratch budget per tile in bytes")
        ->capture_default_str();
    app->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
    app->add_option("--repeats", repeats, "Timed repetitions")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
  }

  void add_norm(CLI::App* app) {
    app->add_option("--norm-divisor", norm_divisor,
                    "Mean aggregation divides by the sampled count or the original degree")
        ->check(CLI::IsMember({"sampled", "original"}))
        ->capture_default_str();
  }

  SamplingStrategy sampling() const { return {parse_strategy_kind(strategy), s_width, prime}; }
  TileConfig tile() const { return TileConfig::for_strategy(sampling(), rows_per_block, budget_bytes); }
  NormDivisor divisor() const {
    return norm_divisor == "original" ? NormDivisor::OriginalDegree : NormDivisor::SampledCount;
  }
};

struct TaskFlags {
  std::string model, features, labels, mask;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Model manifest (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--features", features, "Node features (ESMM dense binary)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--labels", labels, "Labels CSV node_id,label")->required()->check(CLI::ExistingFile);
    app->add_option("--mask", mask, "Evaluation node ids, one per line")
        ->required()
        ->check(CLI::ExistingFile);
  }
};

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string dataset_name(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

void print_counters(const SpmmCounters& c) {
  std::cout << "  blocks            " << c.blocks << '\n'
            << "  peak scratch      " << c.peak_scratch_bytes << " B\n"
            << "  sampled nnz       " << c.sampled_nnz << '\n'
            << "  max row iters     " << c.max_row_iterations << '\n'
            << "  stage1 / stage2   " << c.stage1_ns / 1e6 << " / " << c.stage2_ns / 1e6 << " ms\n";
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  fn(out);
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-sampled sparse x dense matrix multiplication toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic graph (edge list)");
  std::string gen_kind = "power_law", gen_out, task_dir;
  index_t gen_nodes = 10000;
  double gen_degree = 10.0;
  std::uint64_t gen_seed = 0;
  bool gen_sym = false, gen_loops = false;
  SyntheticTaskOptions task_opt;
  std::string task_agg = "mean";
  gen->add_option("--kind", gen_kind, "erdos_renyi | power_law")
      ->check(CLI::IsMember({"erdos_renyi", "power_law"}))
      ->capture_default_str();
  gen->add_option("--nodes", gen_nodes, "Node count")->capture_default_str();
  gen->add_option("--avg-degree", gen_degree, "Target mean out-degree")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output edge-list path")->required();
  gen->add_flag("--symmetrize", gen_sym, "Add the reverse of every edge");
  gen->add_flag("--self-loops", gen_loops, "Add (i, i) for every node");
  gen->add_option("--task-dir", task_dir,
                  "Also write features, labels, mask and a random 2-layer model here");
  gen->add_option("--feature-dim", task_opt.feature_dim)->capture_default_str();
  gen->add_option("--hidden-dim", task_opt.hidden_dim)->capture_default_str();
  gen->add_option("--classes", task_opt.n_classes)->capture_default_str();
  gen->add_option("--aggregator", task_agg)->check(CLI::IsMember({"sum", "mean"}))->capture_default_str();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Sampling rate for each buffer width S");
  GraphFlags analyze_graph;
  analyze_graph.add(analyze_cmd);
  std::vector<offset_t> analyze_s{16, 32, 64, 128, 256, 512};
  std::string analyze_out;
  analyze_cmd->add_option("--s-list", analyze_s, "Buffer widths")->delimiter(',')->capture_default_str();
  analyze_cmd->add_option("--out", analyze_out, "Optional CSV output");

  // spmm-bench
  auto* bench_cmd = app.add_subcommand("spmm-bench", "Time exact vs sampled SpMM");
  GraphFlags bench_graph;
  KernelFlags bench_k;
  index_t bench_cols = 128;
  std::string bench_out;
  bench_graph.add(bench_cmd);
  bench_k.add(bench_cmd);
  bench_cmd->add_option("--dense-cols", bench_cols, "Columns of the dense operand")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Optional CSV output");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "GNN inference with a sampling strategy");
  GraphFlags infer_graph;
  KernelFlags infer_k;
  TaskFlags infer_task;
  infer_graph.add(infer_cmd);
  infer_k.add(infer_cmd);
  infer_k.add_norm(infer_cmd);
  infer_k.repeats = 1;
  infer_task.add(infer_cmd);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Inference over strategies x S, CSV report");
  GraphFlags sweep_graph;
  KernelFlags sweep_k;
  TaskFlags sweep_task;
  std::vector<std::string> sweep_strategies{"bucket", "fastrand"};
  std::vector<offset_t> sweep_s{16, 32, 64, 128, 256, 512};
  std::string sweep_out, sweep_name;
  sweep_graph.add(sweep_cmd);
  sweep_k.add(sweep_cmd, false);
  sweep_k.add_norm(sweep_cmd);
  sweep_k.repeats = 1;
  sweep_task.add(sweep_cmd);
  sweep_cmd->add_option("--strategies", sweep_strategies)->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--s-list", sweep_s)->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--dataset", sweep_name, "Dataset name for the report (default: graph file stem)");
  sweep_cmd->add_option("--out", sweep_out, "CSV output path")->required();

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Check the sampled kernel against the pre-sampled graph");
  GraphFlags verify_graph;
  KernelFlags verify_k;
  index_t verify_cols = 64;
  double verify_tol = 1e-5;
  verify_graph.add(verify_cmd);
  verify_k.add(verify_cmd);
  verify_cmd->add_option("--dense-cols", verify_cols)->capture_default_str();
  verify_cmd->add_option("--tolerance", verify_tol, "Relative tolerance for FastRand")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      CsrMatrix g = gen_synthetic(parse_graph_kind(gen_kind), gen_nodes, gen_degree, gen_seed);
      if (gen_sym || gen_loops) {
        EdgeList el{g.n_rows(), {}};
        for (const auto& e : to_coo(g)) el.edges.emplace_back(e.row, e.col);
        g = edge_list_to_csr(el, {std::nullopt, gen_sym, gen_loops});
      }
      save_edge_list(gen_out, g);
      std::cout << "nodes " << g.n_rows() << "  edges " << g.nnz() << "  mean degree "
                << (g.n_rows() ? static_cast<double>(g.nnz()) / g.n_rows() : 0.0) << "  max degree "
                << g.max_row_nnz() << '\n';
      if (!task_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(task_dir);
        task_opt.aggregator = parse_aggregator(task_agg);
        task_opt.seed = gen_seed;
        const SyntheticTask task = make_synthetic_task(g, task_opt);
        const fs::path dir(task_dir);
        save_dense((dir / "features.esmm").string(), task.data.features);
        save_labels((dir / "labels.csv").string(), task.data.labels);
        save_mask((dir / "mask.txt").string(), task.data.eval_mask);
        save_model((dir / "model.json").string(), task.model);
        std::cout << "task written to " << task_dir << " (" << task.data.eval_mask.size()
                  << " evaluation nodes)\n";
      }
      return 0;
    }

    if (analyze_cmd->parsed()) {
      const CsrMatrix g = analyze_graph.load();
      const auto rows = analyze(g, analyze_s);
      std::cout << "nodes " << g.n_rows() << "  edges " << g.nnz() << "  max degree "
                << g.max_row_nnz() << '\n';
      std::cout << "S\tsampling_rate\n";
      for (const auto& r : rows) {
        char pct[32];
        std::snprintf(pct, sizeof(pct), "%.1f%%", 100.0 * r.sampling_rate);
        std::cout << r.s_width << '\t' << pct << '\n';
      }
      if (!analyze_out.empty()) write_file(analyze_out, [&](std::ostream& os) { write_rates_csv(os, rows); });
      return 0;
    }

    if (bench_cmd->parsed()) {
      const CsrMatrix g = bench_graph.load();
      SpmmBenchConfig cfg;
      cfg.dataset = dataset_name(bench_graph.graph);
      cfg.dense_cols = bench_cols;
      cfg.strategy = bench_k.sampling();
      cfg.tile = bench_k.tile();
      cfg.repeats = bench_k.repeats;
      cfg.threads = bench_k.threads;
      cfg.seed = bench_k.seed;
      const auto r = spmm_bench(g, cfg);
      std::cout << "strategy          " << describe(cfg.strategy) << '\n'
                << "tile              G=" << cfg.tile.rows_per_block << " S=" << cfg.tile.s_width
                << " footprint=" << cfg.tile.footprint_bytes() << " B budget=" << cfg.tile.budget_bytes << " B\n"
                << "sampling rate     " << r.row.sampling_rate << '\n'
                << "flop ratio        " << r.row.flop_ratio << '\n'
                << "exact ms          " << r.exact_ms << '\n'
                << "sampled ms        " << r.row.spmm_ms << '\n'
                << "speedup           " << r.row.speedup_vs_exact << "x\n"
                << "max |diff|        " << r.max_abs_diff << '\n'
                << "output checksum   " << hex(r.sampled_digest) << '\n'
                << "budget / balance  " << (r.budget_ok ? "ok" : "VIOLATED") << " / "
                << (r.load_balance_ok ? "ok" : "VIOLATED") << '\n';
      print_counters(r.counters);
      if (!bench_out.empty()) {
        write_file(bench_out, [&](std::ostream& os) { write_sweep_csv(os, std::span(&r.row, 1)); });
      }
      return r.budget_ok && r.load_balance_ok ? 0 : 1;
    }

    if (infer_cmd->parsed()) {
      const LabeledDataset data = load_dataset(
          {infer_graph.graph, infer_task.features, infer_task.labels, infer_task.mask},
          infer_graph.options());
      const GnnModel model = load_model(infer_task.model);
      InferConfig cfg{infer_k.sampling(), infer_k.tile(), infer_k.threads, infer_k.repeats,
                      infer_k.divisor()};
      const auto r = infer(model, data, cfg);
      std::cout << "strategy          " << describe(cfg.strategy) << '\n'
                << "mean divisor      " << to_string(cfg.mean_divisor) << '\n'
                << "accuracy          " << r.accuracy << '\n';
      for (std::size_t l = 0; l < r.layer_spmm_ms.size(); ++l) {
        std::cout << "layer " << l << " spmm ms    " << r.layer_spmm_ms[l] << '\n';
      }
      std::cout << "spmm ms (total)   " << r.spmm_ms << '\n'
                << "forward ms        " << r.total_ms << '\n'
                << "logits checksum   " << hex(r.logits_digest) << '\n';
      return 0;
    }

    if (sweep_cmd->parsed()) {
      const LabeledDataset data = load_dataset(
          {sweep_graph.graph, sweep_task.features, sweep_task.labels, sweep_task.mask},
          sweep_graph.options());
      const GnnModel model = load_model(sweep_task.model);
      SweepConfig cfg;
      cfg.dataset = sweep_name.empty() ? dataset_name(sweep_graph.graph) : sweep_name;
      cfg.strategies.clear();
      for (const auto& s : sweep_strategies) cfg.strategies.push_back(parse_strategy_kind(s));
      cfg.s_list = sweep_s;
      cfg.prime = sweep_k.prime;
      cfg.rows_per_block = sweep_k.rows_per_block;
      cfg.budget_bytes = sweep_k.budget_bytes;
      cfg.threads = sweep_k.threads;
      cfg.repeats = sweep_k.repeats;
      cfg.mean_divisor = sweep_k.divisor();
      const auto rows = sweep(model, data, cfg);
      write_file(sweep_out, [&](std::ostream& os) { write_sweep_csv(os, rows); });
      write_sweep_csv(std::cout, rows);
      return 0;
    }

    if (verify_cmd->parsed()) {
      const CsrMatrix g = verify_graph.load();
      VerifyConfig cfg{verify_k.sampling(), verify_k.tile(), verify_cols, verify_k.threads,
                       verify_k.seed, verify_tol};
      const auto r = verify(g, cfg);
      std::cout << "strategy            " << describe(cfg.strategy) << '\n'
                << "rows compared       " << r.rows_compared << '\n'
                << "bitwise equal       " << (r.bitwise_equal ? "yes" : "no") << '\n'
                << "max relative diff   " << r.max_rel_diff << '\n'
                << "duplicate-position rows (not compared) " << r.rows_with_duplicates << '\n'
                << "budget              " << (r.budget_ok ? "ok" : "VIOLATED") << '\n'
                << "load balance        " << (r.load_balance_ok ? "ok" : "VIOLATED") << '\n';
      print_counters(r.counters);
      std::cout << (r.pass ? "PASS" : "FAIL") << '\n';
      return r.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "essmm: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
