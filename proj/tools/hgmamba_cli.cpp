#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hgmamba/checkpoint.hpp"
#include "hgmamba/config.hpp"
#include "hgmamba/costmodel.hpp"
#include "hgmamba/datakit.hpp"
#include "hgmamba/gradcheck.hpp"
#include "hgmamba/training.hpp"

namespace {

using namespace hgmamba;

void parse_grid(const std::string& text, std::size_t* rows,
                std::size_t* cols) {
  const std::size_t x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= text.size()) {
    throw std::invalid_argument("grid must look like 14x14, got '" + text +
                                "'");
  }
  *rows = std::stoull(text.substr(0, x));
  *cols = std::stoull(text.substr(x + 1));
  if (*rows == 0 || *cols == 0) {
    throw std::invalid_argument("grid sides must be positive");
  }
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::string metrics_report(const Metrics& m, const std::string& split) {
  std::ostringstream os;
  os.precision(17);
  os << "split=" << split << "\n";
  os << "n_samples=" << m.n_samples << "\n";
  os << "n_classes=" << m.n_classes << "\n";
  os << "acc=" << m.acc << "\n";
  os << "macro_f1=" << m.macro_f1 << "\n";
  if (m.has_auc) {
    os << "auc=" << m.auc << "\n";
  } else {
    os << "auc=absent\n";
  }
  return os.str();
}

int cmd_synth(const std::string& out_dir, std::size_t bags,
              const std::string& grid, std::size_t dim, std::size_t classes,
              double motif, bool high_order, std::uint64_t seed,
              const std::string& split) {
  SynthConfig cfg;
  parse_grid(grid, &cfg.rows, &cfg.cols);
  cfg.dim = dim;
  cfg.n_classes = classes;
  cfg.motif_strength = motif;
  cfg.high_order = high_order;
  cfg.seed = seed;

  std::size_t n_train = 0, n_val = 0, n_test = 0;
  if (!split.empty()) {
    const auto parts = parse_list(split);
    if (parts.size() != 3) {
      throw std::invalid_argument("--split wants train,val,test counts");
    }
    n_train = parts[0];
    n_val = parts[1];
    n_test = parts[2];
  } else {
    n_val = bags * 15 / 100;
    n_test = bags * 15 / 100;
    n_train = bags - n_val - n_test;
  }
  generate_dataset(cfg, n_train, n_val, n_test, out_dir);
  std::cout << "wrote " << (n_train + n_val + n_test) << " bags to "
            << out_dir << " (train=" << n_train << " val=" << n_val
            << " test=" << n_test << ")\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir) {
  RunConfig cfg = load_config(config_path);
  cfg.model.validate();
  cfg.train.validate();
  const Dataset ds = load_dataset(data_dir);
  TrainResult result = train(ds, cfg.model, cfg.train);

  std::filesystem::create_directories(out_dir);
  save_checkpoint(out_dir + "/checkpoint.hgc", cfg, result.best_params);
  write_text(out_dir + "/history.csv", history_csv(result.history));

  std::cout << "epochs=" << result.history.size() << "\n";
  std::cout << "best_epoch=" << result.best_epoch << "\n";
  std::cout << "best_val_score=" << result.best_score << "\n";
  std::cout << "checkpoint=" << out_dir << "/checkpoint.hgc\n";
  std::cout << "history=" << out_dir << "/history.csv\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt_path,
             const std::string& split, const std::string& report_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset ds = load_dataset(data_dir);
  const std::vector<TileBag>* bags = nullptr;
  if (split == "train") {
    bags = &ds.train;
  } else if (split == "val") {
    bags = &ds.val;
  } else if (split == "test") {
    bags = &ds.test;
  } else {
    throw std::invalid_argument("--split must be train|val|test");
  }
  const Metrics m =
      evaluate(*bags, ckpt.config.model, ckpt.params, ckpt.config.train.seed);
  const std::string report = metrics_report(m, split);
  std::cout << report;
  write_text(report_path, report);
  return 0;
}

int cmd_gradcheck(const std::string& size) {
  const auto results = run_gradcheck(size);
  std::cout << render_gradcheck(results);
  const bool ok = gradcheck_all_pass(results);
  std::cout << (ok ? "all gradients ok\n" : "gradient check FAILED\n");
  return ok ? 0 : 1;
}

int cmd_bench(const std::string& n_list, std::size_t dim,
              const std::string& out_dir, const std::string& k_list,
              const std::string& layer_list, bool sweep_strategies) {
  const auto ns = parse_list(n_list);
  if (ns.empty()) throw std::invalid_argument("--n-list is empty");
  std::filesystem::create_directories(out_dir);

  ModelConfig base;
  base.d = dim;
  std::string model_curve = "n\tflops\n";
  std::string attn_curve = "n\tflops\n";
  std::string reports;
  std::printf("%10s %16s %16s %8s\n", "n", "model_flops", "attention_flops",
              "ratio");
  for (const std::size_t n : ns) {
    std::size_t rows = 0, cols = 0;
    grid_shape_for(n, &rows, &cols);
    const CostReport rep = cost_model(base, analytic_stats(base, rows, cols));
    model_curve += std::to_string(n) + "\t" + std::to_string(rep.total) + "\n";
    attn_curve +=
        std::to_string(n) + "\t" + std::to_string(rep.attention_flops) + "\n";
    std::printf("%10zu %16llu %16llu %8.3f\n", n,
                static_cast<unsigned long long>(rep.total),
                static_cast<unsigned long long>(rep.attention_flops),
                static_cast<double>(rep.attention_flops) /
                    static_cast<double>(rep.total));
    reports += render_cost_report(rep);
    reports += "\n";
  }
  write_text(out_dir + "/curve_model.tsv", model_curve);
  write_text(out_dir + "/curve_attention.tsv", attn_curve);
  write_text(out_dir + "/bench_reports.txt", reports);

  // Optional ablation sweeps: one report block per configuration.
  std::string ablation;
  const auto sweep_one = [&ablation, &ns](ModelConfig cfg,
                                          const std::string& label) {
    std::size_t rows = 0, cols = 0;
    grid_shape_for(ns.front(), &rows, &cols);
    const CostReport rep = cost_model(cfg, analytic_stats(cfg, rows, cols));
    ablation += "# " + label + "\n" + render_cost_report(rep) + "\n";
  };
  for (const std::size_t k : parse_list(k_list)) {
    ModelConfig cfg = base;
    cfg.top_k = k;
    sweep_one(cfg, "top_k=" + std::to_string(k));
  }
  for (const std::size_t l : parse_list(layer_list)) {
    ModelConfig cfg = base;
    cfg.n_layers = l;
    sweep_one(cfg, "n_layers=" + std::to_string(l));
  }
  if (sweep_strategies) {
    for (const ScanSetStrategy s :
         {ScanSetStrategy::both, ScanSetStrategy::hdfs, ScanSetStrategy::harw,
          ScanSetStrategy::random}) {
      ModelConfig cfg = base;
      cfg.scan_strategy = s;
      sweep_one(cfg, "scan_strategy=" + to_string(s));
    }
  }
  if (!ablation.empty()) {
    write_text(out_dir + "/bench_ablation.txt", ablation);
    std::cout << "ablation report: " << out_dir << "/bench_ablation.txt\n";
  }
  return 0;
}

int cmd_scan(const std::string& data_dir, const std::string& bag_id,
             std::uint64_t seed, std::size_t m, double t_ratio,
             std::size_t top_k, const std::string& strategy) {
  const auto entries = read_manifest(data_dir + "/manifest.csv");
  const ManifestEntry* hit = nullptr;
  for (const ManifestEntry& e : entries) {
    if (e.file == bag_id || e.file == bag_id + ".tfb") {
      hit = &e;
      break;
    }
  }
  if (hit == nullptr) {
    throw std::invalid_argument("bag '" + bag_id + "' not in manifest");
  }
  const TileBag bag = read_bag(data_dir + "/" + hit->file);
  const Hypergraph hg = build_bag_hypergraph(bag, top_k);
  const ScanSet scans =
      build_scan_set(hg, m, t_ratio, seed, scan_strategy_from_string(strategy));

  std::cout << "bag=" << hit->file << " nodes=" << hg.n_nodes()
            << " edges=" << hg.inc.n_edges() << "\n";
  std::cout << "sequences=" << scans.seqs.size()
            << " valid_tokens=" << scans.total_valid_tokens()
            << " covered_nodes=" << scans.covered_nodes() << "\n";
  for (std::size_t i = 0; i < scans.seqs.size(); ++i) {
    const ScanSequence& s = scans.seqs[i];
    const char* kind = s.strategy == ScanStrategy::hdfs    ? "hdfs"
                       : s.strategy == ScanStrategy::harw ? "harw"
                                                          : "random";
    std::cout << "seq " << i << " strategy=" << kind
              << " n_valid=" << s.n_valid << " window=" << s.window
              << " breaks=" << s.breaks.size() << "\n  ";
    std::size_t next_break = 0;
    for (std::size_t p = 0; p < s.order.size(); ++p) {
      if (next_break < s.breaks.size() && s.breaks[next_break] == p) {
        std::cout << "| ";
        ++next_break;
      }
      if (p == s.n_valid) std::cout << ":: ";
      std::cout << s.order[p] << ' ';
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypergraph scan-SSM MIL pipeline"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string s_out, s_grid = "14x14", s_split;
  std::size_t s_bags = 350, s_dim = 32, s_classes = 2;
  double s_motif = 2.0;
  bool s_high = false;
  std::uint64_t s_seed = 0;
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--bags", s_bags, "total bag count (70/15/15 split)");
  synth->add_option("--grid", s_grid, "tile grid as RxC");
  synth->add_option("--dim", s_dim, "feature dimension");
  synth->add_option("--classes", s_classes, "number of classes");
  synth->add_option("--motif", s_motif, "motif shift strength");
  synth->add_flag("--high-order", s_high, "two-motif co-occurrence task");
  synth->add_option("--seed", s_seed, "master seed");
  synth->add_option("--split", s_split, "explicit train,val,test counts");

  auto* train_cmd = app.add_subcommand("train", "train on a dataset");
  std::string t_data, t_config, t_out;
  train_cmd->add_option("--data", t_data, "dataset directory")->required();
  train_cmd->add_option("--config", t_config, "key=value config file")
      ->required();
  train_cmd->add_option("--out", t_out, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_data, e_ckpt, e_split = "test", e_report = "eval_report.txt";
  eval_cmd->add_option("--data", e_data, "dataset directory")->required();
  eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--split", e_split, "train|val|test");
  eval_cmd->add_option("--report", e_report, "report file path");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference suite");
  std::string g_size = "small";
  grad->add_option("--size", g_size, "tiny|small");

  auto* bench = app.add_subcommand("bench", "analytic cost curves");
  std::string b_nlist = "1000,2000,4000,8000", b_out = ".";
  std::string b_klist, b_llist;
  std::size_t b_dim = 512;
  bool b_strategies = false;
  bench->add_option("--n-list", b_nlist, "comma-separated tile counts");
  bench->add_option("--dim", b_dim, "model width");
  bench->add_option("--out", b_out, "output directory");
  bench->add_option("--k-list", b_klist, "sweep similarity top-k values");
  bench->add_option("--layer-list", b_llist, "sweep layer counts");
  bench->add_flag("--strategies", b_strategies, "sweep scan strategies");

  auto* scan_cmd = app.add_subcommand("scan", "dump a bag's scan set");
  std::string c_data, c_bag, c_strategy = "both";
  std::uint64_t c_seed = 0;
  std::size_t c_m = 8, c_topk = 3;
  double c_ratio = 0.7;
  scan_cmd->add_option("--data", c_data, "dataset directory")->required();
  scan_cmd->add_option("--bag", c_bag, "bag file name")->required();
  scan_cmd->add_option("--seed", c_seed, "scan seed");
  scan_cmd->add_option("--m", c_m, "sequences per set");
  scan_cmd->add_option("--t-ratio", c_ratio, "walk length fraction");
  scan_cmd->add_option("--top-k", c_topk, "similarity neighbors");
  scan_cmd->add_option("--strategy", c_strategy, "both|hdfs|harw|random");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synth(s_out, s_bags, s_grid, s_dim, s_classes, s_motif,
                       s_high, s_seed, s_split);
    }
    if (train_cmd->parsed()) return cmd_train(t_data, t_config, t_out);
    if (eval_cmd->parsed()) return cmd_eval(e_data, e_ckpt, e_split, e_report);
    if (grad->parsed()) return cmd_gradcheck(g_size);
    if (bench->parsed()) {
      return cmd_bench(b_nlist, b_dim, b_out, b_klist, b_llist, b_strategies);
    }
    if (scan_cmd->parsed()) {
      return cmd_scan(c_data, c_bag, c_seed, c_m, c_ratio, c_topk,
                      c_strategy);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
