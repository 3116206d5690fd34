// haf: synthetic data generation, hierarchy-aware training, evaluation with
// optional CRM reranking, and a gradient self-check.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
// failure (diverged training or a failed gradient check).

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "haf/crm.hpp"
#include "haf/dataset.hpp"
#include "haf/error.hpp"
#include "haf/gradcheck.hpp"
#include "haf/io.hpp"
#include "haf/losses.hpp"
#include "haf/metrics.hpp"
#include "haf/model.hpp"
#include "haf/taxonomy.hpp"
#include "haf/trainer.hpp"

namespace {

struct Paths {
  std::string taxonomy = "taxonomy.txt";
  std::string train_csv = "train.csv";
  std::string test_csv = "test.csv";
  std::string checkpoint = "checkpoint.json";
  std::string train_log = "train_log.jsonl";
  std::string report_prefix = "report";
};

struct RunConfig {
  Paths paths;
  std::vector<int> branching = {2, 3, 3};
  haf::SyntheticConfig synth;
  haf::TrainConfig train;
  std::vector<int> eval_ks = {1, 5};
};

RunConfig default_config() {
  RunConfig c;
  c.train.seed = 7;
  return c;
}

template <typename T>
std::string join_numbers(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += haf::format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::vector<int> split_ints(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok =
        text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) {
      try {
        out.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw haf::Error(haf::ErrorCode::InvalidConfig,
                         "expected an integer list, got '" + text + "'");
      }
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<double> split_doubles(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok =
        text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw haf::Error(haf::ErrorCode::InvalidConfig,
                         "expected a number list, got '" + text + "'");
      }
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string losses_to_string(const haf::LossFlags& f) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += name;
  };
  add(f.ce_fine, "ce_fine");
  add(f.shc, "shc");
  add(f.margin, "margin");
  add(f.gc, "gc");
  return out;
}

haf::LossFlags losses_from_string(const std::string& text) {
  haf::LossFlags f{false, false, false, false};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok =
        text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (tok == "ce_fine") {
      f.ce_fine = true;
    } else if (tok == "shc") {
      f.shc = true;
    } else if (tok == "margin") {
      f.margin = true;
    } else if (tok == "gc") {
      f.gc = true;
    } else if (!tok.empty()) {
      throw haf::Error(haf::ErrorCode::InvalidConfig,
                       "unknown loss '" + tok +
                           "' (expected ce_fine, shc, margin, gc)");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return f;
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  const std::string text = haf::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw haf::Error(haf::ErrorCode::InvalidConfig,
                     "config " + path + ": " + e.what());
  }
  try {
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      if (p.contains("taxonomy")) cfg.paths.taxonomy = p["taxonomy"];
      if (p.contains("train_csv")) cfg.paths.train_csv = p["train_csv"];
      if (p.contains("test_csv")) cfg.paths.test_csv = p["test_csv"];
      if (p.contains("checkpoint")) cfg.paths.checkpoint = p["checkpoint"];
      if (p.contains("train_log")) cfg.paths.train_log = p["train_log"];
      if (p.contains("report_prefix"))
        cfg.paths.report_prefix = p["report_prefix"];
    }
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      if (s.contains("branching"))
        cfg.branching = s["branching"].get<std::vector<int>>();
      if (s.contains("input_dim")) cfg.synth.input_dim = s["input_dim"];
      if (s.contains("samples_per_class"))
        cfg.synth.samples_per_class = s["samples_per_class"];
      if (s.contains("level_spread"))
        cfg.synth.level_spread = s["level_spread"].get<std::vector<double>>();
      if (s.contains("noise_sigma")) cfg.synth.noise_sigma = s["noise_sigma"];
      if (s.contains("seed")) cfg.synth.seed = s["seed"].get<std::uint64_t>();
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("epochs")) cfg.train.epochs = t["epochs"];
      if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"];
      if (t.contains("lr_backbone")) cfg.train.lr_backbone = t["lr_backbone"];
      if (t.contains("lr_heads")) cfg.train.lr_heads = t["lr_heads"];
      if (t.contains("momentum")) cfg.train.momentum = t["momentum"];
      if (t.contains("margin")) cfg.train.margin = t["margin"];
      if (t.contains("pairs_per_batch"))
        cfg.train.pairs_per_batch = t["pairs_per_batch"];
      if (t.contains("margin_level_start"))
        cfg.train.margin_level_start = t["margin_level_start"];
      if (t.contains("seed")) cfg.train.seed = t["seed"].get<std::uint64_t>();
      if (t.contains("mlp_dims"))
        cfg.train.mlp_dims = t["mlp_dims"].get<std::vector<int>>();
      if (t.contains("losses")) {
        haf::LossFlags f{false, false, false, false};
        for (const auto& name : t["losses"]) {
          const haf::LossFlags one = losses_from_string(name.get<std::string>());
          f.ce_fine |= one.ce_fine;
          f.shc |= one.shc;
          f.margin |= one.margin;
          f.gc |= one.gc;
        }
        cfg.train.losses = f;
      }
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      if (e.contains("ks")) cfg.eval_ks = e["ks"].get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw haf::Error(haf::ErrorCode::InvalidConfig,
                     "config " + path + ": " + e.what());
  }
}

// Canonical rendering of the effective configuration; its FNV-1a hash goes
// into every report so runs can be matched to their exact settings.
std::string canonical_config(const RunConfig& c) {
  std::string out = "{";
  out += "\"paths\":{";
  out += "\"taxonomy\":\"" + c.paths.taxonomy + "\",";
  out += "\"train_csv\":\"" + c.paths.train_csv + "\",";
  out += "\"test_csv\":\"" + c.paths.test_csv + "\",";
  out += "\"checkpoint\":\"" + c.paths.checkpoint + "\",";
  out += "\"train_log\":\"" + c.paths.train_log + "\",";
  out += "\"report_prefix\":\"" + c.paths.report_prefix + "\"},";
  out += "\"synthetic\":{";
  out += "\"branching\":[" + join_numbers(c.branching) + "],";
  out += "\"input_dim\":" + std::to_string(c.synth.input_dim) + ",";
  out += "\"samples_per_class\":" + std::to_string(c.synth.samples_per_class) +
         ",";
  out += "\"level_spread\":[" + join_numbers(c.synth.level_spread) + "],";
  out += "\"noise_sigma\":" + haf::format_double(c.synth.noise_sigma) + ",";
  out += "\"seed\":" + std::to_string(c.synth.seed) + "},";
  out += "\"train\":{";
  out += "\"epochs\":" + std::to_string(c.train.epochs) + ",";
  out += "\"batch_size\":" + std::to_string(c.train.batch_size) + ",";
  out += "\"lr_backbone\":" + haf::format_double(c.train.lr_backbone) + ",";
  out += "\"lr_heads\":" + haf::format_double(c.train.lr_heads) + ",";
  out += "\"momentum\":" + haf::format_double(c.train.momentum) + ",";
  out += "\"margin\":" + haf::format_double(c.train.margin) + ",";
  out += "\"pairs_per_batch\":" + std::to_string(c.train.pairs_per_batch) + ",";
  out += "\"margin_level_start\":" + std::to_string(c.train.margin_level_start) +
         ",";
  out += "\"losses\":\"" + losses_to_string(c.train.losses) + "\",";
  out += "\"seed\":" + std::to_string(c.train.seed) + ",";
  out += "\"mlp_dims\":[" + join_numbers(c.train.mlp_dims) + "]},";
  out += "\"eval\":{\"ks\":[" + join_numbers(c.eval_ks) + "]}}";
  return out;
}

int env_threads() {
  const char* raw = std::getenv("HAF_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    return std::max(0, std::stoi(raw));
  } catch (const std::exception&) {
    return 0;
  }
}

int cmd_gen_data(const RunConfig& cfg) {
  const haf::TaxonomyTree tree = haf::branching_tree(cfg.branching);
  const auto [train_ds, test_ds] = haf::generate(tree, cfg.synth);
  const std::string hash = haf::fnv1a_hex(canonical_config(cfg));

  haf::write_file(cfg.paths.taxonomy, tree.to_text());
  haf::write_file(cfg.paths.train_csv, haf::write_dataset(train_ds, tree));
  haf::write_file(cfg.paths.test_csv, haf::write_dataset(test_ds, tree));

  std::string meta = "{\n";
  meta += "  \"seed\": " + std::to_string(cfg.synth.seed) + ",\n";
  meta += "  \"config_hash\": \"" + hash + "\",\n";
  meta += "  \"branching\": [" + join_numbers(cfg.branching) + "],\n";
  meta += "  \"levels\": " + std::to_string(tree.num_levels()) + ",\n";
  meta += "  \"fine_classes\": " + std::to_string(tree.num_fine()) + ",\n";
  meta += "  \"input_dim\": " + std::to_string(cfg.synth.input_dim) + ",\n";
  meta +=
      "  \"samples_per_class\": " + std::to_string(cfg.synth.samples_per_class) +
      ",\n";
  meta += "  \"level_spread\": [" + join_numbers(cfg.synth.level_spread) +
          "],\n";
  meta += "  \"noise_sigma\": " + haf::format_double(cfg.synth.noise_sigma) +
          ",\n";
  meta += "  \"n_train\": " + std::to_string(train_ds.size()) + ",\n";
  meta += "  \"n_test\": " + std::to_string(test_ds.size()) + "\n";
  meta += "}\n";
  const std::string meta_path = cfg.paths.report_prefix + "_meta.json";
  haf::write_file(meta_path, meta);

  std::cout << "generated " << train_ds.size() + test_ds.size() << " samples ("
            << train_ds.size() << " train, " << test_ds.size() << " test) for "
            << tree.num_fine() << " fine classes over " << tree.num_levels()
            << " levels\n";
  std::cout << "wrote " << cfg.paths.taxonomy << ", " << cfg.paths.train_csv
            << ", " << cfg.paths.test_csv << ", " << meta_path << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const haf::TaxonomyTree tree =
      haf::TaxonomyTree::parse(haf::read_file(cfg.paths.taxonomy));
  const haf::Dataset train_ds =
      haf::read_dataset(haf::read_file(cfg.paths.train_csv), tree);
  const haf::Dataset test_ds =
      haf::read_dataset(haf::read_file(cfg.paths.test_csv), tree);

  haf::TrainConfig tc = cfg.train;
  tc.eval_ks = cfg.eval_ks;
  const haf::TrainResult result = haf::train(tree, train_ds, test_ds, tc);

  haf::write_file(cfg.paths.checkpoint, haf::save_checkpoint(result.stack));
  haf::write_file(cfg.paths.train_log, haf::train_log_to_jsonl(result.log));

  if (!result.log.empty()) {
    const haf::EpochLog& last = result.log.back();
    std::printf(
        "epoch %d: total=%.6f ce=%.6f shc=%.6f margin=%.6f gc=%.6f "
        "val_top1_err=%.4f val_severity=%.4f\n",
        last.epoch, last.total, last.ce_fine, last.shc, last.margin, last.gc,
        last.val_metrics.top1_error, last.val_metrics.mistake_severity);
  }
  std::cout << "wrote " << cfg.paths.checkpoint << " and "
            << cfg.paths.train_log << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, bool csv) {
  const haf::TaxonomyTree tree =
      haf::TaxonomyTree::parse(haf::read_file(cfg.paths.taxonomy));
  const haf::Dataset test_ds =
      haf::read_dataset(haf::read_file(cfg.paths.test_csv), tree);
  const haf::ClassifierStack stack =
      haf::load_checkpoint(haf::read_file(cfg.paths.checkpoint));
  stack.validate_against(tree);
  if (stack.input_dim != test_ds.features.cols()) {
    throw haf::Error(haf::ErrorCode::ShapeMismatch,
                     "eval: checkpoint expects input_dim " +
                         std::to_string(stack.input_dim) + " but data has " +
                         std::to_string(test_ds.features.cols()));
  }

  const haf::LcaMatrix lca = haf::build_lca_matrix(tree);
  const int n = test_ds.size();
  const int fine = tree.num_fine();
  haf::Matrix probs(n, fine);
  const int chunk = 512;
  for (int start = 0; start < n; start += chunk) {
    const int count = std::min(chunk, n - start);
    const haf::ForwardTrace trace =
        haf::forward(stack, test_ds.features.middleRows(start, count));
    probs.middleRows(start, count) = trace.probs.back();
  }

  std::vector<std::vector<int>> plain(n), crm(n);
  for (int i = 0; i < n; ++i) {
    const haf::Vector p = probs.row(i).transpose();
    plain[i] = haf::rank_by_probability(p);
    crm[i] = haf::crm_rerank(lca, p).order;
  }

  const int threads = env_threads();
  const haf::MetricsReport plain_report =
      haf::evaluate(tree, lca, plain, test_ds.fine_labels, cfg.eval_ks, threads);
  const haf::MetricsReport crm_report =
      haf::evaluate(tree, lca, crm, test_ds.fine_labels, cfg.eval_ks, threads);

  const std::string hash = haf::fnv1a_hex(canonical_config(cfg));
  const std::uint64_t seed = cfg.train.seed;
  haf::write_file(cfg.paths.report_prefix + "_plain.json",
                  haf::report_to_json(plain_report, "plain", seed, hash));
  haf::write_file(cfg.paths.report_prefix + "_crm.json",
                  haf::report_to_json(crm_report, "crm", seed, hash));
  if (csv) {
    haf::write_file(cfg.paths.report_prefix + "_plain.csv",
                    haf::report_to_csv(plain_report, "plain", seed, hash));
    haf::write_file(cfg.paths.report_prefix + "_crm.csv",
                    haf::report_to_csv(crm_report, "crm", seed, hash));
  }

  for (const auto& [mode, report] :
       {std::pair<const char*, const haf::MetricsReport&>("plain", plain_report),
        std::pair<const char*, const haf::MetricsReport&>("crm", crm_report)}) {
    std::printf("%-5s top1_err=%.4f severity=%.4f", mode, report.top1_error,
                report.mistake_severity);
    for (const auto& [k, v] : report.hier_dist_at) {
      std::printf(" hd@%d=%.4f", k, v);
    }
    std::printf("\n");
  }
  std::cout << "wrote " << cfg.paths.report_prefix << "_{plain,crm}.json"
            << (csv ? " and .csv" : "") << "\n";
  return 0;
}

int cmd_gradcheck(int trials, double eps, double tol, std::uint64_t seed,
                  const std::string& corrupt) {
  const auto rows = haf::run_gradcheck(trials, eps, tol, seed, corrupt);
  bool all_pass = true;
  for (const auto& row : rows) {
    std::printf("%-8s max_rel_err=%.3e worst=%-10s %s\n", row.loss_name.c_str(),
                row.max_rel_err,
                row.worst_group.empty() ? "-" : row.worst_group.c_str(),
                row.pass ? "PASS" : "FAIL");
    all_pass = all_pass && row.pass;
  }
  return all_pass ? 0 : 3;
}

int run(int argc, char** argv) {
  RunConfig cfg = default_config();

  // The config file is applied before CLI11 sees the other flags, so flag
  // values always win over file values.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      load_config_file(argv[i + 1], cfg);
      break;
    }
  }

  CLI::App app{"hierarchy-aware classification toolkit"};
  app.require_subcommand(1);
  std::string config_path;

  std::string branching_str = join_numbers(cfg.branching);
  std::string spread_str = join_numbers(cfg.synth.level_spread);
  std::string losses_str = losses_to_string(cfg.train.losses);
  std::string mlp_dims_str = join_numbers(cfg.train.mlp_dims);
  std::string ks_str = join_numbers(cfg.eval_ks);

  auto add_paths = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--taxonomy", cfg.paths.taxonomy, "taxonomy file");
    cmd->add_option("--train-csv", cfg.paths.train_csv, "training CSV");
    cmd->add_option("--test-csv", cfg.paths.test_csv, "test CSV");
    cmd->add_option("--checkpoint", cfg.paths.checkpoint, "checkpoint file");
    cmd->add_option("--train-log", cfg.paths.train_log, "training log (JSONL)");
    cmd->add_option("--report-prefix", cfg.paths.report_prefix,
                    "prefix for emitted reports");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_paths(gen);
  gen->add_option("--branching", branching_str,
                  "children per node at each level, e.g. 2,3,3");
  gen->add_option("--input-dim", cfg.synth.input_dim, "feature dimension");
  gen->add_option("--samples-per-class", cfg.synth.samples_per_class,
                  "samples per fine class");
  gen->add_option("--level-spread", spread_str,
                  "center offset scale per level, strictly decreasing");
  gen->add_option("--noise-sigma", cfg.synth.noise_sigma, "sample noise scale");
  gen->add_option("--seed", cfg.synth.seed, "generation seed");

  CLI::App* tr = app.add_subcommand("train", "train a classifier stack");
  add_paths(tr);
  tr->add_option("--epochs", cfg.train.epochs, "epoch count");
  tr->add_option("--batch-size", cfg.train.batch_size, "mini-batch size");
  tr->add_option("--lr-backbone", cfg.train.lr_backbone, "MLP learning rate");
  tr->add_option("--lr-heads", cfg.train.lr_heads, "head learning rate");
  tr->add_option("--momentum", cfg.train.momentum, "SGD momentum");
  tr->add_option("--margin", cfg.train.margin, "margin m");
  tr->add_option("--pairs-per-batch", cfg.train.pairs_per_batch,
                 "dissimilar pairs per level per batch");
  tr->add_option("--margin-level-start", cfg.train.margin_level_start,
                 "coarsest level the margin loss applies to");
  tr->add_option("--losses", losses_str,
                 "enabled terms, e.g. ce_fine,shc,margin,gc");
  tr->add_option("--mlp-dims", mlp_dims_str,
                 "hidden widths, e.g. 64,64 (empty for identity features)");
  tr->add_option("--seed", cfg.train.seed, "training seed");
  tr->add_option("--ks", ks_str, "k values for per-epoch metric snapshots");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_paths(ev);
  bool csv = false;
  ev->add_option("--ks", ks_str, "k values for hier dist@k");
  ev->add_option("--seed", cfg.train.seed,
                 "seed of record embedded in the reports");
  ev->add_flag("--csv", csv, "also emit CSV report variants");

  CLI::App* gc = app.add_subcommand("gradcheck", "verify analytic gradients");
  int trials = 20;
  double eps = 1e-5, tol = 1e-5;
  std::uint64_t gc_seed = 1234;
  std::string corrupt;
  gc->add_option("--trials", trials, "random instances per loss");
  gc->add_option("--eps", eps, "finite-difference step");
  gc->add_option("--tol", tol, "relative-error threshold");
  gc->add_option("--seed", gc_seed, "seed for the random instances");
  gc->add_option("--corrupt", corrupt,
                 "damage the named loss's gradient (negative control)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  cfg.branching = split_ints(branching_str);
  cfg.synth.level_spread = split_doubles(spread_str);
  cfg.train.losses = losses_from_string(losses_str);
  cfg.train.mlp_dims = split_ints(mlp_dims_str);
  cfg.eval_ks = split_ints(ks_str);

  if (gen->parsed()) return cmd_gen_data(cfg);
  if (tr->parsed()) return cmd_train(cfg);
  if (ev->parsed()) return cmd_eval(cfg, csv);
  if (gc->parsed()) return cmd_gradcheck(trials, eps, tol, gc_seed, corrupt);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const haf::Error& e) {
    std::cerr << "error [" << haf::error_code_name(e.code()) << "]: "
              << e.what() << "\n";
    switch (e.code()) {
      case haf::ErrorCode::DivergedLoss:
      case haf::ErrorCode::NonFiniteInput:
      case haf::ErrorCode::NonFiniteEvaluation:
        return 3;
      default:
        return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
