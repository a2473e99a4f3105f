// rkmmd: kernel two-sample statistics and domain-adaptation training.
//
// Exit codes: 0 success, 2 user/input error, 1 internal or numerical failure.
// Data records go to stdout, diagnostics to stderr.

#include "rkmmd/rkmmd.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitInternal = 1;

json kernel_json(const rkmmd::KernelSpec& k) {
  return {{"family", rkmmd::to_string(k.family)},
          {"bandwidths", k.bandwidths},
          {"weights", k.weights},
          {"bandwidth_mode", rkmmd::to_string(k.bandwidth_mode)}};
}

rkmmd::KernelSpec kernel_from_flags(const std::string& family, const std::string& sigma) {
  std::optional<double> fixed;
  if (sigma != "median") {
    double v = 0.0;
    if (!rkmmd::parse_double(sigma, v)) throw rkmmd::InputError("--sigma must be 'median' or a number");
    fixed = v;
  }
  if (family == "gaussian") {
    return fixed ? rkmmd::KernelSpec::gaussian(*fixed) : rkmmd::KernelSpec::gaussian_median();
  }
  return fixed ? rkmmd::KernelSpec::default_mixture(rkmmd::BandwidthMode::fixed, *fixed)
               : rkmmd::KernelSpec::default_mixture();
}

// Feature file; a column named `label_column` is ignored when present.
rkmmd::FeatureMatrix load_unlabeled(const std::string& path, const std::string& label_column) {
  rkmmd::CsvTable t = rkmmd::read_csv_file(path);
  const auto it = std::find(t.header.begin(), t.header.end(), label_column);
  if (it != t.header.end()) {
    const auto idx = static_cast<std::size_t>(it - t.header.begin());
    t.header.erase(t.header.begin() + static_cast<std::ptrdiff_t>(idx));
    for (auto& row : t.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  return rkmmd::features_from_csv(t, path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw rkmmd::InputError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw rkmmd::InputError("cannot write " + p.string());
  return out;
}

void log_class_mapping(const std::string& path, const rkmmd::LabeledDataset& ds) {
  std::cerr << path << ": classes";
  for (int c = 0; c < ds.num_classes(); ++c) std::cerr << " " << c << "=" << ds.class_names()[static_cast<std::size_t>(c)];
  std::cerr << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel two-sample statistics and MMD-based domain adaptation"};
  app.require_subcommand(1);

  // compute-mmd
  auto* mmd_cmd = app.add_subcommand("compute-mmd", "Estimate MMD^2 between two feature files");
  std::string src_path, tgt_path, kernel_family = "gaussian", sigma = "median", estimator = "biased";
  std::string label_column = "label";
  bool pretty = false;
  mmd_cmd->add_option("--source", src_path, "Source feature CSV")->required();
  mmd_cmd->add_option("--target", tgt_path, "Target feature CSV")->required();
  mmd_cmd->add_option("--kernel", kernel_family, "Kernel family")
      ->check(CLI::IsMember({"gaussian", "mixture"}))
      ->capture_default_str();
  mmd_cmd->add_option("--sigma", sigma, "Bandwidth: a number, or 'median' for the median heuristic")
      ->capture_default_str();
  mmd_cmd->add_option("--estimator", estimator, "Estimator")
      ->check(CLI::IsMember({"biased", "unbiased"}))
      ->capture_default_str();
  mmd_cmd->add_option("--label-column", label_column, "Column ignored if present")->capture_default_str();
  mmd_cmd->add_flag("--pretty", pretty, "Human-readable output");

  // perm-test
  auto* perm_cmd = app.add_subcommand("perm-test", "Permutation two-sample test on biased MMD^2");
  std::size_t permutations = 999;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  perm_cmd->add_option("--source", src_path, "Source feature CSV")->required();
  perm_cmd->add_option("--target", tgt_path, "Target feature CSV")->required();
  perm_cmd->add_option("--permutations", permutations, "Number of permutations (>= 99)")->capture_default_str();
  perm_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  perm_cmd->add_option("--kernel", kernel_family, "Kernel family")
      ->check(CLI::IsMember({"gaussian", "mixture"}))
      ->capture_default_str();
  perm_cmd->add_option("--sigma", sigma, "Bandwidth: a number, or 'median'")->capture_default_str();
  perm_cmd->add_option("--threads", threads, "Worker threads (result does not depend on it)")->capture_default_str();
  perm_cmd->add_option("--label-column", label_column, "Column ignored if present")->capture_default_str();
  perm_cmd->add_flag("--pretty", pretty, "Human-readable output");

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic source/target domain pair");
  std::string spec_path, out_dir;
  gen_cmd->add_option("--spec", spec_path, "Shift spec file (key = value)")->required();
  gen_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out", out_dir, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a classifier with a domain-discrepancy loss");
  std::string config_path, eval_path;
  bool log_steps = false, timing = false;
  train_cmd->add_option("--config", config_path, "Experiment config file (key = value)")->required();
  train_cmd->add_option("--source", src_path, "Labeled source CSV")->required();
  train_cmd->add_option("--target", tgt_path, "Unlabeled target CSV (label column ignored)");
  train_cmd->add_option("--eval-target", eval_path, "Labeled target CSV used only for logging");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_option("--label-column", label_column, "Label column name")->capture_default_str();
  train_cmd->add_flag("--log-steps", log_steps, "Also write steps.jsonl with per-step losses");
  train_cmd->add_flag("--timing", timing, "Add wall-clock time to epoch records");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Classification report of a checkpoint on labeled data");
  std::string checkpoint_path, data_path;
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "Labeled CSV")->required();
  eval_cmd->add_option("--label-column", label_column, "Label column name")->capture_default_str();
  eval_cmd->add_flag("--pretty", pretty, "Print the report as a table");

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "Compare adaptation losses on one synthetic shift");
  std::string suite_path;
  std::size_t n_seeds = 5;
  bench_cmd->add_option("--suite", suite_path, "Suite file (key = value); built-in defaults when omitted");
  bench_cmd->add_option("--seeds", n_seeds, "Number of consecutive seeds")->capture_default_str();
  bench_cmd->add_option("--out", out_dir, "Output directory")->required();
  bench_cmd->add_flag("--pretty", pretty, "Print the comparison as a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*mmd_cmd) {
      const auto s = load_unlabeled(src_path, label_column);
      const auto t = load_unlabeled(tgt_path, label_column);
      const auto est = rkmmd::mmd(estimator == "biased" ? rkmmd::Estimator::biased : rkmmd::Estimator::unbiased,
                                  kernel_from_flags(kernel_family, sigma), s, t);
      if (pretty) {
        std::cout << "MMD^2 (" << estimator << ") = " << rkmmd::format_double(est.value) << "\n";
      } else {
        std::cout << json{{"record", "mmd"},
                          {"value", est.value},
                          {"raw_value", est.raw_value},
                          {"estimator", rkmmd::to_string(est.estimator)},
                          {"kernel", kernel_json(est.kernel)},
                          {"n_source", est.n_source},
                          {"n_target", est.n_target}}
                         .dump()
                  << "\n";
      }
    } else if (*perm_cmd) {
      const auto s = load_unlabeled(src_path, label_column);
      const auto t = load_unlabeled(tgt_path, label_column);
      const auto res =
          rkmmd::permutation_test(kernel_from_flags(kernel_family, sigma), s, t, permutations, seed, threads);
      if (pretty) {
        std::cout << "statistic = " << rkmmd::format_double(res.statistic) << "\n"
                  << "p-value   = " << rkmmd::format_double(res.p_value) << " (" << res.n_permutations
                  << " permutations)\n";
      } else {
        json q = json::array();
        for (const auto& [level, value] : res.null_distribution_quantiles) q.push_back({level, value});
        std::cout << json{{"record", "permutation_test"},
                          {"statistic", res.statistic},
                          {"p_value", res.p_value},
                          {"n_permutations", res.n_permutations},
                          {"null_quantiles", q},
                          {"kernel", kernel_json(res.kernel)},
                          {"seed", seed}}
                         .dump()
                  << "\n";
      }
    } else if (*gen_cmd) {
      const auto f = rkmmd::KeyValueFile::load(spec_path);
      f.reject_unknown(rkmmd::shift_spec_keys());
      const auto spec = rkmmd::shift_spec_from(f);
      const auto pair = rkmmd::generate(spec, seed);
      ensure_dir(out_dir);
      rkmmd::save_labeled_csv((fs::path(out_dir) / "source.csv").string(), pair.source);
      rkmmd::save_features_csv((fs::path(out_dir) / "target.csv").string(), pair.target.features());
      rkmmd::save_labeled_csv((fs::path(out_dir) / "target_labels.csv").string(), pair.target);
      std::cout << json{{"record", "gen_data"},
                        {"generator", rkmmd::to_string(spec.generator)},
                        {"seed", seed},
                        {"n_source", pair.source.n()},
                        {"n_target", pair.target.n()},
                        {"d", spec.d}}
                       .dump()
                << "\n";
    } else if (*train_cmd) {
      const auto config = rkmmd::load_experiment_config(config_path);
      const auto source = rkmmd::load_labeled_csv(src_path, label_column);
      log_class_mapping(src_path, source);
      rkmmd::FeatureMatrix target = rkmmd::FeatureMatrix::empty(source.d());
      if (!tgt_path.empty()) {
        target = load_unlabeled(tgt_path, label_column);
      } else if (config.adapt_loss != rkmmd::AdaptLoss::none) {
        throw rkmmd::InputError("--target is required when adapt_loss is not 'none'");
      }
      std::optional<rkmmd::LabeledDataset> eval_target;
      if (!eval_path.empty()) eval_target = rkmmd::load_labeled_csv(eval_path, label_column, source.class_names());

      ensure_dir(out_dir);
      auto metrics_out = open_out(fs::path(out_dir) / "metrics.jsonl");
      std::optional<std::ofstream> steps_out;
      if (log_steps) steps_out = open_out(fs::path(out_dir) / "steps.jsonl");
      rkmmd::TrainOptions opts;
      opts.on_epoch = [&](const rkmmd::EpochMetrics& m) {
        const std::string line = rkmmd::to_json(m, timing).dump();
        metrics_out << line << "\n";
        std::cout << line << "\n";
      };
      if (steps_out) opts.on_step = [&](const rkmmd::StepRecord& s) { *steps_out << rkmmd::to_json(s).dump() << "\n"; };
      const auto result = rkmmd::train(config, source, target, eval_target, opts);
      rkmmd::save_checkpoint((fs::path(out_dir) / "checkpoint.txt").string(),
                             rkmmd::Checkpoint{result.model, source.class_names()});
    } else if (*eval_cmd) {
      const auto ck = rkmmd::load_checkpoint(checkpoint_path);
      const auto data = rkmmd::load_labeled_csv(data_path, label_column, ck.class_names);
      const auto ev = rkmmd::evaluate(ck.model, data);
      if (pretty) {
        std::cout << rkmmd::format_report_table(ev.report);
      } else {
        std::cout << rkmmd::to_json(ev.report).dump() << "\n" << rkmmd::to_json(ev.confusion).dump() << "\n";
      }
    } else if (*bench_cmd) {
      rkmmd::BenchmarkSuite suite = rkmmd::BenchmarkSuite::defaults();
      if (!suite_path.empty()) suite = rkmmd::benchmark_suite_from(rkmmd::KeyValueFile::load(suite_path));
      const auto res = rkmmd::run_benchmark(suite, n_seeds);
      ensure_dir(out_dir);
      auto rows_out = open_out(fs::path(out_dir) / "benchmark.jsonl");
      auto runs_out = open_out(fs::path(out_dir) / "runs.jsonl");
      for (const auto& r : res.rows) rows_out << rkmmd::to_json(r).dump() << "\n";
      for (const auto& r : res.runs) runs_out << rkmmd::to_json(r).dump() << "\n";
      if (pretty) {
        std::cout << rkmmd::format_benchmark_table(res);
      } else {
        for (const auto& r : res.rows) std::cout << rkmmd::to_json(r).dump() << "\n";
      }
    }
  } catch (const rkmmd::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const rkmmd::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
