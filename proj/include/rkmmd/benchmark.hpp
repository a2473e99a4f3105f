#pragma once

#include "rkmmd/config_file.hpp"
#include "rkmmd/data.hpp"
#include "rkmmd/train.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

// Method comparison on one synthetic shift: every adaptation loss, plus a
// source-only baseline, trained on the same data and seeds.

namespace rkmmd {

/// Suite file = shift keys + training keys (minus adapt_loss / lambda) +
/// one loss weight per method. `seed` is the first of the consecutive seeds.
struct BenchmarkSuite {
  ShiftSpec shift;
  ExperimentConfig train;
  std::vector<AdaptLoss> methods{AdaptLoss::rkhs_mmd, AdaptLoss::standard_mmd, AdaptLoss::coral, AdaptLoss::none};
  double lambda_rkhs_mmd = 3.0;
  double lambda_standard_mmd = 3.0;
  /// CORAL is scaled by 1/(4 d^2), hence the much larger weight.
  double lambda_coral = 3000.0;

  /// Defaults of the synthetic benchmark: 30 degree two-arcs shift and the
  /// standard training settings, except a 10x base learning rate for the
  /// small network.
  static BenchmarkSuite defaults() {
    BenchmarkSuite s;
    s.train.base_lr = 1e-2;
    return s;
  }

  double lambda_for(AdaptLoss a) const {
    switch (a) {
      case AdaptLoss::rkhs_mmd: return lambda_rkhs_mmd;
      case AdaptLoss::standard_mmd: return lambda_standard_mmd;
      case AdaptLoss::coral: return lambda_coral;
      case AdaptLoss::none: return 0.0;
    }
    return 0.0;
  }

  ExperimentConfig config_for(AdaptLoss a, std::uint64_t seed) const {
    ExperimentConfig c = train;
    c.adapt_loss = a;
    c.lambda.assign(c.tap_layers.size(), lambda_for(a));
    c.seed = seed;
    if (a != AdaptLoss::rkhs_mmd && a != AdaptLoss::standard_mmd) c.kernel.reset();
    c.validate();
    return c;
  }
};

inline BenchmarkSuite benchmark_suite_from(const KeyValueFile& f) {
  std::set<std::string> allowed = shift_spec_keys();
  for (const auto& k : experiment_config_keys()) {
    if (k != "adapt_loss" && k != "lambda" && k != "kernel" && k != "sigma") allowed.insert(k);
  }
  allowed.insert({"methods", "lambda_rkhs_mmd", "lambda_standard_mmd", "lambda_coral"});
  f.reject_unknown(allowed);

  BenchmarkSuite s = BenchmarkSuite::defaults();
  s.shift = shift_spec_from(f);
  ExperimentConfig base = experiment_config_from(f);
  if (!f.has("base_lr")) base.base_lr = s.train.base_lr;
  base.lambda.assign(base.tap_layers.size(), 0.0);
  s.train = base;
  if (f.has("methods")) {
    s.methods.clear();
    std::stringstream ss(f.get_string("methods", ""));
    std::string item;
    while (std::getline(ss, item, ',')) s.methods.push_back(parse_adapt_loss(detail::trim(item)));
    if (s.methods.empty()) throw ParseError("suite: methods is empty");
  }
  s.lambda_rkhs_mmd = f.get_double("lambda_rkhs_mmd", s.lambda_rkhs_mmd);
  s.lambda_standard_mmd = f.get_double("lambda_standard_mmd", s.lambda_standard_mmd);
  s.lambda_coral = f.get_double("lambda_coral", s.lambda_coral);
  return s;
}

struct BenchmarkRun {
  AdaptLoss method = AdaptLoss::none;
  std::uint64_t seed = 0;
  EpochMetrics first;
  EpochMetrics last;
};

/// One row of the comparison table; losses are final-epoch values.
struct BenchmarkRow {
  AdaptLoss method = AdaptLoss::none;
  double accuracy = 0.0;
  double accuracy_std = 0.0;
  double class_loss = 0.0;
  double adapt_loss = 0.0;
  double source_accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> seed_accuracies;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkRun> runs;
};

inline BenchmarkResult run_benchmark(const BenchmarkSuite& suite, std::size_t n_seeds) {
  if (n_seeds < 1) throw InputError("benchmark: need at least one seed");
  BenchmarkResult out;
  for (AdaptLoss method : suite.methods) {
    BenchmarkRow row;
    row.method = method;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      const std::uint64_t seed = suite.train.seed + k;
      const DomainPair data = generate(suite.shift, seed);
      const TrainResult tr = train(suite.config_for(method, seed), data.source, data.target.features(), data.target);
      BenchmarkRun run{method, seed, tr.epochs.front(), tr.epochs.back()};
      row.seed_accuracies.push_back(*run.last.target_accuracy);
      row.class_loss += run.last.class_loss;
      row.adapt_loss += run.last.adapt_loss_value;
      row.source_accuracy += run.last.source_accuracy;
      row.macro_f1 += *run.last.macro_f1_target;
      out.runs.push_back(run);
    }
    const double n = static_cast<double>(n_seeds);
    for (double a : row.seed_accuracies) row.accuracy += a / n;
    double var = 0.0;
    for (double a : row.seed_accuracies) var += (a - row.accuracy) * (a - row.accuracy);
    row.accuracy_std = n_seeds > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    row.class_loss /= n;
    row.adapt_loss /= n;
    row.source_accuracy /= n;
    row.macro_f1 /= n;
    out.rows.push_back(row);
  }
  return out;
}

inline nlohmann::json to_json(const BenchmarkRow& r) {
  return {{"record", "benchmark"},
          {"method", to_string(r.method)},
          {"accuracy", r.accuracy},
          {"accuracy_std", r.accuracy_std},
          {"classification_loss", r.class_loss},
          {"adapt_loss", r.adapt_loss},
          {"source_accuracy", r.source_accuracy},
          {"macro_f1", r.macro_f1},
          {"seed_accuracies", r.seed_accuracies}};
}

inline nlohmann::json to_json(const BenchmarkRun& r) {
  return {{"record", "benchmark_run"},
          {"method", to_string(r.method)},
          {"seed", r.seed},
          {"first_epoch", to_json(r.first)},
          {"last_epoch", to_json(r.last)}};
}

inline std::string format_benchmark_table(const BenchmarkResult& res) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s  %9s  %9s  %20s  %10s\n", "Method", "Accuracy", "Std", "Classification Loss",
                "Loss");
  out += buf;
  for (const auto& r : res.rows) {
    std::snprintf(buf, sizeof(buf), "%-14s  %9.4f  %9.4f  %20.4f  %10.4g\n", to_string(r.method).c_str(), r.accuracy,
                  r.accuracy_std, r.class_loss, r.adapt_loss);
    out += buf;
  }
  return out;
}

}  // namespace rkmmd
