#pragma once

#include "rkmmd/config_file.hpp"
#include "rkmmd/coral.hpp"
#include "rkmmd/core.hpp"
#include "rkmmd/kernel.hpp"
#include "rkmmd/labeled_dataset.hpp"
#include "rkmmd/metrics.hpp"
#include "rkmmd/mmd.hpp"
#include "rkmmd/net.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

// =============================================================================
// Joint classification + domain-discrepancy training
// =============================================================================

namespace rkmmd {

enum class AdaptLoss { rkhs_mmd, standard_mmd, coral, none };

inline std::string to_string(AdaptLoss a) {
  switch (a) {
    case AdaptLoss::rkhs_mmd: return "rkhs-mmd";
    case AdaptLoss::standard_mmd: return "standard-mmd";
    case AdaptLoss::coral: return "coral";
    case AdaptLoss::none: return "none";
  }
  return "none";
}

inline AdaptLoss parse_adapt_loss(const std::string& s) {
  if (s == "rkhs-mmd") return AdaptLoss::rkhs_mmd;
  if (s == "standard-mmd") return AdaptLoss::standard_mmd;
  if (s == "coral") return AdaptLoss::coral;
  if (s == "none") return AdaptLoss::none;
  throw ParseError("unknown adapt_loss '" + s + "' (rkhs-mmd, standard-mmd, coral, none)");
}

/// Default kernel for each discrepancy: "standard" is one fixed sigma = 1
/// Gaussian, "rkhs" is the five-bandwidth mixture around the per-batch median
/// heuristic.
inline KernelSpec default_kernel(AdaptLoss a) {
  return a == AdaptLoss::standard_mmd ? KernelSpec::gaussian(1.0) : KernelSpec::default_mixture();
}

struct ExperimentConfig {
  AdaptLoss adapt_loss = AdaptLoss::rkhs_mmd;
  std::vector<double> lambda{0.5};
  std::vector<std::size_t> tap_layers{1};
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double base_lr = 1e-3;
  double fc_lr_multiplier = 10.0;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  /// Unset: default_kernel(adapt_loss).
  std::optional<KernelSpec> kernel;
  std::vector<Eigen::Index> hidden{64, 32};
  /// Linear ramp of every lambda from 0 over this many epochs; 0 = constant.
  std::size_t lambda_ramp_epochs = 0;

  KernelSpec effective_kernel() const { return kernel ? *kernel : default_kernel(adapt_loss); }

  void validate() const {
    if (lambda.size() != tap_layers.size()) throw InputError("config: lambda and tap_layers differ in length");
    for (double l : lambda) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw InputError("config: lambda values must be >= 0");
    }
    for (std::size_t t : tap_layers) {
      if (t > hidden.size()) {
        throw InputError("config: tap layer " + std::to_string(t) + " does not exist (model has " +
                         std::to_string(hidden.size() + 1) + " layers)");
      }
    }
    for (auto w : hidden) {
      if (w < 1) throw InputError("config: hidden widths must be >= 1");
    }
    for (double v : {base_lr, fc_lr_multiplier, weight_decay, momentum}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("config: rates, decay and momentum must be >= 0");
    }
    if (batch_size < 1) throw InputError("config: batch_size must be >= 1");
    if (adapt_loss != AdaptLoss::none && batch_size < 2) {
      throw InputError("config: batch_size must be >= 2 when a discrepancy loss is active");
    }
    if (epochs < 1) throw InputError("config: epochs must be >= 1");
    effective_kernel().validate();
  }
};

inline const std::set<std::string>& experiment_config_keys() {
  static const std::set<std::string> keys{
      "adapt_loss", "lambda",   "tap_layers", "batch_size", "epochs", "base_lr",           "fc_lr_multiplier",
      "weight_decay", "momentum", "seed",     "kernel",     "sigma",  "hidden",            "lambda_ramp_epochs"};
  return keys;
}

/// Reads the training keys of `f`. `kernel` is auto | gaussian | mixture and
/// `sigma` is median | <number>; for a mixture a number is the centre bandwidth.
inline ExperimentConfig experiment_config_from(const KeyValueFile& f) {
  ExperimentConfig c;
  c.adapt_loss = parse_adapt_loss(f.get_string("adapt_loss", to_string(c.adapt_loss)));
  c.lambda = f.get_double_list("lambda", c.lambda);
  std::vector<long long> taps = f.get_int_list("tap_layers", {1});
  c.tap_layers.clear();
  for (auto t : taps) {
    if (t < 0) throw ParseError("config: tap_layers must be >= 0");
    c.tap_layers.push_back(static_cast<std::size_t>(t));
  }
  auto nonneg = [&](const std::string& key, long long fallback) {
    const long long v = f.get_int(key, fallback);
    if (v < 0) throw ParseError("config: " + key + " must be >= 0");
    return v;
  };
  c.batch_size = static_cast<std::size_t>(nonneg("batch_size", 32));
  c.epochs = static_cast<std::size_t>(nonneg("epochs", 50));
  c.base_lr = f.get_double("base_lr", c.base_lr);
  c.fc_lr_multiplier = f.get_double("fc_lr_multiplier", c.fc_lr_multiplier);
  c.weight_decay = f.get_double("weight_decay", c.weight_decay);
  c.momentum = f.get_double("momentum", c.momentum);
  c.seed = static_cast<std::uint64_t>(nonneg("seed", 0));
  c.lambda_ramp_epochs = static_cast<std::size_t>(nonneg("lambda_ramp_epochs", 0));
  c.hidden.clear();
  for (auto w : f.get_int_list("hidden", {64, 32})) c.hidden.push_back(static_cast<Eigen::Index>(w));

  const std::string kernel = f.get_string("kernel", "auto");
  const std::string sigma = f.get_string("sigma", "median");
  if (kernel != "auto" || f.has("sigma")) {
    std::optional<double> fixed;
    if (sigma != "median") {
      double v = 0.0;
      if (!parse_double(sigma, v)) throw ParseError("config: sigma must be 'median' or a number");
      fixed = v;
    }
    const std::string family =
        kernel == "auto" ? (c.adapt_loss == AdaptLoss::standard_mmd ? "gaussian" : "mixture") : kernel;
    if (family == "gaussian") {
      c.kernel = fixed ? KernelSpec::gaussian(*fixed) : KernelSpec::gaussian_median();
    } else if (family == "mixture") {
      c.kernel = fixed ? KernelSpec::default_mixture(BandwidthMode::fixed, *fixed) : KernelSpec::default_mixture();
    } else {
      throw ParseError("config: kernel must be auto, gaussian or mixture");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  const KeyValueFile f = KeyValueFile::load(path);
  f.reject_unknown(experiment_config_keys());
  return experiment_config_from(f);
}

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double class_loss = 0.0;
  /// Mean over steps of the unweighted discrepancy (summed over tapped layers).
  double adapt_loss_value = 0.0;
  double joint_loss = 0.0;
  double source_accuracy = 0.0;
  std::optional<double> target_accuracy;
  std::optional<double> macro_f1_target;
  double wall_time_seconds = 0.0;
};

struct StepRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 0-based within the epoch
  double class_loss = 0.0;
  std::vector<double> adapt_values;       // one per tapped layer, unweighted
  std::vector<double> effective_lambda;  // after the ramp
  double joint_loss = 0.0;
};

/// Record for the metrics log. Wall time is only written when asked for, so
/// that logs of repeated runs compare byte for byte.
inline nlohmann::json to_json(const EpochMetrics& m, bool with_timing = false) {
  nlohmann::json j{{"record", "epoch"},
                   {"epoch", m.epoch},
                   {"class_loss", m.class_loss},
                   {"adapt_loss", m.adapt_loss_value},
                   {"joint_loss", m.joint_loss},
                   {"source_accuracy", m.source_accuracy}};
  if (m.target_accuracy) j["target_accuracy"] = *m.target_accuracy;
  if (m.macro_f1_target) j["macro_f1_target"] = *m.macro_f1_target;
  if (with_timing) j["wall_time_seconds"] = m.wall_time_seconds;
  return j;
}

inline nlohmann::json to_json(const StepRecord& s) {
  return {{"record", "step"},         {"epoch", s.epoch},           {"step", s.step},
          {"class_loss", s.class_loss}, {"adapt_values", s.adapt_values}, {"lambda", s.effective_lambda},
          {"joint_loss", s.joint_loss}};
}

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  ClassificationReport report;
};

/// Argmax predictions (ties to the smaller class index) scored against labels.
inline EvalResult evaluate(const MlpModel& model, const LabeledDataset& data) {
  if (data.n() == 0) throw InputError("evaluate: empty dataset");
  if (data.d() != model.input_dim()) {
    throw InputError("evaluate: data has " + std::to_string(data.d()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  }
  if (data.num_classes() != model.num_classes()) throw InputError("evaluate: class count mismatch");
  const std::vector<int> pred = predict(model, data.features().data());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += (pred[i] == data.labels()[i]);
  EvalResult r;
  r.accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
  r.confusion = confusion(data.labels(), pred, data.num_classes(), data.class_names());
  r.report = report(r.confusion);
  return r;
}

struct TrainOptions {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochMetrics> epochs;
};

/// Random substreams used by train(), exposed for reference loops in tests.
namespace train_streams {
inline constexpr std::uint64_t source_order = 0x20;
inline constexpr std::uint64_t target_order = 0x21;
}  // namespace train_streams

namespace detail {

struct AdaptTerm {
  double value = 0.0;
  Matrix source_grad;
  Matrix target_grad;
};

inline AdaptTerm adapt_term(AdaptLoss loss, const KernelSpec& kernel, const Matrix& fs, const Matrix& ft) {
  const FeatureMatrix s(fs);
  const FeatureMatrix t(ft);
  if (loss == AdaptLoss::coral) {
    CoralGradient g = coral_gradient(s, t);
    return {g.value, std::move(g.source), std::move(g.target)};
  }
  MmdGradient g;
  try {
    g = mmd_gradient(kernel, s, t);
  } catch (const DegenerateDataError&) {
    // Every pooled point coincides: the discrepancy is exactly zero for any
    // bandwidth, so use the unscaled multipliers.
    g = mmd_gradient(with_base_sigma(kernel, 1.0), s, t);
  }
  const double v = (g.value < 0.0 && g.value >= -1e-12) ? 0.0 : g.value;
  return {v, std::move(g.source), std::move(g.target)};
}

inline Matrix gather_rows(const Matrix& x, const std::vector<Eigen::Index>& order, std::size_t begin,
                          std::size_t count) {
  Matrix out(static_cast<Eigen::Index>(count), x.cols());
  for (std::size_t i = 0; i < count; ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(order[begin + i]);
  return out;
}

inline void require_finite(double v, std::size_t epoch, std::size_t step, const std::string& what) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite " + what + " at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step) + " (value " + std::to_string(v) + ")");
  }
}

}  // namespace detail

/// Minibatch SGD on  L = CE(source batch) + sum_i lambda_i * D(source tap_i, target tap_i).
///
/// Each epoch visits floor(n_S / batch_size) source batches in a fresh seeded
/// order; target batches come from an independent order that is reshuffled
/// whenever it runs out. The update is
///   v <- momentum * v - lr * (g + weight_decay * w),  w <- w + v
/// with lr = base_lr * fc_lr_multiplier on the output layer. Biases are not
/// decayed. Target labels are never read; `eval_target` only feeds the log.
inline TrainResult train(const ExperimentConfig& config, const LabeledDataset& source,
                         const FeatureMatrix& target_features,
                         const std::optional<LabeledDataset>& eval_target = std::nullopt,
                         const TrainOptions& options = {}) {
  config.validate();
  const bool adapting = config.adapt_loss != AdaptLoss::none;
  if (source.n() == 0) throw InputError("train: empty source dataset");
  if (static_cast<std::size_t>(source.n()) < config.batch_size) {
    throw InputError("train: source has fewer samples than batch_size");
  }
  if (adapting) {
    require_same_dim(source.features(), target_features, "train");
    if (static_cast<std::size_t>(target_features.n()) < config.batch_size) {
      throw InputError("train: target has fewer samples than batch_size");
    }
  }
  if (eval_target) {
    if (eval_target->d() != source.d()) throw InputError("train: eval target dimension mismatch");
    if (eval_target->class_names() != source.class_names()) throw InputError("train: eval target classes differ");
  }

  std::vector<Eigen::Index> dims{source.d()};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(source.num_classes());
  TrainResult result;
  result.model = init_model(dims, config.seed);
  MlpModel& model = result.model;
  ModelGradient velocity = ModelGradient::zeros_like(model);
  const KernelSpec kernel = config.effective_kernel();
  const std::vector<std::size_t> taps = adapting ? config.tap_layers : std::vector<std::size_t>{};

  Rng source_rng = make_stream(config.seed, train_streams::source_order);
  Rng target_rng = make_stream(config.seed, train_streams::target_order);
  std::vector<Eigen::Index> source_order(static_cast<std::size_t>(source.n()));
  std::vector<Eigen::Index> target_order(static_cast<std::size_t>(adapting ? target_features.n() : 0));
  std::iota(target_order.begin(), target_order.end(), Eigen::Index{0});
  std::shuffle(target_order.begin(), target_order.end(), target_rng);
  std::size_t target_cursor = 0;

  const std::size_t bs = config.batch_size;
  const std::size_t steps = static_cast<std::size_t>(source.n()) / bs;
  const std::size_t last = model.depth() - 1;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double ramp = config.lambda_ramp_epochs == 0
                            ? 1.0
                            : std::min(1.0, static_cast<double>(epoch - 1) /
                                                static_cast<double>(config.lambda_ramp_epochs));
    std::iota(source_order.begin(), source_order.end(), Eigen::Index{0});
    std::shuffle(source_order.begin(), source_order.end(), source_rng);
    double class_sum = 0.0, adapt_sum = 0.0, joint_sum = 0.0;

    for (std::size_t step = 0; step < steps; ++step) {
      const Matrix xs = detail::gather_rows(source.features().data(), source_order, step * bs, bs);
      std::vector<int> ys(bs);
      for (std::size_t i = 0; i < bs; ++i) ys[i] = source.labels()[static_cast<std::size_t>(source_order[step * bs + i])];

      const ForwardTrace tr_s = forward(model, xs, taps);
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.class_loss = cross_entropy(tr_s, ys);
      detail::require_finite(rec.class_loss, epoch, step, "classification loss");
      rec.joint_loss = rec.class_loss;

      std::vector<TapGradient> src_inject, tgt_inject;
      std::optional<ForwardTrace> tr_t;
      if (adapting) {
        if (target_cursor + bs > target_order.size()) {
          std::shuffle(target_order.begin(), target_order.end(), target_rng);
          target_cursor = 0;
        }
        tr_t = forward(model, detail::gather_rows(target_features.data(), target_order, target_cursor, bs), taps);
        target_cursor += bs;
        for (std::size_t i = 0; i < taps.size(); ++i) {
          const std::size_t layer = taps[i];
          if (!tr_s.post[layer].allFinite() || !tr_t->post[layer].allFinite()) {
            throw NumericError("non-finite activations at tap layer " + std::to_string(layer) + ", epoch " +
                               std::to_string(epoch) + ", step " + std::to_string(step));
          }
          detail::AdaptTerm term = detail::adapt_term(config.adapt_loss, kernel, tr_s.post[layer], tr_t->post[layer]);
          detail::require_finite(term.value, epoch, step, to_string(config.adapt_loss) + " loss");
          const double lam = config.lambda[i] * ramp;
          rec.adapt_values.push_back(term.value);
          rec.effective_lambda.push_back(lam);
          rec.joint_loss += lam * term.value;
          src_inject.push_back({layer, lam * term.source_grad});
          tgt_inject.push_back({layer, lam * term.target_grad});
        }
      }

      ModelGradient grad = backward(model, tr_s, ys, src_inject);
      if (tr_t) grad += backward(model, *tr_t, {}, tgt_inject);

      if (velocity.weight.size() != model.depth()) throw InternalError("momentum buffer depth drifted");
      for (std::size_t l = 0; l < model.depth(); ++l) {
        auto& layer = model.layers[l];
        if (velocity.weight[l].rows() != layer.weight.rows() || velocity.weight[l].cols() != layer.weight.cols() ||
            velocity.bias[l].size() != layer.bias.size()) {
          throw InternalError("momentum buffer shape drifted at layer " + std::to_string(l));
        }
        const double lr = l == last ? config.base_lr * config.fc_lr_multiplier : config.base_lr;
        velocity.weight[l] = config.momentum * velocity.weight[l] -
                             lr * (grad.weight[l] + config.weight_decay * layer.weight);
        velocity.bias[l] = config.momentum * velocity.bias[l] - lr * grad.bias[l];
        layer.weight += velocity.weight[l];
        layer.bias += velocity.bias[l];
      }

      class_sum += rec.class_loss;
      for (double v : rec.adapt_values) adapt_sum += v;
      joint_sum += rec.joint_loss;
      if (options.on_step) options.on_step(rec);
    }

    EpochMetrics m;
    m.epoch = epoch;
    const double denom = static_cast<double>(std::max<std::size_t>(steps, 1));
    m.class_loss = class_sum / denom;
    m.adapt_loss_value = adapt_sum / denom;
    m.joint_loss = joint_sum / denom;
    m.source_accuracy = evaluate(model, source).accuracy;
    if (eval_target) {
      const EvalResult ev = evaluate(model, *eval_target);
      m.target_accuracy = ev.accuracy;
      m.macro_f1_target = ev.report.macro_f1;
    }
    m.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.on_epoch) options.on_epoch(m);
    result.epochs.push_back(m);
  }
  return result;
}

}  // namespace rkmmd
