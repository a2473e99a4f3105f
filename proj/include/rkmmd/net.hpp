#pragma once

#include "rkmmd/core.hpp"
#include "rkmmd/labeled_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// =============================================================================
// Feedforward classifier: forward pass, softmax cross-entropy, backpropagation
// =============================================================================

namespace rkmmd {

enum class Activation { relu, identity };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

struct DenseLayer {
  Matrix weight;  // d_in x d_out
  Vector bias;    // d_out
  Activation activation = Activation::relu;

  Eigen::Index d_in() const { return weight.rows(); }
  Eigen::Index d_out() const { return weight.cols(); }
};

/// Chain of dense layers; the last one is linear and emits C logits.
struct MlpModel {
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;

  Eigen::Index input_dim() const { return layers.front().d_in(); }
  Eigen::Index num_classes() const { return layers.back().d_out(); }
  std::size_t depth() const { return layers.size(); }

  void validate() const {
    if (layers.empty()) throw InputError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.bias.size() != layer.d_out()) throw InputError("bias length does not match layer width");
      if (l > 0 && layers[l - 1].d_out() != layer.d_in()) {
        throw InputError("layer " + std::to_string(l) + " input width does not chain");
      }
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
        throw InputError("layer " + std::to_string(l) + " has non-finite parameters");
      }
    }
    if (layers.back().activation != Activation::identity) {
      throw InputError("final layer must be linear");
    }
  }

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    if (a.seed != b.seed || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      const auto& x = a.layers[l];
      const auto& y = b.layers[l];
      if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
          x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias) {
        return false;
      }
    }
    return true;
  }
};

/// Parameter-shaped gradient (or momentum buffer).
struct ModelGradient {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static ModelGradient zeros_like(const MlpModel& m) {
    ModelGradient g;
    for (const auto& layer : m.layers) {
      g.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
      g.bias.push_back(Vector::Zero(layer.bias.size()));
    }
    return g;
  }

  ModelGradient& operator+=(const ModelGradient& other) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
      weight[l] += other.weight[l];
      bias[l] += other.bias[l];
    }
    return *this;
  }

  double squared_norm() const {
    double acc = 0.0;
    for (std::size_t l = 0; l < weight.size(); ++l) acc += weight[l].squaredNorm() + bias[l].squaredNorm();
    return acc;
  }
};

/// Per-layer intermediates of one batch.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;   // affine outputs, one per layer
  std::vector<Matrix> post;  // activations, one per layer; post.back() are the logits
  Matrix probabilities;
  std::vector<std::size_t> tap_layers;

  const Matrix& logits() const { return post.back(); }

  /// Activations of layer `l`, the representation handed to a discrepancy loss.
  FeatureMatrix tap(std::size_t l) const {
    if (l >= post.size()) throw InputError("tap layer out of range");
    return FeatureMatrix(post[l]);
  }
};

/// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline ForwardTrace forward(const MlpModel& model, const Matrix& x,
                            std::span<const std::size_t> tap_layers = {}) {
  if (model.layers.empty()) throw InputError("forward: model has no layers");
  if (x.cols() != model.input_dim()) {
    throw InputError("forward: input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  }
  for (std::size_t t : tap_layers) {
    if (t >= model.depth()) throw InputError("forward: tap layer " + std::to_string(t) + " out of range");
  }
  ForwardTrace tr;
  tr.input = x;
  tr.tap_layers.assign(tap_layers.begin(), tap_layers.end());
  const Matrix* in = &tr.input;
  for (const auto& layer : model.layers) {
    Matrix z = (*in) * layer.weight;
    z.rowwise() += layer.bias.transpose();
    tr.pre.push_back(z);
    if (layer.activation == Activation::relu) z = z.cwiseMax(0.0);
    tr.post.push_back(std::move(z));
    in = &tr.post.back();
  }
  tr.probabilities = softmax(tr.logits());
  return tr;
}

inline ForwardTrace forward(const MlpModel& model, const FeatureMatrix& x,
                            std::span<const std::size_t> tap_layers = {}) {
  return forward(model, x.data(), tap_layers);
}

inline void check_labels(std::span<const int> labels, Eigen::Index n, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw InputError("label count " + std::to_string(labels.size()) + " does not match batch size " +
                     std::to_string(n));
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw InputError("label " + std::to_string(y) + " out of range");
  }
}

/// Mean negative log-probability of the true class, with probabilities clamped
/// at 1e-12 before the log.
inline double cross_entropy(const ForwardTrace& trace, std::span<const int> labels) {
  const Matrix& p = trace.probabilities;
  check_labels(labels, p.rows(), p.cols());
  if (p.rows() == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    acc -= std::log(std::max(p(i, labels[static_cast<std::size_t>(i)]), 1e-12));
  }
  return acc / static_cast<double>(p.rows());
}

/// Gradient injected at the activations of a tapped layer.
struct TapGradient {
  std::size_t layer = 0;
  Matrix grad;  // batch x width of that layer
};

/// Gradients of  cross_entropy(trace, labels) + <injected terms>  with respect
/// to every parameter. Empty `labels` drops the cross-entropy term, which is
/// how the unlabeled target batch receives only its discrepancy gradient.
inline ModelGradient backward(const MlpModel& model, const ForwardTrace& trace,
                              std::span<const int> labels, std::span<const TapGradient> upstream = {}) {
  const std::size_t depth = model.depth();
  if (trace.post.size() != depth) throw InputError("backward: trace does not belong to this model");
  const Eigen::Index n = trace.input.rows();
  for (const auto& tg : upstream) {
    if (tg.layer >= depth) throw InputError("backward: injected gradient layer out of range");
    if (tg.grad.rows() != n || tg.grad.cols() != trace.post[tg.layer].cols()) {
      throw InputError("backward: injected gradient shape mismatch at layer " + std::to_string(tg.layer));
    }
  }

  ModelGradient g = ModelGradient::zeros_like(model);
  Matrix grad_post = Matrix::Zero(n, model.num_classes());
  if (!labels.empty()) {
    check_labels(labels, n, model.num_classes());
    grad_post = trace.probabilities;
    for (Eigen::Index i = 0; i < n; ++i) grad_post(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    grad_post /= static_cast<double>(n);
  }

  for (std::size_t l = depth; l-- > 0;) {
    for (const auto& tg : upstream) {
      if (tg.layer == l) grad_post += tg.grad;
    }
    const auto& layer = model.layers[l];
    Matrix grad_pre = grad_post;
    if (layer.activation == Activation::relu) {
      grad_pre.array() *= (trace.pre[l].array() > 0.0).cast<double>();
    }
    const Matrix& in = l == 0 ? trace.input : trace.post[l - 1];
    g.weight[l].noalias() = in.transpose() * grad_pre;
    g.bias[l] = grad_pre.colwise().sum().transpose();
    if (l > 0) grad_post = grad_pre * layer.weight.transpose();
  }
  return g;
}

/// Fresh model for widths dims[0] -> ... -> dims.back(). Hidden layers are ReLU
/// with N(0, 2/d_in) weights; the output layer draws N(0, 0.005^2) weights.
/// Biases start at zero.
inline MlpModel init_model(std::span<const Eigen::Index> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw InputError("init_model: need at least input and output widths");
  for (auto w : dims) {
    if (w < 1) throw InputError("init_model: layer widths must be >= 1");
  }
  constexpr double kOutputStd = 0.005;
  MlpModel m;
  m.seed = seed;
  Rng rng = make_stream(seed, 0x10);
  const std::size_t depth = dims.size() - 1;
  for (std::size_t l = 0; l < depth; ++l) {
    const bool last = (l + 1 == depth);
    const double std_dev = last ? kOutputStd : std::sqrt(2.0 / static_cast<double>(dims[l]));
    std::normal_distribution<double> normal(0.0, std_dev);
    DenseLayer layer;
    layer.weight.resize(dims[l], dims[l + 1]);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = normal(rng);
    }
    layer.bias = Vector::Zero(dims[l + 1]);
    layer.activation = last ? Activation::identity : Activation::relu;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

inline MlpModel init_model(std::initializer_list<Eigen::Index> dims, std::uint64_t seed) {
  return init_model(std::span<const Eigen::Index>(dims.begin(), dims.size()), seed);
}

/// Argmax per row; ties go to the smaller class index.
inline std::vector<int> predict(const MlpModel& model, const Matrix& x) {
  const ForwardTrace tr = forward(model, x);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < tr.logits().rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < tr.logits().cols(); ++c) {
      if (tr.logits()(i, c) > tr.logits()(i, best)) best = c;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

// -----------------------------------------------------------------------------
// Checkpoint file
// -----------------------------------------------------------------------------
//
//   rkmmd-checkpoint 1
//   seed <u64>
//   classes <name>,<name>,...
//   layers <L>
//   layer <d_in> <d_out> <relu|identity>      (repeated L times, each followed by)
//   weight <d_in*d_out numbers, row-major>
//   bias <d_out numbers>
//   end
//
// Numbers use the shortest decimal form that round-trips exactly.

struct Checkpoint {
  MlpModel model;
  std::vector<std::string> class_names;
};

inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  ck.model.validate();
  out << "rkmmd-checkpoint " << kCheckpointVersion << "\n";
  out << "seed " << ck.model.seed << "\n";
  out << "classes ";
  for (std::size_t c = 0; c < ck.class_names.size(); ++c) out << (c ? "," : "") << ck.class_names[c];
  out << "\n";
  out << "layers " << ck.model.layers.size() << "\n";
  for (const auto& layer : ck.model.layers) {
    out << "layer " << layer.d_in() << " " << layer.d_out() << " " << to_string(layer.activation) << "\n";
    out << "weight";
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) out << " " << format_double(layer.weight(i, j));
    }
    out << "\nbias";
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j) out << " " << format_double(layer.bias[j]);
    out << "\n";
  }
  out << "end\n";
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path);
  write_checkpoint(out, ck);
  if (!out) throw InputError("failed writing checkpoint " + path);
}

inline Checkpoint read_checkpoint(std::istream& in) {
  auto fail = [](const std::string& msg) -> ParseError { return ParseError("checkpoint: " + msg); };
  std::string line;
  auto next_line = [&](std::string_view expect_key) {
    if (!std::getline(in, line)) throw fail("unexpected end of file, expected '" + std::string(expect_key) + "'");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != expect_key) throw fail("expected '" + std::string(expect_key) + "', got '" + key + "'");
    std::string rest;
    std::getline(ls, rest);
    if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
    return rest;
  };
  auto read_numbers = [&](std::string_view key, Eigen::Index count) {
    std::istringstream ls(next_line(key));
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      if (!parse_double(tok, v) || !std::isfinite(v)) throw fail("bad number '" + tok + "'");
      vals.push_back(v);
    }
    if (static_cast<Eigen::Index>(vals.size()) != count) {
      throw fail(std::string(key) + " has " + std::to_string(vals.size()) + " values, expected " +
                 std::to_string(count));
    }
    return vals;
  };

  if (!std::getline(in, line)) throw fail("empty file");
  if (line != "rkmmd-checkpoint " + std::to_string(kCheckpointVersion)) {
    throw fail("unsupported header '" + line + "'");
  }
  Checkpoint ck;
  try {
    ck.model.seed = std::stoull(next_line("seed"));
  } catch (const std::logic_error&) {
    throw fail("bad seed");
  }
  {
    std::string names = next_line("classes");
    std::stringstream ss(names);
    std::string name;
    while (std::getline(ss, name, ',')) ck.class_names.push_back(name);
  }
  long layers = 0;
  try {
    layers = std::stol(next_line("layers"));
  } catch (const std::logic_error&) {
    throw fail("bad layer count");
  }
  if (layers < 1) throw fail("layer count must be >= 1");
  for (long l = 0; l < layers; ++l) {
    std::istringstream ls(next_line("layer"));
    long din = 0, dout = 0;
    std::string act;
    if (!(ls >> din >> dout >> act) || din < 1 || dout < 1) throw fail("bad layer header");
    DenseLayer layer;
    if (act == "relu") {
      layer.activation = Activation::relu;
    } else if (act == "identity") {
      layer.activation = Activation::identity;
    } else {
      throw fail("unknown activation '" + act + "'");
    }
    const auto w = read_numbers("weight", din * dout);
    layer.weight.resize(din, dout);
    for (long i = 0; i < din; ++i) {
      for (long j = 0; j < dout; ++j) layer.weight(i, j) = w[static_cast<std::size_t>(i * dout + j)];
    }
    const auto b = read_numbers("bias", dout);
    layer.bias = Eigen::Map<const Vector>(b.data(), dout);
    ck.model.layers.push_back(std::move(layer));
  }
  next_line("end");
  try {
    ck.model.validate();
  } catch (const InputError& e) {
    throw fail(e.what());
  }
  if (static_cast<Eigen::Index>(ck.class_names.size()) != ck.model.num_classes()) {
    throw fail("class name count does not match output width");
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace rkmmd
