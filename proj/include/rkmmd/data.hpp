#pragma once

#include "rkmmd/config_file.hpp"
#include "rkmmd/core.hpp"
#include "rkmmd/labeled_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// =============================================================================
// Synthetic domain-shift generators and CSV feature files
// =============================================================================

namespace rkmmd {

enum class Generator { gaussian_mixture, two_arcs };

inline std::string to_string(Generator g) {
  return g == Generator::gaussian_mixture ? "gaussian-mixture" : "two-arcs";
}

/// Source and target share class-conditional laws; the target is then rotated
/// in its first two coordinates by `rotation_degrees` and translated.
struct ShiftSpec {
  Generator generator = Generator::two_arcs;
  int classes = 2;
  Eigen::Index n_per_class = 500;
  Eigen::Index d = 2;
  double rotation_degrees = 30.0;
  std::vector<double> translation;  // empty = zeros
  double noise_scale = 0.1;
  /// Fraction of all samples that belong to the last class; the other classes
  /// keep n_per_class each. Unset = balanced.
  std::optional<double> class_imbalance;

  void validate() const {
    if (classes < 2) throw InputError("shift spec: classes must be >= 2");
    if (generator == Generator::two_arcs && classes != 2) {
      throw InputError("shift spec: two-arcs generates exactly 2 classes");
    }
    if (n_per_class < 1) throw InputError("shift spec: n_per_class must be >= 1");
    if (d < 2) throw InputError("shift spec: d must be >= 2 (rotation acts on the first two dimensions)");
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) throw InputError("shift spec: noise_scale must be > 0");
    if (!std::isfinite(rotation_degrees)) throw InputError("shift spec: rotation must be finite");
    if (!translation.empty() && static_cast<Eigen::Index>(translation.size()) != d) {
      throw InputError("shift spec: translation length must equal d");
    }
    for (double t : translation) {
      if (!std::isfinite(t)) throw InputError("shift spec: translation must be finite");
    }
    if (class_imbalance && !(*class_imbalance > 0.0 && *class_imbalance < 1.0)) {
      throw InputError("shift spec: class_imbalance must lie in (0, 1)");
    }
  }

  /// Samples drawn for class c.
  Eigen::Index class_count(int c) const {
    if (class_imbalance && c == classes - 1) {
      const double r = *class_imbalance;
      return std::max<Eigen::Index>(1, std::llround(static_cast<double>(n_per_class) * r / (1.0 - r)));
    }
    return n_per_class;
  }
};

inline const std::set<std::string>& shift_spec_keys() {
  static const std::set<std::string> keys{"generator",  "classes",     "n_per_class",    "d",
                                          "rotation_degrees", "translation", "noise_scale", "class_imbalance"};
  return keys;
}

/// Reads the shift keys of `f`; other keys are left for the caller to check.
inline ShiftSpec shift_spec_from(const KeyValueFile& f) {
  ShiftSpec s;
  const std::string gen = f.get_string("generator", to_string(s.generator));
  if (gen == "two-arcs") {
    s.generator = Generator::two_arcs;
  } else if (gen == "gaussian-mixture") {
    s.generator = Generator::gaussian_mixture;
  } else {
    throw ParseError("unknown generator '" + gen + "'");
  }
  s.classes = static_cast<int>(f.get_int("classes", s.classes));
  s.n_per_class = f.get_int("n_per_class", s.n_per_class);
  s.d = f.get_int("d", s.d);
  s.rotation_degrees = f.get_double("rotation_degrees", s.rotation_degrees);
  s.translation = f.get_double_list("translation", {});
  s.noise_scale = f.get_double("noise_scale", s.noise_scale);
  if (f.has("class_imbalance")) s.class_imbalance = f.get_double("class_imbalance", 0.0);
  s.validate();
  return s;
}

struct DomainPair {
  LabeledDataset source;
  /// Labels are kept for evaluation only.
  LabeledDataset target;
};

namespace detail {

inline void draw_class(const ShiftSpec& spec, int c, Eigen::Index count, Rng& rng, Matrix& x,
                       Eigen::Index row0) {
  std::normal_distribution<double> noise(0.0, spec.noise_scale);
  std::uniform_real_distribution<double> arc(0.0, std::numbers::pi);
  for (Eigen::Index i = 0; i < count; ++i) {
    auto r = x.row(row0 + i);
    if (spec.generator == Generator::two_arcs) {
      // Interleaved half circles, centred on the origin.
      const double t = arc(rng);
      if (c == 0) {
        r[0] = std::cos(t) - 0.5;
        r[1] = std::sin(t) - 0.25;
      } else {
        r[0] = 1.0 - std::cos(t) - 0.5;
        r[1] = 0.5 - std::sin(t) - 0.25;
      }
    } else {
      // Class means spaced evenly on a circle of radius 2.
      const double angle = 2.0 * std::numbers::pi * c / spec.classes;
      r[0] = 2.0 * std::cos(angle);
      r[1] = 2.0 * std::sin(angle);
    }
    for (Eigen::Index k = 2; k < spec.d; ++k) r[k] = 0.0;
    for (Eigen::Index k = 0; k < spec.d; ++k) r[k] += noise(rng);
  }
}

inline LabeledDataset draw_domain(const ShiftSpec& spec, Rng& rng) {
  Eigen::Index total = 0;
  for (int c = 0; c < spec.classes; ++c) total += spec.class_count(c);
  Matrix x(total, spec.d);
  std::vector<int> y;
  y.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (int c = 0; c < spec.classes; ++c) {
    const Eigen::Index count = spec.class_count(c);
    draw_class(spec, c, count, rng, x, row);
    y.insert(y.end(), static_cast<std::size_t>(count), c);
    row += count;
  }
  return LabeledDataset(FeatureMatrix(std::move(x)), std::move(y),
                        LabeledDataset::numbered_classes(spec.classes));
}

}  // namespace detail

/// Source and target domains; each domain has its own random substream.
inline DomainPair generate(const ShiftSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng source_rng = make_stream(seed, 1);
  Rng target_rng = make_stream(seed, 2);
  LabeledDataset source = detail::draw_domain(spec, source_rng);
  LabeledDataset base = detail::draw_domain(spec, target_rng);

  Matrix x = base.features().data();
  const double theta = spec.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double a = x(i, 0);
    const double b = x(i, 1);
    x(i, 0) = c * a - s * b;
    x(i, 1) = s * a + c * b;
    for (std::size_t k = 0; k < spec.translation.size(); ++k) {
      x(i, static_cast<Eigen::Index>(k)) += spec.translation[k];
    }
  }
  LabeledDataset target(FeatureMatrix(std::move(x)), base.labels(), base.class_names());
  return DomainPair{std::move(source), std::move(target)};
}

// -----------------------------------------------------------------------------
// CSV
// -----------------------------------------------------------------------------
//
// UTF-8, comma separated, header row first, one sample per line. Feature cells
// are decimal floating-point literals. Label cells are arbitrary strings
// (no embedded commas); classes are numbered by sorted distinct value, numeric
// order when every label parses as a number, otherwise byte order.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv_table(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                       " columns, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw ParseError(source + ": missing header row");
  return t;
}

inline Matrix numeric_columns(const CsvTable& t, const std::vector<std::size_t>& cols,
                              const std::string& source) {
  Matrix x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      double v = 0.0;
      const std::string& cell = t.rows[i][cols[j]];
      if (!parse_double(cell, v) || !std::isfinite(v)) {
        throw ParseError(source + ": line " + std::to_string(t.line_numbers[i]) + ", column '" +
                         t.header[cols[j]] + "': not a finite number: '" + cell + "'");
      }
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return x;
}

inline std::vector<std::string> sorted_label_values(std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const bool numeric = std::all_of(values.begin(), values.end(), [](const std::string& v) {
    double d = 0.0;
    return parse_double(v, d);
  });
  if (numeric) {
    std::stable_sort(values.begin(), values.end(), [](const std::string& a, const std::string& b) {
      double x = 0.0, y = 0.0;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
  }
  return values;
}

}  // namespace detail

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return detail::read_csv_table(in, path);
}

/// All columns as features.
inline FeatureMatrix features_from_csv(const CsvTable& t, const std::string& source = "csv") {
  if (t.header.empty()) throw ParseError(source + ": no columns");
  std::vector<std::size_t> cols(t.header.size());
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
  return FeatureMatrix(detail::numeric_columns(t, cols, source));
}

/// `label_column` holds the labels, every other column is a feature. With
/// `known_classes`, labels map onto that list (anything else is an error);
/// otherwise classes are the sorted distinct label values.
inline LabeledDataset labeled_from_csv(const CsvTable& t, const std::string& label_column,
                                       const std::string& source = "csv",
                                       const std::vector<std::string>& known_classes = {}) {
  const auto it = std::find(t.header.begin(), t.header.end(), label_column);
  if (it == t.header.end()) throw InputError(source + ": no label column '" + label_column + "'");
  const auto label_idx = static_cast<std::size_t>(it - t.header.begin());
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j != label_idx) cols.push_back(j);
  }
  if (cols.empty()) throw InputError(source + ": no feature columns");
  Matrix x = detail::numeric_columns(t, cols, source);

  std::vector<std::string> raw;
  raw.reserve(t.rows.size());
  for (const auto& r : t.rows) raw.push_back(r[label_idx]);
  const std::vector<std::string> classes =
      known_classes.empty() ? detail::sorted_label_values(raw) : known_classes;
  if (classes.size() < 2) throw InputError(source + ": need at least 2 distinct labels");
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index.emplace(classes[c], static_cast<int>(c));
  std::vector<int> y;
  y.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto found = index.find(raw[i]);
    if (found == index.end()) {
      throw InputError(source + ": line " + std::to_string(t.line_numbers[i]) + ": unknown label '" +
                       raw[i] + "'");
    }
    y.push_back(found->second);
  }
  return LabeledDataset(FeatureMatrix(std::move(x)), std::move(y), classes);
}

inline FeatureMatrix load_features_csv(const std::string& path) {
  return features_from_csv(read_csv_file(path), path);
}

inline LabeledDataset load_labeled_csv(const std::string& path, const std::string& label_column = "label",
                                       const std::vector<std::string>& known_classes = {}) {
  return labeled_from_csv(read_csv_file(path), label_column, path, known_classes);
}

inline void write_features_csv(std::ostream& out, const FeatureMatrix& x,
                               const std::vector<int>* labels = nullptr,
                               const std::vector<std::string>* class_names = nullptr) {
  for (Eigen::Index j = 0; j < x.d(); ++j) out << (j ? "," : "") << "f" << (j + 1);
  if (labels) out << ",label";
  out << "\n";
  for (Eigen::Index i = 0; i < x.n(); ++i) {
    for (Eigen::Index j = 0; j < x.d(); ++j) out << (j ? "," : "") << format_double(x.data()(i, j));
    if (labels) {
      const int y = (*labels)[static_cast<std::size_t>(i)];
      out << "," << (class_names ? (*class_names)[static_cast<std::size_t>(y)] : std::to_string(y));
    }
    out << "\n";
  }
}

inline void save_features_csv(const std::string& path, const FeatureMatrix& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_features_csv(out, x);
}

inline void save_labeled_csv(const std::string& path, const LabeledDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_features_csv(out, ds.features(), &ds.labels(), &ds.class_names());
}

}  // namespace rkmmd
