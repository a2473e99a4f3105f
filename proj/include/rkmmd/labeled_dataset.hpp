#pragma once

#include "rkmmd/core.hpp"

#include <string>
#include <vector>

namespace rkmmd {

/// Features plus dense integer labels in {0..C-1}.
class LabeledDataset {
 public:
  LabeledDataset(FeatureMatrix features, std::vector<int> labels, std::vector<std::string> class_names)
      : features_(std::move(features)), labels_(std::move(labels)), class_names_(std::move(class_names)) {
    if (class_names_.size() < 2) throw InputError("labeled dataset needs at least 2 classes");
    if (static_cast<Eigen::Index>(labels_.size()) != features_.n()) {
      throw InputError("label count does not match sample count");
    }
    for (int y : labels_) {
      if (y < 0 || y >= num_classes()) {
        throw InputError("label " + std::to_string(y) + " out of range for " +
                         std::to_string(num_classes()) + " classes");
      }
    }
  }

  /// Class names "0", "1", ... for generated data.
  static std::vector<std::string> numbered_classes(int c) {
    std::vector<std::string> names;
    for (int i = 0; i < c; ++i) names.push_back(std::to_string(i));
    return names;
  }

  const FeatureMatrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  int num_classes() const { return static_cast<int>(class_names_.size()); }
  Eigen::Index n() const { return features_.n(); }
  Eigen::Index d() const { return features_.d(); }

  /// Rows selected by `rows`, in that order.
  LabeledDataset subset(const std::vector<Eigen::Index>& rows) const {
    Matrix x(static_cast<Eigen::Index>(rows.size()), d());
    std::vector<int> y;
    y.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = features_.row(rows[i]);
      y.push_back(labels_[static_cast<std::size_t>(rows[i])]);
    }
    return LabeledDataset(FeatureMatrix(std::move(x)), std::move(y), class_names_);
  }

 private:
  FeatureMatrix features_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
};

}  // namespace rkmmd
