#include "rkmmd/data.hpp"
#include "rkmmd/mmd.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace rkmmd {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("rkmmd_data_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name, const std::string& content = {}) const {
    const auto p = (path_ / name).string();
    if (!content.empty()) std::ofstream(p) << content;
    return p;
  }

 private:
  fs::path path_;
};

ShiftSpec gaussian_spec(double rotation, Eigen::Index n_per_class) {
  ShiftSpec s;
  s.generator = Generator::gaussian_mixture;
  s.n_per_class = n_per_class;
  s.rotation_degrees = rotation;
  s.noise_scale = 0.5;
  return s;
}

TEST(Generate, DeterministicPerSeed) {
  const ShiftSpec spec;
  const auto a = generate(spec, 3);
  const auto b = generate(spec, 3);
  const auto c = generate(spec, 4);
  EXPECT_TRUE(a.source.features() == b.source.features());
  EXPECT_TRUE(a.target.features() == b.target.features());
  EXPECT_FALSE(a.source.features() == c.source.features());
}

TEST(Generate, SourceIndependentOfTargetShift) {
  ShiftSpec spec;
  const auto a = generate(spec, 8);
  spec.rotation_degrees = 75.0;
  spec.translation = {1.0, -2.0};
  const auto b = generate(spec, 8);
  EXPECT_TRUE(a.source.features() == b.source.features());
  EXPECT_FALSE(a.target.features() == b.target.features());
}

TEST(Generate, RotationActsOnTheTargetOnly) {
  ShiftSpec spec = gaussian_spec(0.0, 50);
  const auto unrotated = generate(spec, 2);
  spec.rotation_degrees = 90.0;
  spec.translation = {0.5, 0.0};
  const auto rotated = generate(spec, 2);
  const Matrix& x0 = unrotated.target.features().data();
  const Matrix& x1 = rotated.target.features().data();
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    EXPECT_NEAR(x1(i, 0), -x0(i, 1) + 0.5, 1e-12);
    EXPECT_NEAR(x1(i, 1), x0(i, 0), 1e-12);
  }
  EXPECT_EQ(rotated.target.labels(), unrotated.target.labels());
}

TEST(Generate, ClassImbalanceShape) {
  ShiftSpec spec = gaussian_spec(0.0, 1000);
  spec.class_imbalance = 0.35;
  const auto pair = generate(spec, 1);
  const auto count = [&](int c) {
    return std::count(pair.source.labels().begin(), pair.source.labels().end(), c);
  };
  EXPECT_EQ(count(0), 1000);
  EXPECT_EQ(count(1), 538);
}

TEST(Generate, SourceClassMeansMatchSpec) {
  ShiftSpec spec = gaussian_spec(0.0, 2000);
  spec.d = 3;
  spec.classes = 3;
  const auto pair = generate(spec, 5);
  const Matrix& x = pair.source.features().data();
  EXPECT_TRUE(x.allFinite());
  const double tol = 4.0 * spec.noise_scale / std::sqrt(2000.0);
  for (int c = 0; c < 3; ++c) {
    RowVector mean = RowVector::Zero(3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (pair.source.labels()[static_cast<std::size_t>(i)] == c) mean += x.row(i) / 2000.0;
    }
    const double angle = 2.0 * std::numbers::pi * c / 3.0;
    EXPECT_NEAR(mean[0], 2.0 * std::cos(angle), tol);
    EXPECT_NEAR(mean[1], 2.0 * std::sin(angle), tol);
    EXPECT_NEAR(mean[2], 0.0, tol);
  }
}

TEST(Generate, NoShiftPassesPermutationTest) {
  // Same law in both domains: p > 0.05 in at least 90 of 100 seeds.
  ShiftSpec spec = gaussian_spec(0.0, 100);
  int accepted = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pair = generate(spec, seed);
    const auto res = permutation_test(KernelSpec::gaussian_median(), pair.source.features(), pair.target.features(),
                                      99, seed + 1000);
    accepted += res.p_value > 0.05;
  }
  EXPECT_GE(accepted, 90);
}

TEST(Generate, RotationIncreasesMmd) {
  int larger = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto base = generate(gaussian_spec(0.0, 500), seed);
    const auto rot = generate(gaussian_spec(30.0, 500), seed);
    const double m0 = mmd_biased(KernelSpec::gaussian_median(), base.source.features(), base.target.features()).value;
    const double m30 = mmd_biased(KernelSpec::gaussian_median(), rot.source.features(), rot.target.features()).value;
    larger += m30 > m0;
  }
  EXPECT_GE(larger, 95);
}

TEST(ShiftSpecFile, ParsesAndRejects) {
  const auto f = KeyValueFile::parse_string(
      "generator = gaussian-mixture\nclasses = 3\nn_per_class = 10\nd = 4\n"
      "rotation_degrees = 15\ntranslation = 1, 0, 0, 2\nnoise_scale = 0.2\n");
  const ShiftSpec s = shift_spec_from(f);
  EXPECT_EQ(s.generator, Generator::gaussian_mixture);
  EXPECT_EQ(s.classes, 3);
  EXPECT_EQ(s.d, 4);
  EXPECT_EQ(s.translation, (std::vector<double>{1, 0, 0, 2}));
  EXPECT_FALSE(s.class_imbalance);

  EXPECT_THROW(shift_spec_from(KeyValueFile::parse_string("generator = spiral\n")), ParseError);
  EXPECT_THROW(shift_spec_from(KeyValueFile::parse_string("d = 1\n")), InputError);
  EXPECT_THROW(shift_spec_from(KeyValueFile::parse_string("noise_scale = 0\n")), InputError);
  EXPECT_THROW(shift_spec_from(KeyValueFile::parse_string("translation = 1, 2, 3\n")), InputError);
  EXPECT_THROW(shift_spec_from(KeyValueFile::parse_string("classes = 3\n")), InputError);  // two-arcs
  EXPECT_THROW(shift_spec_from(KeyValueFile::parse_string("class_imbalance = 1.5\n")), InputError);
  EXPECT_THROW(KeyValueFile::parse_string("d = 2\nd = 3\n"), ParseError);
  EXPECT_THROW(KeyValueFile::parse_string("just words\n"), ParseError);
  EXPECT_THROW(KeyValueFile::parse_string("bogus = 1\n").reject_unknown(shift_spec_keys()), ParseError);
}

TEST(Csv, LabeledAndUnlabeled) {
  TempDir dir;
  const auto labeled = dir.file("l.csv", "f1,f2,label\n1.5,2,b\n-3,4e-1,a\n0,0,b\n");
  const LabeledDataset ds = load_labeled_csv(labeled);
  EXPECT_EQ(ds.n(), 3);
  EXPECT_EQ(ds.d(), 2);
  EXPECT_EQ(ds.class_names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 0, 1}));
  EXPECT_DOUBLE_EQ(ds.features().data()(1, 1), 0.4);

  const auto unlabeled = dir.file("u.csv", "f1,f2\n1.5,2\n-3,4e-1\n0,0\n");
  const FeatureMatrix x = load_features_csv(unlabeled);
  EXPECT_EQ(x.n(), 3);
  EXPECT_EQ(x.d(), 2);
}

TEST(Csv, NumericLabelsSortNumerically) {
  TempDir dir;
  const auto p = dir.file("n.csv", "x,label\n1,10\n2,2\n3,2\n");
  const LabeledDataset ds = load_labeled_csv(p);
  EXPECT_EQ(ds.class_names(), (std::vector<std::string>{"2", "10"}));
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 0, 0}));
}

TEST(Csv, KnownClassesMapping) {
  TempDir dir;
  const auto p = dir.file("k.csv", "x,label\n1,b\n2,b\n");
  const LabeledDataset ds = load_labeled_csv(p, "label", {"a", "b"});
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 1}));
  EXPECT_THROW(load_labeled_csv(p, "label", {"a", "c"}), InputError);
}

TEST(Csv, Errors) {
  TempDir dir;
  try {
    load_features_csv(dir.file("bad.csv", "f1,f2\n1,2\n3,abc\n"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("f2"), std::string::npos) << msg;
  }
  EXPECT_THROW(load_features_csv(dir.file("ragged.csv", "f1,f2\n1,2\n3\n")), ParseError);
  EXPECT_THROW(load_labeled_csv(dir.file("nolabel.csv", "f1,f2\n1,2\n")), InputError);
  EXPECT_THROW(load_features_csv(dir.file("nan.csv", "f1\nnan\n")), ParseError);
  EXPECT_THROW(load_features_csv((fs::temp_directory_path() / "rkmmd_missing_file.csv").string()), InputError);
}

TEST(Csv, RoundTripOfGeneratedData) {
  TempDir dir;
  ShiftSpec spec = gaussian_spec(20.0, 40);
  spec.d = 3;
  const auto pair = generate(spec, 11);
  const auto p = dir.file("src.csv");
  save_labeled_csv(p, pair.source);
  const LabeledDataset back = load_labeled_csv(p);
  EXPECT_EQ(back.labels(), pair.source.labels());
  EXPECT_LE((back.features().data() - pair.source.features().data()).cwiseAbs().maxCoeff(), 1e-9);

  const auto q = dir.file("tgt.csv");
  save_features_csv(q, pair.target.features());
  EXPECT_LE((load_features_csv(q).data() - pair.target.features().data()).cwiseAbs().maxCoeff(), 1e-9);
}

}  // namespace
}  // namespace rkmmd
