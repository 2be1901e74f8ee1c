#include <doctest.h>

#include <rfsvm/data.hpp>

#include "synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace rfsvm;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("rfsvm_test_" + name);
  std::ofstream(path) << body;
  return path;
}

Dataset labeled(std::vector<int> labels, Index m = 2) {
  FeatureMatrix x(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = static_cast<double>(i * 10 + j);
  int c = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::string> names;
  for (int k = 0; k < c; ++k) names.push_back("c" + std::to_string(k));
  return Dataset("t", std::move(x), std::move(labels), std::move(names));
}

void check_split(const Dataset& d, const SplitPlan& s) {
  std::vector<Index> all(s.train_indices);
  all.insert(all.end(), s.test_indices.begin(), s.test_indices.end());
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == d.n());
  for (Index i = 0; i < d.n(); ++i) CHECK(all[i] == i);
  CHECK(s.train_indices.size() == (d.n() + 1) / 2);
  std::vector<Index> per_class(d.c(), 0);
  for (Index i : s.train_indices) ++per_class[static_cast<Index>(d.label(i))];
  for (Index j = 0; j < d.c(); ++j) {
    const double half = static_cast<double>(d.class_counts()[j]) / 2.0;
    CHECK(std::abs(static_cast<double>(per_class[j]) - half) <= 1.0);
    CHECK(per_class[j] >= 1);
    CHECK(per_class[j] < d.class_counts()[j]);
  }
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("load_csv reads a small file") {
    const auto path = write_temp("small.csv", "x1,x2,y\n1,2,a\n3,4,a\n5,6,b\n7,8,b\n");
    const auto d = load_csv(path, std::string("y"));
    CHECK(d.n() == 4);
    CHECK(d.m() == 2);
    CHECK(d.c() == 2);
    CHECK(d.class_counts() == std::vector<Index>{2, 2});
    CHECK(d.features()(2, 1) == 6.0);
    CHECK(d.name() == "rfsvm_test_small");
  }

  TEST_CASE("load_csv label column by index and first-appearance encoding") {
    const auto path = write_temp("byindex.csv", "y,x\nzeta,1\nalpha,2\nzeta,3\n");
    const auto d = load_csv(path, Index{0});
    CHECK(d.m() == 1);
    CHECK(d.labels() == std::vector<int>{0, 1, 0});
    CHECK(d.class_names() == std::vector<std::string>{"zeta", "alpha"});
    const std::vector<int> encoded{1, 0, 0};
    CHECK(d.decode(encoded) == std::vector<std::string>{"alpha", "zeta", "zeta"});
  }

  TEST_CASE("load_csv errors") {
    CHECK_THROWS_WITH_AS(load_csv("/nonexistent/file.csv", std::string("y")), doctest::Contains("cannot open"), Error);
    const auto nan = write_temp("nan.csv", "x,y\n1,a\nnan,b\n");
    CHECK_THROWS_WITH_AS(load_csv(nan, std::string("y")), doctest::Contains("non-finite feature"), Error);
    const auto text = write_temp("text.csv", "x,y\n1,a\nabc,b\n");
    CHECK_THROWS_WITH_AS(load_csv(text, std::string("y")), doctest::Contains("non-numeric feature"), Error);
    const auto single = write_temp("single.csv", "x,y\n1,a\n2,a\n");
    CHECK_THROWS_WITH_AS(load_csv(single, std::string("y")), doctest::Contains("unusable for classification"), Error);
    const auto ragged = write_temp("ragged.csv", "x,y\n1,a\n2\n");
    CHECK_THROWS_AS(load_csv(ragged, std::string("y")), Error);
    const auto nolabel = write_temp("nolabel.csv", "x,y\n1,a\n2,b\n");
    CHECK_THROWS_AS(load_csv(nolabel, std::string("label")), Error);
  }

  TEST_CASE("save_csv round trip") {
    const auto d = testing::make_blobs(5, 3, 4, 1.0, 9);
    const auto path = std::filesystem::temp_directory_path() / "rfsvm_test_roundtrip.csv";
    save_csv(d, path);
    const auto back = load_csv(path, std::string("label"));
    CHECK(back.features() == d.features());
    CHECK(back.decode(back.labels()) == d.decode(d.labels()));
  }

  TEST_CASE("wdbc fixture") {
    const auto d = load_csv(std::filesystem::path(RFSVM_SOURCE_DIR) / "data" / "wdbc.csv",
                            std::string("diagnosis"));
    CHECK(d.n() == 569);
    CHECK(d.m() == 30);
    CHECK(d.c() == 2);
    CHECK(imbalance_ratio(d) == doctest::Approx(1.684).epsilon(0.0005));
  }

  TEST_CASE("dataset invariants are enforced") {
    FeatureMatrix x(2, 1);
    x << 1.0, std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Dataset("bad", x, {0, 1}, {"a", "b"}), Error);
    FeatureMatrix ok(2, 1);
    ok << 1.0, 2.0;
    CHECK_THROWS_AS(Dataset("bad", ok, {0, 2}, {"a", "b"}), Error);
    CHECK_THROWS_AS(Dataset("bad", ok, {0, 0}, {"a", "b"}), Error);
  }

  TEST_CASE("omega examples") {
    const std::vector<Index> leukemia{47, 25};
    CHECK(omega(leukemia, 7129) == doctest::Approx(72.0 / (2.0 * 7129.0)));
    CHECK(std::round(omega(leukemia, 7129) * 1000.0) / 1000.0 == doctest::Approx(0.005));
    const std::vector<Index> spambase{2788, 1813};
    CHECK(omega(spambase, 57) == doctest::Approx(40.36).epsilon(1e-4));
    const std::vector<Index> single{100};
    CHECK(omega(single, 100) == 1.0);
  }

  TEST_CASE("omega times c times m equals n") {
    for (Seed s = 0; s < 20; ++s) {
      Rng rng(s);
      std::vector<Index> counts(2 + rng.below(8));
      Index n = 0;
      for (auto& v : counts) n += v = 1 + rng.below(500);
      const Index m = 1 + rng.below(20000);
      const double back = omega(counts, m) * static_cast<double>(counts.size()) * static_cast<double>(m);
      CHECK(std::abs(back - static_cast<double>(n)) <= 1e-12 * static_cast<double>(n));
    }
  }

  TEST_CASE("imbalance ratio examples") {
    CHECK(imbalance_ratio(std::vector<Index>{357, 212}) == doctest::Approx(1.684).epsilon(0.0005));
    CHECK(imbalance_ratio(std::vector<Index>{19, 19}) == 1.0);
    CHECK(imbalance_ratio(std::vector<Index>{10, 10, 10}) == 1.0);
    CHECK_THROWS_AS(imbalance_ratio(std::vector<Index>{10}), Error);
  }

  TEST_CASE("bands") {
    CHECK(band_of(0.0149) == HdlssBand::very_hdlss);
    CHECK(band_of(0.015) == HdlssBand::mid_hdlss);
    CHECK(band_of(0.999) == HdlssBand::mid_hdlss);
    CHECK(band_of(1.0) == HdlssBand::non_hdlss);
    const auto p = profile(labeled({0, 0, 1, 1}, 2));
    CHECK(p.omega == 1.0);
    CHECK(p.band == HdlssBand::non_hdlss);
    CHECK(p.imbalance_ratio >= 1.0);
  }

  TEST_CASE("half split of four instances") {
    const auto d = labeled({0, 0, 1, 1});
    const auto splits = random_half_splits(d, 1, 5);
    REQUIRE(splits.size() == 1);
    REQUIRE(splits[0].train_indices.size() == 2);
    CHECK(d.label(splits[0].train_indices[0]) != d.label(splits[0].train_indices[1]));
  }

  TEST_CASE("half splits are deterministic and sized") {
    std::vector<int> labels(200);
    for (Index i = 0; i < 200; ++i) labels[i] = static_cast<int>(i % 2);
    const auto d = labeled(labels);
    const auto a = random_half_splits(d, 10, 42);
    const auto b = random_half_splits(d, 10, 42);
    REQUIRE(a.size() == 10);
    for (Index r = 0; r < 10; ++r) {
      CHECK(a[r].train_indices == b[r].train_indices);
      CHECK(a[r].test_indices == b[r].test_indices);
      CHECK(a[r].train_indices.size() == 100);
      CHECK(a[r].test_indices.size() == 100);
    }
    CHECK(a[0].train_indices != a[1].train_indices);
    CHECK(random_half_splits(d, 1, 43)[0].train_indices != a[0].train_indices);
  }

  TEST_CASE("half split invariants on random class profiles") {
    for (Seed s = 0; s < 30; ++s) {
      Rng rng(s);
      std::vector<int> labels;
      const Index c = 2 + rng.below(4);
      for (Index k = 0; k < c; ++k)
        for (Index i = 0, size = 2 + rng.below(15); i < size; ++i) labels.push_back(static_cast<int>(k));
      Rng order(s + 100);
      shuffle(labels, order);
      const auto d = labeled(labels);
      for (const auto& split : random_half_splits(d, 3, s)) check_split(d, split);
    }
  }

  TEST_CASE("half split errors") {
    CHECK_THROWS_AS(random_half_splits(labeled({0, 0, 0, 1}), 1, 0), Error);
  }

  TEST_CASE("kfold partitions") {
    const auto d = labeled({0, 0, 0, 1, 1, 1});
    const IndexList train{0, 1, 2, 3, 4, 5};
    const auto plan = kfold_indices(train, d.labels(), 3, 7);
    REQUIRE(plan.folds.size() == 3);
    std::multiset<Index> seen;
    for (const auto& f : plan.folds) {
      CHECK(f.validate.size() == 2);
      CHECK(f.fit.size() == 4);
      seen.insert(f.validate.begin(), f.validate.end());
      for (Index v : f.validate) CHECK(std::find(f.fit.begin(), f.fit.end(), v) == f.fit.end());
    }
    CHECK(seen == std::multiset<Index>(train.begin(), train.end()));
    CHECK(plan.warnings.empty());
  }

  TEST_CASE("kfold stratifies three classes of three") {
    const auto d = labeled({0, 1, 2, 0, 1, 2, 0, 1, 2});
    const IndexList train{0, 1, 2, 3, 4, 5, 6, 7, 8};
    for (Seed s = 0; s < 10; ++s) {
      for (const auto& f : kfold_indices(train, d.labels(), 3, s).folds) {
        std::set<int> classes;
        for (Index v : f.validate) classes.insert(d.label(v));
        CHECK(f.validate.size() == 3);
        CHECK(classes.size() == 3);
      }
    }
  }

  TEST_CASE("kfold on a subset with a small class warns") {
    const auto d = labeled({0, 0, 0, 0, 1, 1, 0, 1});
    const IndexList train{0, 2, 3, 4, 6};
    const auto plan = kfold_indices(train, d.labels(), 3, 1);
    CHECK(plan.warnings.size() == 1);
    std::multiset<Index> seen;
    for (const auto& f : plan.folds) seen.insert(f.validate.begin(), f.validate.end());
    CHECK(seen == std::multiset<Index>(train.begin(), train.end()));
    CHECK_THROWS_AS(kfold_indices(train, d.labels(), 6, 1), Error);
    CHECK_THROWS_AS(kfold_indices(train, d.labels(), 1, 1), Error);
  }

  TEST_CASE("split manifest round trip") {
    const auto d = labeled({0, 1, 0, 1, 0, 1, 1});
    const auto splits = random_half_splits(d, 4, 3);
    const auto back = splits_from_json(splits_to_json(splits));
    REQUIRE(back.size() == splits.size());
    for (Index r = 0; r < back.size(); ++r) {
      CHECK(back[r].seed == splits[r].seed);
      CHECK(back[r].train_indices == splits[r].train_indices);
      CHECK(back[r].test_indices == splits[r].test_indices);
    }
  }
}
