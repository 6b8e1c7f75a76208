#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "softmark/attacks.hpp"
#include "softmark/datasets.hpp"
#include "softmark/error.hpp"
#include "softmark/metrics.hpp"
#include "test_util.hpp"

using namespace softmark;
using softmark::testing::random_tensor;

namespace {

// Zero the output layer so every row gets the same logit.
Detector constant_detector(std::size_t classes, double logit) {
  Detector d(classes, {8, 8, 8, 8}, InputMode::raw, 1);
  auto st = nn::state_of(d.net());
  st[st.size() - 2].value->fill(0.0);
  st.back().value->fill(logit);
  return d;
}

// Flags a row iff its first score exceeds its second.
Detector first_vs_second_detector() {
  Detector d(2, {2, 2, 2, 2}, InputMode::raw, 1);
  auto st = nn::state_of(d.net());
  for (auto& s : st) s.value->fill(0.0);
  // layer 0: h0 = relu(x0 - x1); then pass h0 through, final logit = 100 * h - 1e-3
  (*st[0].value)[0] = 1.0, (*st[0].value)[1] = -1.0;
  for (std::size_t l = 2; l < 8; l += 2) (*st[l].value)[0] = 1.0;
  (*st[8].value)[0] = 100.0;
  (*st[9].value)[0] = -1e-3;
  return d;
}

}  // namespace

TEST_CASE("main accuracy") {
  const Tensor s({3, 2}, {1, 0, 0, 1, 1, 0});
  const std::vector<std::size_t> y{0, 1, 1};
  CHECK(main_accuracy(s, y) == doctest::Approx(200.0 / 3));
  CHECK_THROWS_AS(main_accuracy(Tensor({0, 2}), std::vector<std::size_t>{}), InvalidArgument);
}

TEST_CASE("balanced detection set on a 10,000-row split") {
  Rng rng(1);
  const Tensor a = random_tensor({10000, 10}, rng), b = random_tensor({10000, 10}, rng);
  const auto set = balanced_detection_set(a, b, InputMode::raw);
  CHECK(set.inputs.dim(0) == 20000);
  CHECK(std::count(set.labels.begin(), set.labels.end(), 1) == 10000);
  CHECK(std::count(set.labels.begin(), set.labels.end(), 0) == 10000);
  CHECK_THROWS_AS(balanced_detection_set(a, slice_rows(b, 0, 10), InputMode::raw), InvalidArgument);
}

TEST_CASE("wm accuracy of constant and coin-flip detectors") {
  Rng rng(2);
  const Tensor a = random_tensor({500, 4}, rng), b = random_tensor({500, 4}, rng);
  CHECK(wm_accuracy(constant_detector(4, 5.0), a, b) == 50.0);
  CHECK(wm_accuracy(constant_detector(4, -5.0), a, b) == 50.0);
  CHECK(wm_det_rate(constant_detector(4, 5.0), a) == 100.0);
  CHECK(wm_det_rate(constant_detector(4, -5.0), a) == 0.0);

  // coin flip: first score vs second on iid normals
  const Tensor c = random_tensor({10000, 2}, rng), d = random_tensor({10000, 2}, rng);
  CHECK(wm_accuracy(first_vs_second_detector(), c, d) == doctest::Approx(50.0).epsilon(0.06));

  // a perfect rule on shifted banks
  Tensor hi({100, 2}), lo({100, 2});
  for (std::size_t i = 0; i < 100; ++i) hi.at(i, 0) = 1.0, lo.at(i, 1) = 1.0;
  CHECK(wm_accuracy(first_vs_second_detector(), hi, lo) == 100.0);
  CHECK(wm_accuracy(first_vs_second_detector(), lo, hi) == 0.0);
  CHECK_THROWS_AS(wm_accuracy(constant_detector(3, 1.0), a, b), InvalidArgument);
}

TEST_CASE("ownership decision is strict") {
  CHECK(is_owned(98.68));
  CHECK_FALSE(is_owned(85.0));
  CHECK_FALSE(is_owned(52.31));
  const Detector d = constant_detector(4, 5.0);
  CHECK_THROWS_AS(verify(d, Tensor({2, 4}), Tensor()), InvalidArgument);
  const auto v = verify(d, Tensor({2, 4}), Tensor({2, 4}));
  CHECK_FALSE(v.owned);
  CHECK(v.wm_acc == 50.0);
}

TEST_CASE("customization matrix summary") {
  const auto m = summarize_matrix({{99.0, 10.0, 90.0}, {0.0, 95.0, 0.0}, {20.0, 0.0, 80.0}});
  CHECK(m.identified_rate == doctest::Approx((99.0 + 95.0 + 80.0) / 3));
  CHECK(m.misidentified_rate == doctest::Approx(120.0 / 6));
  // claims above 85: tp = 2 (80 misses), fp = 1 (the 90), fn = 1
  CHECK(m.f1 == doctest::Approx(100.0 * 4 / (4 + 1 + 1)));
  CHECK(m.to_csv() == "detector,M_wm1,M_wm2,M_wm3\nM_d1,99.00,10.00,90.00\nM_d2,0.00,95.00,0.00\nM_d3,20.00,0.00,80.00\n");
  CHECK(m.to_table().find("identified rate") != std::string::npos);

  const auto one = summarize_matrix({{97.0}});
  CHECK(one.identified_rate == 97.0);
  CHECK_FALSE(one.misidentified_defined);
  CHECK(one.f1 == 100.0);
  CHECK(one.to_table().find("undefined") != std::string::npos);

  CHECK_THROWS_AS(summarize_matrix({}), InvalidArgument);
  CHECK_THROWS_AS(summarize_matrix({{1.0, 2.0}}), InvalidArgument);
  CHECK_THROWS_AS(summarize_matrix({{101.0}}), InvalidArgument);
}

TEST_CASE("compression ratio") {
  CHECK(compression_ratio(272282, 11173962) == doctest::Approx(41.0384).epsilon(1e-5));
  CHECK_THROWS_AS(compression_ratio(0, 10), InvalidArgument);
}

TEST_CASE("synth5 is linearly separable") {
  const auto data = load_dataset("synth5", 0);
  CHECK(data.train.size() == 5000);
  CHECK(data.test.size() == 1000);
  CHECK(data.num_classes == 5);
  // softmax regression fit by full-batch gradient descent
  const std::size_t d = 32, k = 5;
  std::vector<double> w((d + 1) * k, 0.0);
  const Tensor x = data.train.all();
  for (int it = 0; it < 100; ++it) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      double z[5], mx = -1e300, sum = 0;
      for (std::size_t c = 0; c < k; ++c) {
        z[c] = w[d * k + c];
        for (std::size_t j = 0; j < d; ++j) z[c] += x.at(i, j) * w[j * k + c];
        mx = std::max(mx, z[c]);
      }
      for (auto& v : z) sum += v = std::exp(v - mx);
      for (std::size_t c = 0; c < k; ++c) {
        const double r = z[c] / sum - (data.train.labels[i] == c);
        for (std::size_t j = 0; j < d; ++j) g[j * k + c] += r * x.at(i, j);
        g[d * k + c] += r;
      }
    }
    for (std::size_t q = 0; q < w.size(); ++q) w[q] -= 0.5 * g[q] / static_cast<double>(data.train.size());
  }
  const Tensor xt = data.test.all();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    std::size_t best = 0;
    double bv = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double z = w[d * k + c];
      for (std::size_t j = 0; j < d; ++j) z += xt.at(i, j) * w[j * k + c];
      if (z > bv) bv = z, best = c;
    }
    hit += best == data.test.labels[i];
  }
  CHECK(100.0 * static_cast<double>(hit) / 1000 > 99.0);
}

TEST_CASE("dataset determinism and subsampling") {
  const auto a = load_dataset("synth5", 3), b = load_dataset("synth5", 3), c = load_dataset("synth5", 4);
  CHECK(a.train.features == b.train.features);
  CHECK(a.train.features != c.train.features);

  const auto half = load_dataset("synth5", 3, 0.37);
  CHECK(half.test.size() == a.test.size());
  std::map<std::size_t, std::size_t> full_count, sub_count;
  for (auto y : a.train.labels) ++full_count[y];
  for (auto y : half.train.labels) ++sub_count[y];
  for (auto [cls, n] : full_count) CHECK(std::abs(static_cast<double>(sub_count[cls]) - 0.37 * n) <= 1.0);
  CHECK(load_dataset("synth5", 3, 0.37).train.labels == half.train.labels);

  CHECK_THROWS_AS(load_dataset("synth5", 0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(load_dataset("mnist", 0), InvalidArgument);
  CHECK_THROWS_AS(load_dataset("cifar10", 0, 1.0, "/nonexistent"), ResourceError);
}

TEST_CASE("cifar5 keeps labels 0 to 4 from the binary layout") {
  const auto root = std::filesystem::temp_directory_path() / "softmark_fake_cifar";
  std::filesystem::create_directories(root / "cifar-10-batches-bin");
  auto write = [&](const std::string& name, int records) {
    std::ofstream out(root / "cifar-10-batches-bin" / name, std::ios::binary);
    for (int r = 0; r < records; ++r) {
      out.put(static_cast<char>(r % 10));
      for (int p = 0; p < 3072; ++p) out.put(static_cast<char>((r + p) % 256));
    }
  };
  for (int f = 1; f <= 5; ++f) write("data_batch_" + std::to_string(f) + ".bin", 20);
  write("test_batch.bin", 30);
  const auto c10 = load_dataset("cifar10", 0, 1.0, root);
  CHECK(c10.train.size() == 100);
  CHECK(c10.test.size() == 30);
  CHECK(c10.train.sample_shape == Shape{3, 32, 32});
  const auto c5 = load_dataset("cifar5", 0, 1.0, root);
  CHECK(c5.num_classes == 5);
  CHECK(c5.train.size() == 50);
  CHECK(c5.test.size() == 15);
  for (auto y : c5.train.labels) CHECK(y < 5);
  std::filesystem::remove_all(root);
}

TEST_CASE("magnitude pruning") {
  ClassifierSpec spec;
  spec.num_classes = 5;
  spec.seed = 3;
  const Classifier base = build_classifier(spec);

  std::size_t n = 0;
  std::vector<double> mags;
  {
    Classifier m = base;
    for (auto& s : nn::state_of(m.net()))
      if (s.prunable)
        for (double v : s.value->values()) mags.push_back(std::abs(v)), ++n;
  }
  for (double r : {0.0, 0.1, 0.5, 0.8, 0.95}) {
    Classifier m = base;
    const auto mask = magnitude_prune(m, r);
    const auto want = static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) - 1e-9));
    CHECK(mask.zeroed == want);
    CHECK(mask.total == n);
    // oracle: the pruned set is exactly the `want` smallest magnitudes
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    std::size_t zeros = 0;
    double max_pruned = 0.0, min_kept = 1e300;
    std::size_t t = 0;
    Classifier orig = base;
    auto os = nn::state_of(orig.net());
    auto ms = nn::state_of(m.net());
    for (std::size_t q = 0; q < ms.size(); ++q) {
      if (!ms[q].prunable) {
        CHECK(*ms[q].value == *os[q].value);
        continue;
      }
      for (std::size_t i = 0; i < ms[q].value->size(); ++i) {
        const double o = std::abs((*os[q].value)[i]);
        if (mask.keep[t][i] == 0) {
          ++zeros;
          CHECK((*ms[q].value)[i] == 0.0);
          max_pruned = std::max(max_pruned, o);
        } else {
          min_kept = std::min(min_kept, o);
        }
      }
      ++t;
    }
    CHECK(zeros == want);
    if (want > 0 && want < n) CHECK(max_pruned <= min_kept);

    // pruning again at the same ratio changes nothing
    Classifier again = m;
    magnitude_prune(again, r);
    auto as = nn::state_of(again.net());
    for (std::size_t q = 0; q < as.size(); ++q) CHECK(*as[q].value == *ms[q].value);
  }

  Classifier m = base;
  CHECK_THROWS_AS(magnitude_prune(m, 1.0), InvalidArgument);
}
