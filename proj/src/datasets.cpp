#include "softmark/datasets.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>

#include "softmark/error.hpp"

namespace softmark {

Tensor Split::gather(std::span<const std::size_t> idx) const {
  Shape shape{idx.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(shape);
  const std::size_t d = sample_size();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= size()) throw InvalidArgument("sample index out of range");
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(idx[i] * d), d, out.data() + i * d);
  }
  return out;
}

Tensor Split::all() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gather(idx);
}

Split Split::subset(std::span<const std::size_t> idx) const {
  Split s{sample_shape, {}, {}};
  const std::size_t d = sample_size();
  s.features.reserve(idx.size() * d);
  s.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    s.features.insert(s.features.end(), features.begin() + static_cast<std::ptrdiff_t>(i * d),
                      features.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    s.labels.push_back(labels.at(i));
  }
  return s;
}

DatasetHandle make_synth(const SynthOptions& opt, std::uint64_t seed) {
  if (opt.classes < 2 || opt.classes > opt.dim) throw InvalidArgument("synthetic data needs 2 <= classes <= dim");
  if (opt.train % opt.classes || opt.test % opt.classes)
    throw InvalidArgument("synthetic split sizes must be multiples of the class count");
  Rng rng(seed);
  Eigen::MatrixXd g(opt.dim, opt.dim);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  const double radius = opt.separation * std::sqrt(2.0);

  auto draw = [&](std::size_t n) {
    Split s{{opt.dim}, std::vector<float>(n * opt.dim), std::vector<std::size_t>(n)};
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = i / (n / opt.classes);
    std::vector<double> x(n * opt.dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < opt.dim; ++d)
        x[i * opt.dim + d] = radius * q(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(y[i])) + rng.normal();
    const auto perm = rng.permutation(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.labels[i] = y[perm[i]];
      for (std::size_t d = 0; d < opt.dim; ++d)
        s.features[i * opt.dim + d] = static_cast<float>(x[perm[i] * opt.dim + d]);
    }
    return s;
  };

  DatasetHandle h;
  h.name = "synth" + std::to_string(opt.classes);
  h.train = draw(opt.train);
  h.test = draw(opt.test);
  h.num_classes = opt.classes;
  h.seed = seed;
  return h;
}

namespace {

struct CifarLayout {
  std::string dir;
  std::vector<std::string> train_files, test_files;
  std::size_t label_bytes, label_offset, classes;
  std::string url;
  Normalization norm;
};

CifarLayout cifar10_layout() {
  return {"cifar-10-batches-bin",
          {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"},
          {"test_batch.bin"},
          1,
          0,
          10,
          "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
          {{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}}};
}

CifarLayout cifar100_layout() {
  return {"cifar-100-binary",
          {"train.bin"},
          {"test.bin"},
          2,
          1,
          100,
          "https://www.cs.toronto.edu/~kriz/cifar-100-binary.tar.gz",
          {{0.5071, 0.4865, 0.4409}, {0.2673, 0.2564, 0.2762}}};
}

Split read_cifar(const std::filesystem::path& root, const CifarLayout& lay, const std::vector<std::string>& files) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  Split s{{3, 32, 32}, {}, {}};
  for (const auto& f : files) {
    const auto path = root / lay.dir / f;
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw ResourceError("missing CIFAR file " + path.string() + "; download " + lay.url + " and extract it into " +
                          root.string());
    std::vector<unsigned char> rec(lay.label_bytes + kPixels);
    while (in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()))) {
      s.labels.push_back(rec[lay.label_offset]);
      for (std::size_t p = 0; p < kPixels; ++p) {
        const std::size_t c = p / 1024;
        s.features.push_back(
            static_cast<float>((rec[lay.label_bytes + p] / 255.0 - lay.norm.mean[c]) / lay.norm.stddev[c]));
      }
    }
    if (!in.eof() || in.gcount() != 0) throw ResourceError("truncated CIFAR file " + path.string());
  }
  return s;
}

Split keep_labels_below(const Split& s, std::size_t k) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.labels[i] < k) idx.push_back(i);
  return s.subset(idx);
}

}  // namespace

Split stratified_subsample(const Split& split, std::size_t num_classes, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("subset fraction must be in (0, 1]");
  if (fraction == 1.0) return split;
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < split.size(); ++i) by_class.at(split.labels[i]).push_back(i);
  Rng rng(seed ^ 0x5ab5e7ULL);
  std::vector<std::size_t> keep;
  for (auto& members : by_class) {
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    const auto perm = rng.permutation(members.size());
    for (std::size_t i = 0; i < take; ++i) keep.push_back(members[perm[i]]);
  }
  std::sort(keep.begin(), keep.end());
  return split.subset(keep);
}

DatasetHandle load_dataset(const std::string& name, std::uint64_t seed, double subset_fraction,
                           const std::filesystem::path& data_root) {
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) throw InvalidArgument("subset fraction must be in (0, 1]");
  DatasetHandle h;
  if (name == "synth5") {
    h = make_synth({}, seed);
  } else if (name == "cifar10" || name == "cifar5" || name == "cifar10_small") {
    const auto lay = cifar10_layout();
    h.train = read_cifar(data_root, lay, lay.train_files);
    h.test = read_cifar(data_root, lay, lay.test_files);
    h.num_classes = 10;
    h.normalization = lay.norm;
    if (name == "cifar5") {
      h.train = keep_labels_below(h.train, 5);
      h.test = keep_labels_below(h.test, 5);
      h.num_classes = 5;
    }
    if (name == "cifar10_small" && subset_fraction == 1.0) subset_fraction = 0.1;
  } else if (name == "cifar100") {
    const auto lay = cifar100_layout();
    h.train = read_cifar(data_root, lay, lay.train_files);
    h.test = read_cifar(data_root, lay, lay.test_files);
    h.num_classes = 100;
    h.normalization = lay.norm;
  } else {
    throw InvalidArgument("unknown dataset '" + name + "' (expected synth5, cifar5, cifar10, cifar10_small, cifar100)");
  }
  if (name != "synth5") h.augmentation = {true, true};
  h.name = name;
  h.seed = seed;
  h.subset_fraction = subset_fraction;
  h.train = stratified_subsample(h.train, h.num_classes, subset_fraction, seed);
  return h;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) {
    const std::size_t e = std::min(n, b + batch_size);
    if (e - b < 2 && !out.empty()) break;
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b), perm.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

Tensor augment(const Tensor& images, const Augmentation& aug, Rng& rng) {
  if (!aug.crop && !aug.flip) return images;
  if (images.rank() != 4) throw InvalidArgument("augmentation expects [N, C, H, W] images");
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out(images.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const long dy = aug.crop ? static_cast<long>(rng.below(9)) - 4 : 0;
    const long dx = aug.crop ? static_cast<long>(rng.below(9)) - 4 : 0;
    const bool flip = aug.flip && rng.uniform() < 0.5;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const long sy = static_cast<long>(y) + dy;
          const long sx = static_cast<long>(flip ? w - 1 - x : x) + dx;
          const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w);
          out[((i * c + ch) * h + y) * w + x] =
              inside ? images[((i * c + ch) * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)]
                     : 0.0;
        }
  }
  return out;
}

}  // namespace softmark
