#include "softmark/config.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "softmark/io.hpp"
#include "softmark/presets.hpp"

namespace softmark {

namespace {

std::string anchor(const std::string& source, int line) {
  return line > 0 ? source + ":" + std::to_string(line) : source;
}

const std::vector<std::string> kArchs = {"mlp_small", "cnn_small", "resnet18", "mobilenet_v2", "shufflenet_v2",
                                         "preresnet20"};

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& msg)
    : InvalidArgument(anchor(source, line) + ": " + msg), line_(line) {}

std::string to_string(Scale s) { return s == Scale::desk ? "desk" : "paper"; }

std::string to_string(Stage s) {
  switch (s) {
    case Stage::pretrain: return "pretrain";
    case Stage::usp: return "usp";
    case Stage::csp: return "csp";
  }
  return "?";
}

std::string to_string(FieldType t) {
  switch (t) {
    case FieldType::integer: return "integer";
    case FieldType::real: return "number";
    case FieldType::boolean: return "bool";
    case FieldType::text: return "string";
    case FieldType::int_list: return "list of integers";
    case FieldType::index_map: return "map integer -> integer";
  }
  return "?";
}

const std::vector<SchemaEntry>& config_schema() {
  using T = FieldType;
  static const std::vector<SchemaEntry> schema = {
      {"scale", T::text, "preset family", {}, {}, {"desk", "paper"}},
      {"seed", T::integer, "offset added to every preset seed", 0.0, {}, {}},
      {"output_dir", T::text, "run directory", {}, {}, {}},
      {"dataset.name", T::text, "dataset", {}, {}, {"synth5", "cifar5", "cifar10", "cifar10_small", "cifar100"}},
      {"dataset.seed", T::integer, "subsampling / synthesis seed", 0.0, {}, {}},
      {"dataset.fraction", T::real, "stratified train subset fraction", 1e-9, 1.0, {}},
      {"dataset.root", T::text, "directory holding the CIFAR binary archives", {}, {}, {}},
      {"model.arch", T::text, "classifier architecture", {}, {}, kArchs},
      {"model.seed", T::integer, "initialization seed (default: the stage's train seed)", 0.0, {}, {}},
      {"model.hidden_widths", T::int_list, "mlp_small hidden widths", {}, {}, {}},
      {"model.input_dim", T::integer, "mlp_small input width", 1.0, {}, {}},
      {"train.epochs", T::integer, "embedding / pretraining epochs", 1.0, {}, {}},
      {"train.finetune_epochs", T::integer, "CSP overall fine-tuning epochs", 0.0, {}, {}},
      {"train.batch_size", T::integer, "mini-batch size", 2.0, {}, {}},
      {"train.lr", T::real, "starting learning rate", 0.0, {}, {}},
      {"train.milestones", T::int_list, "epochs at which the learning rate decays", {}, {}, {}},
      {"train.lr_factor", T::real, "decay factor at each milestone", 0.0, {}, {}},
      {"train.momentum", T::real, "SGD momentum", 0.0, 1.0, {}},
      {"train.weight_decay", T::real, "L2 weight decay", 0.0, {}, {}},
      {"train.use_kld", T::boolean, "include the KLD term", {}, {}, {}},
      {"train.use_detector", T::boolean, "co-train a detector", {}, {}, {}},
      {"train.init_from_adversary", T::boolean, "start the watermarked model from M_n", {}, {}, {}},
      {"train.validation_fraction", T::real, "slice measured for the re-embed switch", 1e-9, 1.0, {}},
      {"train.seed", T::integer, "training seed", 0.0, {}, {}},
      {"loss.alpha", T::real, "KLD coefficient (negative pushes away from M_n)", {}, {}, {}},
      {"loss.beta", T::real, "detector loss coefficient", 0.0, {}, {}},
      {"loss.temperature", T::real, "soft temperature", 1e-12, {}, {}},
      {"loss.tau", T::real, "re-embed threshold, percent", 0.0, 100.0, {}},
      {"detector.hidden_widths", T::int_list, "four hidden widths", {}, {}, {}},
      {"detector.lr", T::real, "Adam learning rate", 0.0, {}, {}},
      {"detector.lr_decay_epoch", T::integer, "epoch of the x factor decay (-1: never)", -1.0, {}, {}},
      {"detector.lr_decay_factor", T::real, "detector decay factor", 0.0, {}, {}},
      {"detector.input_mode", T::text, "detector input transform", {}, {}, {"raw", "log_softmax"}},
      {"signal.values", T::int_list, "explicit signal entries in {-1, 0, 1}", {}, {}, {}},
      {"signal.length", T::integer, "generated signal length", 2.0, {}, {}},
      {"signal.seed", T::integer, "generated signal seed", {}, {}, {}},
      {"signal.zero_fraction", T::real, "share of zero entries when generating", 0.0, 0.999999, {}},
      {"signal.gamma", T::real, "signal strength", 0.0, {}, {}},
      {"signal.label_filter", T::index_map, "class -> signal index", {}, {}, {}},
      {"signal.index", T::integer, "which built-in desk signal to use", 0.0, 2.0, {}},
      {"attack.kind", T::text, "attack", {}, {}, {"finetune", "prune", "prune_retrain", "distill"}},
      {"attack.lr", T::real, "attack learning rate", 0.0, {}, {}},
      {"attack.epochs", T::integer, "attack epochs", 0.0, {}, {}},
      {"attack.milestones", T::int_list, "attack learning-rate decay epochs", {}, {}, {}},
      {"attack.ratio", T::real, "pruning ratio", 0.0, 0.999999, {}},
      {"attack.temperature", T::real, "distillation temperature", 1e-12, {}, {}},
      {"attack.lambda", T::real, "weight of the soft distillation term", 0.0, 1.0, {}},
      {"attack.batch_size", T::integer, "attack mini-batch size", 2.0, {}, {}},
      {"attack.student", T::text, "distillation student architecture", {}, {}, kArchs},
      {"attack.student_seed", T::integer, "student initialization seed", 0.0, {}, {}},
      {"attack.seed", T::integer, "attack shuffling seed", 0.0, {}, {}},
  };
  return schema;
}

namespace {

const SchemaEntry* find_entry(const std::string& path) {
  for (const auto& e : config_schema())
    if (e.path == path) return &e;
  return nullptr;
}

bool is_section(const std::string& name) {
  for (const auto& e : config_schema())
    if (e.path.starts_with(name + ".")) return true;
  return false;
}

struct Reader {
  const std::string& source;
  ConfigValues& out;

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    throw ConfigError(source, n.Mark().line + 1, msg);
  }

  void check_range(const SchemaEntry& e, const YAML::Node& n, double v) const {
    if (!std::isfinite(v)) fail(n, e.path + " must be finite");
    if (e.min && v < *e.min) fail(n, e.path + " must be >= " + YAML::Node(*e.min).as<std::string>());
    if (e.max && v > *e.max) fail(n, e.path + " must be <= " + YAML::Node(*e.max).as<std::string>());
  }

  template <class V>
  V scalar(const SchemaEntry& e, const YAML::Node& n) const {
    if (!n.IsScalar()) fail(n, e.path + " must be a " + to_string(e.type));
    try {
      return n.as<V>();
    } catch (const YAML::BadConversion&) {
      fail(n, e.path + " must be a " + to_string(e.type) + ", got '" + n.Scalar() + "'");
    }
  }

  void read(const SchemaEntry& e, const YAML::Node& n) const {
    out.lines[e.path] = n.Mark().line + 1;
    switch (e.type) {
      case FieldType::integer: {
        const auto v = scalar<long long>(e, n);
        check_range(e, n, static_cast<double>(v));
        out.integers[e.path] = v;
        break;
      }
      case FieldType::real: {
        const auto v = scalar<double>(e, n);
        check_range(e, n, v);
        out.reals[e.path] = v;
        break;
      }
      case FieldType::boolean: out.booleans[e.path] = scalar<bool>(e, n); break;
      case FieldType::text: {
        const auto v = scalar<std::string>(e, n);
        if (!e.choices.empty() && std::find(e.choices.begin(), e.choices.end(), v) == e.choices.end()) {
          std::string allowed;
          for (const auto& c : e.choices) allowed += (allowed.empty() ? "" : ", ") + c;
          fail(n, e.path + ": '" + v + "' is not one of " + allowed);
        }
        out.texts[e.path] = v;
        break;
      }
      case FieldType::int_list: {
        if (!n.IsSequence()) fail(n, e.path + " must be a list of integers");
        std::vector<long long> v;
        for (const auto& item : n) {
          if (!item.IsScalar()) fail(item, e.path + " entries must be integers");
          try {
            v.push_back(item.as<long long>());
          } catch (const YAML::BadConversion&) {
            fail(item, e.path + " entries must be integers, got '" + item.Scalar() + "'");
          }
        }
        out.int_lists[e.path] = std::move(v);
        break;
      }
      case FieldType::index_map: {
        if (!n.IsMap()) fail(n, e.path + " must be a map from class index to signal index");
        std::map<std::size_t, std::size_t> m;
        for (const auto& kv : n) {
          try {
            const auto k = kv.first.as<long long>(), v = kv.second.as<long long>();
            if (k < 0 || v < 0) fail(kv.first, e.path + " indices must be non-negative");
            if (!m.emplace(static_cast<std::size_t>(k), static_cast<std::size_t>(v)).second)
              fail(kv.first, e.path + " repeats class " + std::to_string(k));
          } catch (const YAML::BadConversion&) {
            fail(kv.first, e.path + " entries must be integer: integer");
          }
        }
        out.index_maps[e.path] = std::move(m);
        break;
      }
    }
  }
};

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, e.mark.line + 1, e.msg);
  }
  ExperimentConfig cfg;
  cfg.source_ = source;
  Reader reader{source, cfg.values_};
  if (root.IsNull()) return cfg;
  if (!root.IsMap()) reader.fail(root, "top level must be a map of sections");
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& val = kv.second;
    if (is_section(key)) {
      if (val.IsNull()) continue;
      if (!val.IsMap()) reader.fail(val, "section '" + key + "' must be a map");
      for (const auto& inner : val) {
        const std::string sub = inner.first.as<std::string>();
        const SchemaEntry* e = find_entry(key + "." + sub);
        if (!e) reader.fail(inner.first, "unknown key '" + sub + "' in section '" + key + "'");
        if (cfg.values_.has(e->path)) reader.fail(inner.first, "duplicate key '" + e->path + "'");
        reader.read(*e, inner.second);
      }
    } else {
      const SchemaEntry* e = find_entry(key);
      if (!e) reader.fail(kv.first, "unknown top-level key '" + key + "'");
      reader.read(*e, val);
    }
  }
  if (auto it = cfg.values_.texts.find("scale"); it != cfg.values_.texts.end())
    cfg.scale_ = it->second == "paper" ? Scale::paper : Scale::desk;
  if (auto it = cfg.values_.integers.find("seed"); it != cfg.values_.integers.end())
    cfg.seed_ = static_cast<std::uint64_t>(it->second);
  return cfg;
}

void ExperimentConfig::override_value(const std::string& path, const std::string& value) {
  const SchemaEntry* e = find_entry(path);
  if (!e) throw ConfigError("<command line>", 0, "unknown key '" + path + "'");
  YAML::Node n;
  try {
    n = YAML::Load(value);
  } catch (const YAML::ParserException& ex) {
    throw ConfigError("<command line>", 0, path + ": " + ex.msg);
  }
  values_.integers.erase(path);
  values_.reals.erase(path);
  values_.booleans.erase(path);
  values_.texts.erase(path);
  values_.int_lists.erase(path);
  values_.index_maps.erase(path);
  Reader{"<command line>", values_}.read(*e, n);
  values_.lines[path] = 0;
  if (path == "scale") scale_ = values_.texts.at(path) == "paper" ? Scale::paper : Scale::desk;
  if (path == "seed") seed_ = static_cast<std::uint64_t>(values_.integers.at(path));
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return parse(io::read_text(path), path.string());
}

void ExperimentConfig::rethrow_anchored(const InvalidArgument& e) const {
  const std::string msg = e.what();
  int line = 0;
  for (const auto& [path, l] : values_.lines)
    if (msg.find(path) != std::string::npos) line = l;
  if (line == 0) {
    const auto section = msg.substr(0, msg.find_first_of(" .:"));
    for (const auto& [path, l] : values_.lines)
      if (path.starts_with(section + ".") && (line == 0 || l < line)) line = l;
  }
  throw ConfigError(source_, line, msg);
}

std::filesystem::path ExperimentConfig::output_dir() const {
  auto it = values_.texts.find("output_dir");
  return it != values_.texts.end() ? std::filesystem::path(it->second) : std::filesystem::path("runs/default");
}

std::string ExperimentConfig::dataset_name() const {
  auto it = values_.texts.find("dataset.name");
  if (it != values_.texts.end()) return it->second;
  return scale_ == Scale::desk ? "synth5" : "cifar10";
}

std::uint64_t ExperimentConfig::dataset_seed() const {
  auto it = values_.integers.find("dataset.seed");
  return it != values_.integers.end() ? static_cast<std::uint64_t>(it->second) : seed_;
}

double ExperimentConfig::dataset_fraction() const {
  auto it = values_.reals.find("dataset.fraction");
  if (it != values_.reals.end()) return it->second;
  return dataset_name() == "cifar10_small" ? 0.1 : 1.0;
}

std::filesystem::path ExperimentConfig::data_root() const {
  auto it = values_.texts.find("dataset.root");
  return it != values_.texts.end() ? std::filesystem::path(it->second) : std::filesystem::path("data");
}

namespace {

template <class M, class K, class V>
void take(const M& m, const K& key, V& dst) {
  if (auto it = m.find(key); it != m.end()) dst = static_cast<V>(it->second);
}

std::vector<std::size_t> to_sizes(const std::vector<long long>& v) {
  std::vector<std::size_t> out;
  for (long long x : v) {
    if (x <= 0) throw InvalidArgument("widths must be positive");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

bool synthetic(const std::string& name) { return name == "synth5"; }

TrainConfig desk_preset(Stage stage, const std::string& dataset) {
  if (synthetic(dataset)) {
    switch (stage) {
      case Stage::pretrain: return desk::pretrain_config();
      case Stage::usp: return desk::usp_config();
      case Stage::csp: return desk::csp_config();
    }
  }
  // CIFAR subsets at desk scale: 60 (+60) epochs on cnn_small.
  TrainConfig c;
  switch (stage) {
    case Stage::pretrain:
      c = desk::pretrain_config();
      c.epochs = 60;
      c.lr.milestones = {40};
      break;
    case Stage::usp:
      c = desk::usp_config();
      c.epochs = 60;
      c.lr.milestones = {40};
      c.detector.lr_decay_epoch = 35;
      break;
    case Stage::csp:
      c = desk::csp_config();
      c.epochs = 60;
      c.finetune_epochs = 60;
      c.lr.milestones = {80};
      c.detector.lr_decay_epoch = 70;
      break;
  }
  return c;
}

TrainConfig paper_preset(Stage stage, const std::string& dataset) {
  TrainConfig c;
  c.lr = {0.1, {80, 120}, 0.1};
  c.batch_size = 512;
  c.detector.lr_decay_epoch = 140;
  switch (stage) {
    case Stage::pretrain:
      c.epochs = 160;
      c.finetune_epochs = 0;
      c.seed = 1;
      break;
    case Stage::usp:
      c.epochs = 160;
      c.finetune_epochs = 0;
      c.seed = 2;
      break;
    case Stage::csp:
      c.epochs = 120;
      c.finetune_epochs = 120;
      c.seed = 3;
      if (dataset == "cifar100") {
        c.epochs = 150;
        c.lr = {0.1, {60, 120, 150}, 0.2};
        c.batch_size = 256;
        c.detector.lr_decay_epoch = 160;
      }
      break;
  }
  return c;
}

}  // namespace

TrainConfig ExperimentConfig::unchecked_train_config(Stage stage) const {
  const std::string ds = dataset_name();
  TrainConfig c = scale_ == Scale::desk ? desk_preset(stage, ds) : paper_preset(stage, ds);
  c.seed += seed_;
  const auto& v = values_;
  take(v.integers, "train.epochs", c.epochs);
  take(v.integers, "train.finetune_epochs", c.finetune_epochs);
  if (stage != Stage::csp) c.finetune_epochs = 0;
  take(v.integers, "train.batch_size", c.batch_size);
  take(v.reals, "train.lr", c.lr.base);
  if (auto it = v.int_lists.find("train.milestones"); it != v.int_lists.end())
    c.lr.milestones.assign(it->second.begin(), it->second.end());
  take(v.reals, "train.lr_factor", c.lr.factor);
  take(v.reals, "train.momentum", c.momentum);
  take(v.reals, "train.weight_decay", c.weight_decay);
  take(v.booleans, "train.use_kld", c.use_kld);
  take(v.booleans, "train.use_detector", c.use_detector);
  take(v.booleans, "train.init_from_adversary", c.init_from_adversary);
  take(v.reals, "train.validation_fraction", c.validation_fraction);
  take(v.integers, "train.seed", c.seed);
  take(v.reals, "loss.alpha", c.loss.alpha);
  take(v.reals, "loss.beta", c.loss.beta);
  take(v.reals, "loss.temperature", c.loss.temperature);
  take(v.reals, "loss.tau", c.loss.tau);
  try {
    if (auto it = v.int_lists.find("detector.hidden_widths"); it != v.int_lists.end())
      c.detector.hidden_widths = to_sizes(it->second);
    take(v.reals, "detector.lr", c.detector.lr);
    take(v.integers, "detector.lr_decay_epoch", c.detector.lr_decay_epoch);
    take(v.reals, "detector.lr_decay_factor", c.detector.lr_decay_factor);
    if (auto it = v.texts.find("detector.input_mode"); it != v.texts.end())
      c.detector.input_mode = input_mode_from_string(it->second);
    if (stage == Stage::pretrain) {
      c.use_detector = false;
      c.init_from_adversary = false;
    }
  } catch (const InvalidArgument& e) {
    rethrow_anchored(e);
  }
  return c;
}

TrainConfig ExperimentConfig::train_config(Stage stage) const {
  TrainConfig c = unchecked_train_config(stage);
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    rethrow_anchored(e);
  }
  return c;
}

ClassifierSpec ExperimentConfig::model_spec(Stage stage, std::size_t num_classes) const {
  ClassifierSpec s;
  const bool synth = synthetic(dataset_name());
  s.arch = scale_ == Scale::paper ? Arch::resnet18 : (synth ? Arch::mlp_small : Arch::cnn_small);
  s.num_classes = num_classes;
  s.seed = unchecked_train_config(stage).seed;
  if (scale_ == Scale::desk && synth) s.hidden_widths = desk::mlp_spec(0).hidden_widths;
  try {
    if (auto it = values_.texts.find("model.arch"); it != values_.texts.end()) s.arch = arch_from_string(it->second);
    take(values_.integers, "model.seed", s.seed);
    take(values_.integers, "model.input_dim", s.input_dim);
    if (auto it = values_.int_lists.find("model.hidden_widths"); it != values_.int_lists.end())
      s.hidden_widths = to_sizes(it->second);
  } catch (const InvalidArgument& e) {
    rethrow_anchored(e);
  }
  return s;
}

WatermarkSignal ExperimentConfig::signal(std::size_t num_classes) const {
  const auto& v = values_;
  const std::string ds = dataset_name();
  double gamma = 2.0;
  if (scale_ == Scale::paper && ds != "cifar5") gamma = 5.0;
  take(v.reals, "signal.gamma", gamma);
  std::optional<std::map<std::size_t, std::size_t>> filter;
  if (auto it = v.index_maps.find("signal.label_filter"); it != v.index_maps.end()) filter = it->second;
  if (!filter && ds == "cifar100") {
    filter.emplace();
    for (std::size_t j = 0; j < 10; ++j) (*filter)[j] = j;
  }
  const std::size_t length = filter ? filter->size() : num_classes;

  WatermarkSignal s;
  try {
    if (auto it = v.int_lists.find("signal.values"); it != v.int_lists.end()) {
      s.values.assign(it->second.begin(), it->second.end());
      s.gamma = gamma;
      take(v.integers, "signal.seed", s.seed);
    } else if (v.has("signal.seed") || v.has("signal.length") || !(scale_ == Scale::desk && length == 5)) {
      std::int64_t seed = static_cast<std::int64_t>(seed_);
      std::size_t len = length;
      double zero_fraction = 0.2;
      take(v.integers, "signal.seed", seed);
      take(v.integers, "signal.length", len);
      take(v.reals, "signal.zero_fraction", zero_fraction);
      s = generate_signal(len, seed, zero_fraction, gamma);
    } else {
      std::size_t index = 0;
      take(v.integers, "signal.index", index);
      s = desk::customization_signals().at(index);
      s.gamma = gamma;
    }
    s.label_filter = filter;
    s.validate(num_classes);
  } catch (const InvalidArgument& e) {
    rethrow_anchored(e);
  }
  return s;
}

AttackConfig ExperimentConfig::attack_config(std::size_t num_classes) const {
  const auto& v = values_;
  AttackKind kind = AttackKind::finetune;
  if (auto it = v.texts.find("attack.kind"); it != v.texts.end()) kind = attack_kind_from_string(it->second);
  const bool paper = scale_ == Scale::paper;
  AttackConfig a;
  switch (kind) {
    case AttackKind::finetune:
      a = desk::finetune_config(0.01);
      if (paper) a.epochs = 100;
      break;
    case AttackKind::prune: a = desk::prune_config(); break;
    case AttackKind::prune_retrain:
      a = desk::prune_retrain_config();
      if (paper) a.epochs = 100;
      break;
    case AttackKind::distill: {
      ClassifierSpec student = model_spec(Stage::usp, num_classes);
      student.seed = 5;
      a = desk::distill_config(student);
      if (paper) {
        a.epochs = 160;
        a.lr = 0.1;
        a.lr_milestones = {80, 120};
      }
      break;
    }
  }
  if (paper) a.batch_size = 512;
  a.seed += seed_;
  take(v.reals, "attack.lr", a.lr);
  take(v.integers, "attack.epochs", a.epochs);
  if (auto it = v.int_lists.find("attack.milestones"); it != v.int_lists.end())
    a.lr_milestones.assign(it->second.begin(), it->second.end());
  take(v.reals, "attack.ratio", a.prune_ratio);
  take(v.reals, "attack.temperature", a.distill_temperature);
  take(v.reals, "attack.lambda", a.distill_lambda);
  take(v.integers, "attack.batch_size", a.batch_size);
  take(v.integers, "attack.seed", a.seed);
  if (a.kind == AttackKind::distill) {
    if (auto it = v.texts.find("attack.student"); it != v.texts.end()) a.student_spec->arch = arch_from_string(it->second);
    take(v.integers, "attack.student_seed", a.student_spec->seed);
  }
  try {
    a.validate();
  } catch (const InvalidArgument& e) {
    rethrow_anchored(e);
  }
  return a;
}

namespace {

// Shortest text that reads back to the same double.
std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

std::string ExperimentConfig::snapshot(std::optional<Stage> stage, bool with_attack, std::size_t num_classes) const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "scale" << YAML::Value << to_string(scale_);
  out << YAML::Key << "seed" << YAML::Value << seed_;
  out << YAML::Key << "output_dir" << YAML::Value << output_dir().string();
  out << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << dataset_name();
  out << YAML::Key << "seed" << YAML::Value << dataset_seed();
  out << YAML::Key << "fraction" << YAML::Value << num(dataset_fraction());
  out << YAML::Key << "root" << YAML::Value << data_root().string();
  out << YAML::EndMap;
  if (stage) {
    const ClassifierSpec s = model_spec(*stage, num_classes);
    out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "arch" << YAML::Value << to_string(s.arch);
    out << YAML::Key << "seed" << YAML::Value << s.seed;
    if (s.arch == Arch::mlp_small) {
      out << YAML::Key << "input_dim" << YAML::Value << s.input_dim;
      out << YAML::Key << "hidden_widths" << YAML::Value << YAML::Flow << s.hidden_widths;
    }
    out << YAML::EndMap;
    const TrainConfig c = train_config(*stage);
    out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "epochs" << YAML::Value << c.epochs;
    out << YAML::Key << "finetune_epochs" << YAML::Value << c.finetune_epochs;
    out << YAML::Key << "batch_size" << YAML::Value << c.batch_size;
    out << YAML::Key << "lr" << YAML::Value << num(c.lr.base);
    out << YAML::Key << "milestones" << YAML::Value << YAML::Flow << c.lr.milestones;
    out << YAML::Key << "lr_factor" << YAML::Value << num(c.lr.factor);
    out << YAML::Key << "momentum" << YAML::Value << num(c.momentum);
    out << YAML::Key << "weight_decay" << YAML::Value << num(c.weight_decay);
    out << YAML::Key << "use_kld" << YAML::Value << c.use_kld;
    out << YAML::Key << "use_detector" << YAML::Value << c.use_detector;
    out << YAML::Key << "init_from_adversary" << YAML::Value << c.init_from_adversary;
    out << YAML::Key << "validation_fraction" << YAML::Value << num(c.validation_fraction);
    out << YAML::Key << "seed" << YAML::Value << c.seed;
    out << YAML::EndMap;
    if (*stage != Stage::pretrain) {
      out << YAML::Key << "loss" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "alpha" << YAML::Value << num(c.loss.alpha);
      out << YAML::Key << "beta" << YAML::Value << num(c.loss.beta);
      out << YAML::Key << "temperature" << YAML::Value << num(c.loss.temperature);
      out << YAML::Key << "tau" << YAML::Value << num(c.loss.tau);
      out << YAML::EndMap;
      out << YAML::Key << "detector" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "hidden_widths" << YAML::Value << YAML::Flow << c.detector.hidden_widths;
      out << YAML::Key << "lr" << YAML::Value << num(c.detector.lr);
      out << YAML::Key << "lr_decay_epoch" << YAML::Value << c.detector.lr_decay_epoch;
      out << YAML::Key << "lr_decay_factor" << YAML::Value << num(c.detector.lr_decay_factor);
      const InputMode mode =
          c.detector.input_mode.value_or(*stage == Stage::csp ? InputMode::log_softmax : InputMode::raw);
      out << YAML::Key << "input_mode" << YAML::Value << to_string(mode);
      out << YAML::EndMap;
    }
    if (*stage == Stage::csp) {
      const WatermarkSignal sig = signal(num_classes);
      out << YAML::Key << "signal" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "values" << YAML::Value << YAML::Flow << sig.values;
      out << YAML::Key << "gamma" << YAML::Value << num(sig.gamma);
      out << YAML::Key << "seed" << YAML::Value << sig.seed;
      if (sig.label_filter) out << YAML::Key << "label_filter" << YAML::Value << YAML::Flow << *sig.label_filter;
      out << YAML::EndMap;
    }
  }
  if (with_attack) {
    const AttackConfig a = attack_config(num_classes);
    out << YAML::Key << "attack" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << to_string(a.kind);
    out << YAML::Key << "lr" << YAML::Value << num(a.lr);
    out << YAML::Key << "epochs" << YAML::Value << a.epochs;
    out << YAML::Key << "milestones" << YAML::Value << YAML::Flow << a.lr_milestones;
    out << YAML::Key << "ratio" << YAML::Value << num(a.prune_ratio);
    out << YAML::Key << "temperature" << YAML::Value << num(a.distill_temperature);
    out << YAML::Key << "lambda" << YAML::Value << num(a.distill_lambda);
    out << YAML::Key << "batch_size" << YAML::Value << a.batch_size;
    if (a.student_spec) {
      out << YAML::Key << "student" << YAML::Value << to_string(a.student_spec->arch);
      out << YAML::Key << "student_seed" << YAML::Value << a.student_spec->seed;
    }
    out << YAML::Key << "seed" << YAML::Value << a.seed;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace softmark
