#include "softmark/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "softmark/error.hpp"

namespace softmark::io {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'S', 'M', 'A', 'R', 'K', 'v', '1', '\n'};

template <class T>
std::optional<T> opt_get(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

template <class T>
void opt_put(Json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? Json(*v) : Json(nullptr);
}

void put_state(Archive& ar, std::vector<nn::StateRef> state, const std::string& prefix) {
  for (const auto& s : state) ar.tensors.emplace_back(prefix + s.name, *s.value);
}

void take_state(const Archive& ar, std::vector<nn::StateRef> state, const std::string& prefix) {
  for (auto& s : state) {
    const Tensor& t = ar.tensor(prefix + s.name);
    if (t.shape() != s.value->shape())
      throw InvalidArgument("checkpoint tensor " + prefix + s.name + " has shape " + shape_str(t.shape()) +
                            ", model expects " + shape_str(s.value->shape()));
    *s.value = t;
  }
}

void put_list(Archive& ar, const std::vector<Tensor>& ts, const std::string& prefix) {
  for (std::size_t i = 0; i < ts.size(); ++i) ar.tensors.emplace_back(prefix + std::to_string(i), ts[i]);
}

std::vector<Tensor> take_list(const Archive& ar, std::size_t n, const std::string& prefix) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ar.tensor(prefix + std::to_string(i)));
  return out;
}

Json detector_meta(const Detector& det) {
  return {{"num_classes", det.num_classes()},
          {"hidden_widths", det.hidden_widths()},
          {"input_mode", to_string(det.input_mode())},
          {"seed", det.seed()},
          {"lr", det.lr()},
          {"adam_steps", det.optimizer().steps()},
          {"moments", det.optimizer().state().size()},
          {"early_stopped", det.early_stopped()}};
}

void put_detector(Archive& ar, const Detector& det, const std::string& prefix) {
  Detector copy = det;
  put_state(ar, nn::state_of(copy.net()), prefix);
  put_list(ar, copy.optimizer().state(), prefix + "adam.");
}

Detector take_detector(const Archive& ar, const Json& m, const std::string& prefix) {
  Detector det(m.at("num_classes").get<std::size_t>(), m.at("hidden_widths").get<std::vector<std::size_t>>(),
               input_mode_from_string(m.at("input_mode").get<std::string>()), m.at("seed").get<std::uint64_t>(),
               m.at("lr").get<double>());
  take_state(ar, nn::state_of(det.net()), prefix);
  det.optimizer().state() = take_list(ar, m.at("moments").get<std::size_t>(), prefix + "adam.");
  det.optimizer().set_steps(m.at("adam_steps").get<long>());
  det.set_early_stopped(m.at("early_stopped").get<bool>());
  return det;
}

void expect_kind(const Archive& ar, const std::string& kind, const fs::path& path) {
  const std::string got = ar.meta.value("kind", std::string("?"));
  if (got != kind) throw InvalidArgument(path.string() + " holds a " + got + " checkpoint, expected " + kind);
}

}  // namespace

const Tensor& Archive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw InvalidArgument("checkpoint has no tensor named " + name);
}

void write_archive(const fs::path& path, const Archive& ar) {
  Json header = ar.meta;
  Json index = Json::array();
  for (const auto& [name, t] : ar.tensors) index.push_back({{"name", name}, {"shape", t.shape()}});
  header["tensors"] = index;
  const std::string h = header.dump();
  std::ostringstream os(std::ios::binary);
  os.write(kMagic, sizeof kMagic);
  const std::uint64_t len = h.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, t] : ar.tensors)
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  write_atomic(path, os.str());
}

Archive read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw InvalidArgument(path.string() + " is not a softmark checkpoint");
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  if (!in) throw InvalidArgument(path.string() + ": truncated header");
  Archive ar;
  ar.meta = Json::parse(h);
  for (const auto& e : ar.meta.at("tensors")) {
    Tensor t(e.at("shape").get<Shape>());
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw InvalidArgument(path.string() + ": truncated tensor data");
    ar.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  ar.meta.erase("tensors");
  return ar;
}

void write_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ResourceError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json to_json(const ClassifierSpec& spec) {
  return {{"arch", to_string(spec.arch)},
          {"num_classes", spec.num_classes},
          {"seed", spec.seed},
          {"input_dim", spec.input_dim},
          {"hidden_widths", spec.hidden_widths}};
}

ClassifierSpec spec_from_json(const Json& j) {
  ClassifierSpec s;
  s.arch = arch_from_string(j.at("arch").get<std::string>());
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.input_dim = j.value("input_dim", s.input_dim);
  s.hidden_widths = j.value("hidden_widths", s.hidden_widths);
  return s;
}

Json to_json(const WatermarkSignal& s) {
  Json j = {{"length", s.length()}, {"values", s.values}, {"gamma", s.gamma}, {"label_filter", nullptr},
            {"seed", s.seed}};
  if (s.label_filter) {
    Json f = Json::object();
    for (const auto& [cls, k] : *s.label_filter) f[std::to_string(cls)] = k;
    j["label_filter"] = f;
  }
  return j;
}

WatermarkSignal signal_from_json(const Json& j) {
  WatermarkSignal s;
  s.values = j.at("values").get<std::vector<int>>();
  s.gamma = j.at("gamma").get<double>();
  s.seed = j.value("seed", std::int64_t{0});
  if (j.contains("label_filter") && !j.at("label_filter").is_null()) {
    std::map<std::size_t, std::size_t> f;
    for (const auto& [k, v] : j.at("label_filter").items()) f[std::stoul(k)] = v.get<std::size_t>();
    s.label_filter = f;
  }
  if (j.contains("length") && j.at("length").get<std::size_t>() != s.values.size())
    throw InvalidArgument("signal length does not match its values");
  return s;
}

Json to_json(const EpochRecord& r) {
  Json j = {{"epoch", r.epoch}, {"phase", r.phase}, {"lr", r.lr}, {"train_loss", r.train_loss},
            {"main_acc", r.main_acc}};
  opt_put(j, "wm_acc", r.wm_acc);
  opt_put(j, "detector_train_acc", r.detector_train_acc);
  j["detector_early_stopped"] = r.detector_early_stopped;
  opt_put(j, "validation_wm_acc", r.validation_wm_acc);
  opt_put(j, "branch", r.branch);
  opt_put(j, "kld", r.kld);
  return j;
}

EpochRecord epoch_from_json(const Json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.phase = j.at("phase").get<std::string>();
  r.lr = j.at("lr").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.main_acc = j.at("main_acc").get<double>();
  r.wm_acc = opt_get<double>(j, "wm_acc");
  r.detector_train_acc = opt_get<double>(j, "detector_train_acc");
  r.detector_early_stopped = j.value("detector_early_stopped", false);
  r.validation_wm_acc = opt_get<double>(j, "validation_wm_acc");
  r.branch = opt_get<std::string>(j, "branch");
  r.kld = opt_get<double>(j, "kld");
  return r;
}

Json to_json(const AttackPoint& p) {
  return {{"epoch", p.epoch}, {"main_acc", p.main_acc}, {"wm_acc", p.wm_acc}, {"det_rate", p.det_rate}};
}

AttackPoint point_from_json(const Json& j) {
  return {j.at("epoch").get<int>(), j.at("main_acc").get<double>(), j.at("wm_acc").get<double>(),
          j.at("det_rate").get<double>()};
}

Json to_json(const AttackReport& r) {
  const AttackConfig& c = r.config;
  Json cfg = {{"kind", to_string(c.kind)},
              {"lr", c.lr},
              {"epochs", c.epochs},
              {"lr_milestones", c.lr_milestones},
              {"batch_size", c.batch_size},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed}};
  if (c.kind == AttackKind::prune || c.kind == AttackKind::prune_retrain) cfg["prune_ratio"] = c.prune_ratio;
  if (c.kind == AttackKind::distill) {
    cfg["temperature"] = c.distill_temperature;
    cfg["lambda"] = c.distill_lambda;
    if (c.student_spec) cfg["student"] = to_json(*c.student_spec);
  }
  Json traj = Json::array();
  for (const auto& p : r.trajectory) traj.push_back(to_json(p));
  Json j = {{"config", cfg}, {"trajectory", traj}, {"final", to_json(r.final_point)},
            {"best_main", to_json(r.best_main)}};
  opt_put(j, "compression_ratio", r.compression_ratio);
  opt_put(j, "pruned_weights", r.pruned_weights);
  opt_put(j, "prunable_weights", r.prunable_weights);
  return j;
}

Json to_json(const CustomizationMatrix& m) {
  return {{"det_rate", m.det_rate},
          {"identified_rate", m.identified_rate},
          {"misidentified_rate", m.misidentified_rate},
          {"misidentified_defined", m.misidentified_defined},
          {"f1", m.f1}};
}

void save_classifier(const fs::path& path, const Classifier& model) {
  Archive ar;
  ar.meta = {{"kind", "classifier"}, {"spec", to_json(model.spec())}, {"param_count", model.param_count()}};
  Classifier copy = model;
  put_state(ar, nn::state_of(copy.net()), "");
  write_archive(path, ar);
}

Classifier load_classifier(const fs::path& path) {
  const Archive ar = read_archive(path);
  expect_kind(ar, "classifier", path);
  Classifier model = build_classifier(spec_from_json(ar.meta.at("spec")));
  take_state(ar, nn::state_of(model.net()), "");
  return model;
}

void save_detector(const fs::path& path, const Detector& det) {
  Archive ar;
  ar.meta = {{"kind", "detector"}, {"detector", detector_meta(det)}};
  put_detector(ar, det, "");
  write_archive(path, ar);
}

Detector load_detector(const fs::path& path) {
  const Archive ar = read_archive(path);
  expect_kind(ar, "detector", path);
  return take_detector(ar, ar.meta.at("detector"), "");
}

void save_tensor(const fs::path& path, const Tensor& t) {
  Archive ar;
  ar.meta = {{"kind", "tensor"}};
  ar.tensors.emplace_back("value", t);
  write_archive(path, ar);
}

Tensor load_tensor(const fs::path& path) {
  const Archive ar = read_archive(path);
  expect_kind(ar, "tensor", path);
  return ar.tensor("value");
}

void save_embed_state(const fs::path& path, const EmbedState& st) {
  Archive ar;
  Json log = Json::array();
  for (const auto& r : st.log) log.push_back(to_json(r));
  ar.meta = {{"kind", "embed_state"},
             {"next_epoch", st.next_epoch},
             {"spec", to_json(st.model.spec())},
             {"rng", st.rng_state},
             {"reembed_epochs", st.reembed_epochs},
             {"optimizer_slots", st.optimizer_state.size()},
             {"log", log},
             {"detector", st.detector ? detector_meta(*st.detector) : Json(nullptr)}};
  Classifier copy = st.model;
  put_state(ar, nn::state_of(copy.net()), "model.");
  put_list(ar, st.optimizer_state, "sgd.");
  if (st.detector) put_detector(ar, *st.detector, "detector.");
  write_archive(path, ar);
}

EmbedState load_embed_state(const fs::path& path) {
  const Archive ar = read_archive(path);
  expect_kind(ar, "embed_state", path);
  const Json& m = ar.meta;
  Classifier model = build_classifier(spec_from_json(m.at("spec")));
  take_state(ar, nn::state_of(model.net()), "model.");
  std::optional<Detector> det;
  if (!m.at("detector").is_null()) det = take_detector(ar, m.at("detector"), "detector.");
  std::vector<EpochRecord> log;
  for (const auto& r : m.at("log")) log.push_back(epoch_from_json(r));
  return EmbedState{m.at("next_epoch").get<int>(),
                    std::move(model),
                    std::move(det),
                    take_list(ar, m.at("optimizer_slots").get<std::size_t>(), "sgd."),
                    m.at("rng").get<std::string>(),
                    std::move(log),
                    m.at("reembed_epochs").get<int>()};
}

void save_signal(const fs::path& path, const WatermarkSignal& s) { write_atomic(path, to_json(s).dump(2) + "\n"); }

WatermarkSignal load_signal(const fs::path& path) {
  try {
    return signal_from_json(Json::parse(read_text(path)));
  } catch (const Json::exception& e) {
    throw InvalidArgument(path.string() + ": malformed signal record: " + e.what());
  }
}

}  // namespace softmark::io
