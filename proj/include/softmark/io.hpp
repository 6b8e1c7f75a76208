#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "softmark/attacks.hpp"
#include "softmark/detector.hpp"
#include "softmark/metrics.hpp"
#include "softmark/modelzoo.hpp"
#include "softmark/pipelines.hpp"
#include "softmark/signal.hpp"

namespace softmark::io {

using Json = nlohmann::ordered_json;

// Binary container: 8-byte magic, u64 header length, JSON header, then the
// tensors' doubles in header order (native little-endian). Bit-exact.
struct Archive {
  Json meta = Json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& ar);
Archive read_archive(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

Json to_json(const ClassifierSpec& spec);
ClassifierSpec spec_from_json(const Json& j);
Json to_json(const WatermarkSignal& s);
WatermarkSignal signal_from_json(const Json& j);
Json to_json(const EpochRecord& r);
EpochRecord epoch_from_json(const Json& j);
Json to_json(const AttackPoint& p);
AttackPoint point_from_json(const Json& j);
Json to_json(const AttackReport& r);
Json to_json(const CustomizationMatrix& m);

void save_classifier(const std::filesystem::path& path, const Classifier& model);
Classifier load_classifier(const std::filesystem::path& path);

// Parameters, Adam moments and step count, early-stop flag and metadata.
void save_detector(const std::filesystem::path& path, const Detector& det);
Detector load_detector(const std::filesystem::path& path);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

void save_embed_state(const std::filesystem::path& path, const EmbedState& st);
EmbedState load_embed_state(const std::filesystem::path& path);

void save_signal(const std::filesystem::path& path, const WatermarkSignal& s);
WatermarkSignal load_signal(const std::filesystem::path& path);

}  // namespace softmark::io
