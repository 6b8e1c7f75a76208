#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "softmark/attacks.hpp"
#include "softmark/error.hpp"
#include "softmark/modelzoo.hpp"
#include "softmark/pipelines.hpp"
#include "softmark/signal.hpp"

namespace softmark {

// A config problem tied to a line of the source document (0 when unknown).
class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& source, int line, const std::string& msg);
  int line() const { return line_; }

 private:
  int line_;
};

enum class Scale { desk, paper };
enum class Stage { pretrain, usp, csp };

std::string to_string(Scale s);
std::string to_string(Stage s);

enum class FieldType { integer, real, boolean, text, int_list, index_map };
std::string to_string(FieldType t);

struct SchemaEntry {
  std::string path;  // section.key, or key for top-level scalars
  FieldType type;
  std::string help;
  std::optional<double> min, max;  // numeric bounds, inclusive
  std::vector<std::string> choices;  // allowed text values
};

// Every key an experiment file may contain.
const std::vector<SchemaEntry>& config_schema();

// Values given in the file; anything absent falls back to the scale preset.
struct ConfigValues {
  std::map<std::string, long long> integers;
  std::map<std::string, double> reals;
  std::map<std::string, bool> booleans;
  std::map<std::string, std::string> texts;
  std::map<std::string, std::vector<long long>> int_lists;
  std::map<std::string, std::map<std::size_t, std::size_t>> index_maps;
  std::map<std::string, int> lines;

  bool has(const std::string& path) const { return lines.contains(path); }
};

class ExperimentConfig {
 public:
  ExperimentConfig() = default;

  static ExperimentConfig parse(const std::string& text, const std::string& source = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);

  Scale scale() const { return scale_; }
  std::uint64_t seed() const { return seed_; }
  std::filesystem::path output_dir() const;

  std::string dataset_name() const;
  std::uint64_t dataset_seed() const;
  double dataset_fraction() const;
  std::filesystem::path data_root() const;

  ClassifierSpec model_spec(Stage stage, std::size_t num_classes) const;
  TrainConfig train_config(Stage stage) const;
  WatermarkSignal signal(std::size_t num_classes) const;
  AttackConfig attack_config(std::size_t num_classes) const;

  // Command-line override of one schema key; the value is parsed as YAML.
  void override_value(const std::string& path, const std::string& value);

  const ConfigValues& values() const { return values_; }
  // Fully resolved settings as YAML. Attack settings are included when asked.
  std::string snapshot(std::optional<Stage> stage, bool with_attack, std::size_t num_classes) const;

 private:
  ConfigValues values_;
  std::string source_ = "<config>";
  Scale scale_ = Scale::desk;
  std::uint64_t seed_ = 0;

  // Preset plus file values, before range checks.
  TrainConfig unchecked_train_config(Stage stage) const;
  // Re-raises a validation failure against the line of the key it names.
  [[noreturn]] void rethrow_anchored(const InvalidArgument& e) const;
};

}  // namespace softmark
