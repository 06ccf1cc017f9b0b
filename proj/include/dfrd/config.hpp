#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dfrd/client.hpp"
#include "dfrd/distill.hpp"
#include "dfrd/models.hpp"

namespace dfrd {

enum class FederationScheme { kFedAvg, kStatic, kRandom, kRolling };
enum class Distiller { kNone, kDfrd };
enum class DistillMode {
  kFineTune,  // selective averaging, then distillation into the averaged model
  kDataFree,  // no averaging; distill local models into a re-initialized global model
};
enum class ReinitPolicy { kEveryRound, kOnce };

std::string_view to_string(FederationScheme s);
std::string_view to_string(Distiller d);
std::string_view to_string(DistillMode m);
std::string_view to_string(ReinitPolicy p);

/// Raised for unknown keys and unparsable values; `key()` names the culprit.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  // data.*
  std::string data_source = "blobs";  // blobs | idx
  std::size_t classes = 8;
  std::size_t dim = 16;
  std::size_t train_per_class = 400;
  std::size_t test_per_class = 100;
  double spread = 0.5;
  std::string idx_train_images;
  std::string idx_train_labels;
  std::string idx_test_images;
  std::string idx_test_labels;

  // fl.*
  int clients = 10;
  int active = 10;
  int rounds = 30;
  double omega = 0.1;
  int sigma = 4;
  int rho = 10;
  FederationScheme scheme = FederationScheme::kRolling;

  // model.*
  std::vector<std::size_t> hidden = {32, 32};

  // client.*
  ClientConfig client;

  // distill.*
  Distiller distiller = Distiller::kDfrd;
  DistillMode mode = DistillMode::kFineTune;
  ReinitPolicy reinit = ReinitPolicy::kEveryRound;
  WeightingVariant weighting = WeightingVariant::kDynamic;
  bool ema = true;
  double lambda = 0.5;
  ServerConfig server;

  // generator.*
  std::size_t noise_dim = 16;
  std::vector<std::size_t> generator_hidden = {32};
  MergeOp merge = MergeOp::kMul;

  // run.* / output.*
  std::uint64_t seed = 1;
  bool wall_time = false;
  bool dump_synthetic = false;

  /// Throws ConfigError naming the first inconsistent key.
  void validate() const;

  ClassifierSpec classifier_spec() const;
  GeneratorSpec generator_spec() const;
};

/// Every accepted key, in manifest order.
std::vector<std::string> config_keys();

/// Expands command-line shorthands (gate, weighting, merge, ...) to full keys.
std::string canonical_key(std::string_view key);

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& config, std::string_view key);

/// Parses `key=value` lines; '#' starts a comment.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// All keys as `key=value` lines, loadable with parse_config().
std::string format_config(const ExperimentConfig& config);

}  // namespace dfrd
