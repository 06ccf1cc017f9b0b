#include "dfrd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace dfrd {

std::string_view to_string(FederationScheme s) {
  switch (s) {
    case FederationScheme::kFedAvg: return "fedavg";
    case FederationScheme::kStatic: return "static";
    case FederationScheme::kRandom: return "random";
    case FederationScheme::kRolling: return "rolling";
  }
  return "?";
}

std::string_view to_string(Distiller d) { return d == Distiller::kDfrd ? "dfrd" : "none"; }
std::string_view to_string(DistillMode m) { return m == DistillMode::kFineTune ? "finetune" : "datafree"; }
std::string_view to_string(ReinitPolicy p) { return p == ReinitPolicy::kEveryRound ? "round" : "once"; }

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty())
    throw ConfigError(std::string(key), "cannot parse '" + std::string(text) + "'");
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError(std::string(key), "expected true/false, got '" + std::string(text) + "'");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    out.push_back(parse_number<std::size_t>(key, piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_list(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }

template <typename Enum, typename ParseFn>
Enum parse_enum(std::string_view key, std::string_view text, ParseFn&& parse) {
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(key), e.what());
  }
}

template <typename Enum>
Enum match_enum(std::string_view key, std::string_view text, std::initializer_list<Enum> options) {
  for (auto o : options)
    if (to_string(o) == text) return o;
  throw ConfigError(std::string(key), "unknown value '" + std::string(text) + "'");
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DFRD_NUMBER_FIELD(KEY, MEMBER, TYPE)                                                    \
  Field {                                                                                       \
    KEY, [](ExperimentConfig& c, std::string_view k, std::string_view v) {                      \
      c.MEMBER = parse_number<TYPE>(k, v);                                                      \
    },                                                                                          \
        [](const ExperimentConfig& c) { return fmt::format("{}", c.MEMBER); }                   \
  }

#define DFRD_BOOL_FIELD(KEY, MEMBER)                                                                     \
  Field {                                                                                                \
    KEY, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.MEMBER = parse_bool(k, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }               \
  }

#define DFRD_STRING_FIELD(KEY, MEMBER)                                                                  \
  Field {                                                                                               \
    KEY, [](ExperimentConfig& c, std::string_view, std::string_view v) { c.MEMBER = std::string(v); }, \
        [](const ExperimentConfig& c) { return c.MEMBER; }                                              \
  }

#define DFRD_LIST_FIELD(KEY, MEMBER)                                                                         \
  Field {                                                                                                    \
    KEY, [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.MEMBER = parse_list(k, v); }, \
        [](const ExperimentConfig& c) { return format_list(c.MEMBER); }                                      \
  }

#define DFRD_ENUM_FIELD(KEY, MEMBER, ...)                                                  \
  Field {                                                                                  \
    KEY, [](ExperimentConfig& c, std::string_view k, std::string_view v) {                 \
      c.MEMBER = match_enum(k, v, {__VA_ARGS__});                                          \
    },                                                                                     \
        [](const ExperimentConfig& c) { return std::string(to_string(c.MEMBER)); }         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      DFRD_STRING_FIELD("data.source", data_source),
      DFRD_NUMBER_FIELD("data.classes", classes, std::size_t),
      DFRD_NUMBER_FIELD("data.dim", dim, std::size_t),
      DFRD_NUMBER_FIELD("data.train_per_class", train_per_class, std::size_t),
      DFRD_NUMBER_FIELD("data.test_per_class", test_per_class, std::size_t),
      DFRD_NUMBER_FIELD("data.spread", spread, double),
      DFRD_STRING_FIELD("data.idx_train_images", idx_train_images),
      DFRD_STRING_FIELD("data.idx_train_labels", idx_train_labels),
      DFRD_STRING_FIELD("data.idx_test_images", idx_test_images),
      DFRD_STRING_FIELD("data.idx_test_labels", idx_test_labels),
      DFRD_NUMBER_FIELD("fl.clients", clients, int),
      DFRD_NUMBER_FIELD("fl.active", active, int),
      DFRD_NUMBER_FIELD("fl.rounds", rounds, int),
      DFRD_NUMBER_FIELD("fl.omega", omega, double),
      DFRD_NUMBER_FIELD("fl.sigma", sigma, int),
      DFRD_NUMBER_FIELD("fl.rho", rho, int),
      DFRD_ENUM_FIELD("fl.scheme", scheme, FederationScheme::kFedAvg, FederationScheme::kStatic,
                      FederationScheme::kRandom, FederationScheme::kRolling),
      DFRD_LIST_FIELD("model.hidden", hidden),
      DFRD_NUMBER_FIELD("client.lr", client.lr, double),
      DFRD_NUMBER_FIELD("client.steps", client.local_steps, int),
      DFRD_NUMBER_FIELD("client.batch", client.batch_size, int),
      DFRD_BOOL_FIELD("client.replacement", client.with_replacement),
      DFRD_ENUM_FIELD("distill.method", distiller, Distiller::kNone, Distiller::kDfrd),
      DFRD_ENUM_FIELD("distill.mode", mode, DistillMode::kFineTune, DistillMode::kDataFree),
      DFRD_ENUM_FIELD("distill.reinit", reinit, ReinitPolicy::kEveryRound, ReinitPolicy::kOnce),
      DFRD_ENUM_FIELD("distill.gate", server.gate, GateVariant::kDiamond, GateVariant::kTriangle, GateVariant::kNabla),
      DFRD_ENUM_FIELD("distill.weighting", weighting, WeightingVariant::kDynamic, WeightingVariant::kStatic,
                      WeightingVariant::kAverage),
      DFRD_BOOL_FIELD("distill.ema", ema),
      DFRD_NUMBER_FIELD("distill.lambda", lambda, double),
      DFRD_NUMBER_FIELD("distill.alpha", server.alpha, double),
      DFRD_NUMBER_FIELD("distill.beta_tran", server.loss_weights.beta_tran, double),
      DFRD_NUMBER_FIELD("distill.beta_div", server.loss_weights.beta_div, double),
      DFRD_NUMBER_FIELD("distill.iterations", server.iterations, int),
      DFRD_NUMBER_FIELD("distill.generator_steps", server.generator_steps, int),
      DFRD_NUMBER_FIELD("distill.distill_steps", server.distill_steps, int),
      DFRD_NUMBER_FIELD("distill.generator_lr", server.generator_lr, double),
      DFRD_NUMBER_FIELD("distill.b1", server.b1, double),
      DFRD_NUMBER_FIELD("distill.b2", server.b2, double),
      DFRD_NUMBER_FIELD("distill.lr", server.distill_lr, double),
      DFRD_NUMBER_FIELD("distill.batch", server.batch_size, int),
      Field{"distill.bias_correction",
            [](ExperimentConfig& c, std::string_view k, std::string_view v) {
              if (v == "fixed") c.server.bias_correction = BiasCorrection::kFixed;
              else if (v == "step") c.server.bias_correction = BiasCorrection::kStepPowered;
              else throw ConfigError(std::string(k), "expected fixed or step, got '" + std::string(v) + "'");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.server.bias_correction == BiasCorrection::kFixed ? "fixed" : "step");
            }},
      DFRD_NUMBER_FIELD("generator.noise_dim", noise_dim, std::size_t),
      DFRD_LIST_FIELD("generator.hidden", generator_hidden),
      DFRD_ENUM_FIELD("generator.merge", merge, MergeOp::kMul, MergeOp::kAdd, MergeOp::kCat, MergeOp::kNcat,
                      MergeOp::kNone),
      DFRD_NUMBER_FIELD("run.seed", seed, std::uint64_t),
      DFRD_BOOL_FIELD("output.wall_time", wall_time),
      DFRD_BOOL_FIELD("output.dump_synthetic", dump_synthetic),
  };
  return all;
}

#undef DFRD_NUMBER_FIELD
#undef DFRD_BOOL_FIELD
#undef DFRD_STRING_FIELD
#undef DFRD_LIST_FIELD
#undef DFRD_ENUM_FIELD

const Field& find_field(std::string_view key) {
  const std::string full = canonical_key(key);
  for (const auto& f : fields())
    if (f.key == full) return f;
  throw ConfigError(std::string(key), "unknown configuration key");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

std::string canonical_key(std::string_view key) {
  static const std::map<std::string, std::string, std::less<>> aliases = {
      {"gate", "distill.gate"},     {"weighting", "distill.weighting"}, {"merge", "generator.merge"},
      {"ema", "distill.ema"},       {"scheme", "fl.scheme"},            {"distiller", "distill.method"},
      {"omega", "fl.omega"},        {"rho", "fl.rho"},                  {"sigma", "fl.sigma"},
      {"seed", "run.seed"},         {"mode", "distill.mode"},           {"alpha", "distill.alpha"},
      {"lambda", "distill.lambda"}, {"rounds", "fl.rounds"},
  };
  auto it = aliases.find(key);
  return it != aliases.end() ? it->second : std::string(key);
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  const Field& f = find_field(key);
  f.set(config, f.key, trim(value));
}

std::string get_config_value(const ExperimentConfig& config, std::string_view key) {
  return find_field(key).get(config);
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(std::string(line), "line " + std::to_string(line_no) + " is not key=value");
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(config) + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const char* key, const std::string& message) {
    if (!ok) throw ConfigError(key, message);
  };
  check(data_source == "blobs" || data_source == "idx", "data.source", "expected blobs or idx");
  if (data_source == "blobs") {
    check(classes >= 2, "data.classes", "need at least two classes");
    check(dim >= 2, "data.dim", "need at least two features");
    check(train_per_class >= 1, "data.train_per_class", "must be positive");
    check(test_per_class >= 1, "data.test_per_class", "must be positive");
    check(spread >= 0.0, "data.spread", "must be non-negative");
  } else {
    check(!idx_train_images.empty(), "data.idx_train_images", "path required for idx data");
    check(!idx_train_labels.empty(), "data.idx_train_labels", "path required for idx data");
    check(!idx_test_images.empty(), "data.idx_test_images", "path required for idx data");
    check(!idx_test_labels.empty(), "data.idx_test_labels", "path required for idx data");
  }
  check(clients >= 1, "fl.clients", "must be positive");
  check(active >= 1 && active <= clients, "fl.active", "must lie in [1, fl.clients]");
  check(rounds >= 1, "fl.rounds", "must be positive");
  check(omega > 0.0, "fl.omega", "must be positive");
  check(sigma >= 1, "fl.sigma", "must be positive");
  check(rho >= 1, "fl.rho", "must be positive");
  check(!hidden.empty(), "model.hidden", "need at least one hidden layer");
  for (auto k : hidden) check(k >= 1, "model.hidden", "widths must be positive");
  check(client.lr > 0.0, "client.lr", "must be positive");
  check(client.local_steps >= 0, "client.steps", "must be non-negative");
  check(client.batch_size >= 1, "client.batch", "must be positive");
  check(lambda >= 0.0 && lambda <= 1.0, "distill.lambda", "must lie in [0,1]");
  check(server.alpha >= 0.0, "distill.alpha", "must be non-negative");
  check(server.iterations >= 0, "distill.iterations", "must be non-negative");
  check(server.generator_steps >= 0, "distill.generator_steps", "must be non-negative");
  check(server.distill_steps >= 0, "distill.distill_steps", "must be non-negative");
  check(server.generator_lr > 0.0, "distill.generator_lr", "must be positive");
  check(server.b1 > 0.0 && server.b1 < 1.0, "distill.b1", "must lie in (0,1)");
  check(server.b2 > 0.0 && server.b2 < 1.0, "distill.b2", "must lie in (0,1)");
  check(server.distill_lr > 0.0, "distill.lr", "must be positive");
  check(server.batch_size >= 2, "distill.batch", "must be at least 2");
  check(noise_dim >= 1, "generator.noise_dim", "must be positive");
  for (auto k : generator_hidden) check(k >= 1, "generator.hidden", "widths must be positive");
  check(distiller == Distiller::kDfrd || mode == DistillMode::kFineTune, "distill.mode",
        "datafree mode requires distill.method=dfrd");
}

ClassifierSpec ExperimentConfig::classifier_spec() const { return ClassifierSpec{dim, hidden, classes}; }

GeneratorSpec ExperimentConfig::generator_spec() const {
  return GeneratorSpec{noise_dim, classes, generator_hidden, dim, merge};
}

}  // namespace dfrd
