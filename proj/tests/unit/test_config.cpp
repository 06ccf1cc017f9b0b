#include <doctest.h>

#include "dfrd/config.hpp"

using namespace dfrd;

namespace {

std::string error_key(const std::string& text) {
  try {
    parse_config(text).validate();
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST_CASE("key=value parsing with comments and whitespace") {
  const ExperimentConfig c = parse_config(
      "# header comment\n"
      "  fl.clients = 6   # trailing comment\n"
      "\n"
      "fl.active=3\n"
      "model.hidden=16, 8\n"
      "distill.gate=nabla\n"
      "distill.ema=false\n"
      "run.seed=42\n");
  CHECK(c.clients == 6);
  CHECK(c.active == 3);
  CHECK(c.hidden == std::vector<std::size_t>{16, 8});
  CHECK(c.server.gate == GateVariant::kNabla);
  CHECK_FALSE(c.ema);
  CHECK(c.seed == 42);
  CHECK(c.rounds == ExperimentConfig{}.rounds);
}

TEST_CASE("command-line shorthands expand to full keys") {
  CHECK(canonical_key("gate") == "distill.gate");
  CHECK(canonical_key("weighting") == "distill.weighting");
  CHECK(canonical_key("merge") == "generator.merge");
  CHECK(canonical_key("fl.rounds") == "fl.rounds");
  ExperimentConfig c;
  set_config_value(c, "gate", "triangle");
  set_config_value(c, "weighting", "average");
  set_config_value(c, "merge", "ncat");
  set_config_value(c, "scheme", "static");
  set_config_value(c, "distiller", "none");
  CHECK(c.server.gate == GateVariant::kTriangle);
  CHECK(c.weighting == WeightingVariant::kAverage);
  CHECK(c.merge == MergeOp::kNcat);
  CHECK(c.scheme == FederationScheme::kStatic);
  CHECK(c.distiller == Distiller::kNone);
  CHECK(get_config_value(c, "gate") == "triangle");
}

TEST_CASE("unknown keys and unparsable values name the key") {
  CHECK(error_key("no.such.key=1") == "no.such.key");
  CHECK(error_key("fl.omega=abc") == "fl.omega");
  CHECK(error_key("fl.clients=3.5") == "fl.clients");
  CHECK(error_key("distill.ema=maybe") == "distill.ema");
  CHECK(error_key("distill.gate=square") == "distill.gate");
  CHECK(error_key("model.hidden=8,x") == "model.hidden");
  CHECK(error_key("distill.bias_correction=none") == "distill.bias_correction");
  CHECK_THROWS_AS(parse_config("just words"), ConfigError);
}

TEST_CASE("out-of-range values are rejected by validation") {
  CHECK(error_key("fl.active=11") == "fl.active");
  CHECK(error_key("fl.rounds=0") == "fl.rounds");
  CHECK(error_key("fl.omega=0") == "fl.omega");
  CHECK(error_key("distill.lambda=1.5") == "distill.lambda");
  CHECK(error_key("distill.b1=1") == "distill.b1");
  CHECK(error_key("distill.batch=1") == "distill.batch");
  CHECK(error_key("data.source=csv") == "data.source");
  CHECK(error_key("data.source=idx") == "data.idx_train_images");
  CHECK(error_key("distill.mode=datafree\ndistill.method=none") != "");
  CHECK(error_key("fl.active=10") == "");
}

TEST_CASE("formatted configs parse back to themselves") {
  ExperimentConfig c;
  c.omega = 0.1 + 0.2;
  c.server.generator_lr = 2e-4;
  c.lambda = 1.0 / 3.0;
  c.hidden = {7, 5, 3};
  c.server.bias_correction = BiasCorrection::kStepPowered;
  c.mode = DistillMode::kDataFree;
  c.reinit = ReinitPolicy::kOnce;
  c.seed = 18446744073709551615ull;
  const std::string text = format_config(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(format_config(back) == text);
  CHECK(back.omega == c.omega);
  CHECK(back.lambda == c.lambda);
  CHECK(back.seed == c.seed);
  CHECK(back.server.bias_correction == BiasCorrection::kStepPowered);

  const auto keys = config_keys();
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  CHECK(lines == keys.size());
  for (const auto& k : keys) CHECK(text.find(k + "=") != std::string::npos);
}

TEST_CASE("the shipped default config spells out the built-in defaults") {
  const ExperimentConfig shipped = load_config(DFRD_DEFAULT_CONFIG);
  CHECK(format_config(shipped) == format_config(ExperimentConfig{}));
  CHECK_NOTHROW(shipped.validate());
  CHECK_THROWS_AS(load_config("/nonexistent/dfrd.cfg"), std::runtime_error);
}
