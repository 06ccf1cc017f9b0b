// Command-line front end: run, sweep, check.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dfrd/config.hpp"
#include "dfrd/orchestrator.hpp"
#include "dfrd/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace dfrd;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(text, "expected key=value");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

ExperimentConfig base_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig config = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& o : overrides) {
    const auto [key, value] = split_assignment(o);
    set_config_value(config, key, value);
  }
  return config;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text, std::uint64_t fallback) {
  if (text.empty()) return {fallback};
  std::vector<std::uint64_t> seeds;
  for (const auto& piece : split_commas(text)) {
    ExperimentConfig probe;
    set_config_value(probe, "run.seed", piece);
    seeds.push_back(probe.seed);
  }
  return seeds;
}

/// `dir/stem.ext`, or with a timestamp (and counter) suffix when taken.
fs::path fresh_path(const fs::path& dir, const std::string& stem, const std::string& ext) {
  fs::path candidate = dir / (stem + ext);
  if (!fs::exists(candidate)) return candidate;
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
  candidate = dir / fmt::format("{}_{}{}", stem, stamp, ext);
  for (int n = 2; fs::exists(candidate); ++n) candidate = dir / fmt::format("{}_{}-{}{}", stem, stamp, n, ext);
  return candidate;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  RunSummary summary;
};

SeedOutcome run_one(ExperimentConfig config, const fs::path& out_dir, const std::string& stem) {
  const std::string name = fmt::format("{}_seed{}", stem, config.seed);
  const ExperimentResult result = run_experiment(config);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

  auto csv = open_output(fresh_path(out_dir, name, ".csv"));
  write_records_csv(csv, result.records);
  auto manifest = open_output(fresh_path(out_dir, name, ".manifest"));
  write_manifest(manifest, config);
  if (config.dump_synthetic && !result.last_synthetic_labels.empty()) {
    auto syn = open_output(fresh_path(out_dir, name + "_synthetic", ".csv"));
    write_synthetic_csv(syn, result.last_synthetic, result.last_synthetic_labels);
  }
  fmt::print("{} seed={} top_g_acc={:.4f} round={} l_acc=({:.4f})\n", stem, config.seed, result.summary.top_g_acc,
             result.summary.top_round, result.summary.l_acc_at_top);
  return SeedOutcome{config.seed, result.summary};
}

struct Aggregate {
  double g_mean, g_std, l_mean, l_std;
};

Aggregate aggregate_outcomes(const std::vector<SeedOutcome>& outcomes) {
  std::vector<double> g, l;
  for (const auto& o : outcomes) {
    g.push_back(o.summary.top_g_acc);
    l.push_back(o.summary.l_acc_at_top);
  }
  const auto [gm, gs] = mean_std(g);
  const auto [lm, ls] = mean_std(l);
  return Aggregate{gm, gs, lm, ls};
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& seeds_text,
            const fs::path& out_dir) {
  ExperimentConfig config = base_config(config_path, overrides);
  const auto seeds = parse_seeds(seeds_text, config.seed);
  for (auto s : seeds) {
    config.seed = s;
    config.validate();
  }
  fs::create_directories(out_dir);
  const std::string stem = config_path.empty() ? "run" : fs::path(config_path).stem().string();

  std::vector<SeedOutcome> outcomes;
  for (auto s : seeds) {
    config.seed = s;
    outcomes.push_back(run_one(config, out_dir, stem));
  }
  const Aggregate agg = aggregate_outcomes(outcomes);
  auto summary = open_output(fresh_path(out_dir, stem + "_summary", ".txt"));
  for (const auto& o : outcomes)
    fmt::print(summary, "seed={} top_g_acc={:.6f} round={} l_acc={:.6f}\n", o.seed, o.summary.top_g_acc,
               o.summary.top_round, o.summary.l_acc_at_top);
  const std::string line = fmt::format("{} seeds={} g_acc={:.2f}±{:.2f} ({:.2f}±{:.2f})", stem, outcomes.size(),
                                       100.0 * agg.g_mean, 100.0 * agg.g_std, 100.0 * agg.l_mean, 100.0 * agg.l_std);
  summary << line << '\n';
  std::cout << line << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::vector<std::string>& axes_text, const std::string& seeds_text, const fs::path& out_dir) {
  const ExperimentConfig base = base_config(config_path, overrides);
  struct Axis {
    std::string key;
    std::vector<std::string> values;
  };
  std::vector<Axis> axes;
  for (const auto& a : axes_text) {
    auto [key, values] = split_assignment(a);
    axes.push_back(Axis{canonical_key(key), split_commas(values)});
  }

  // Cross product, first axis slowest.
  std::vector<std::vector<std::size_t>> combos = {{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& c : combos)
      for (std::size_t v = 0; v < axis.values.size(); ++v) {
        next.push_back(c);
        next.back().push_back(v);
      }
    combos = std::move(next);
  }

  const auto seeds = parse_seeds(seeds_text, base.seed);
  std::vector<std::pair<std::string, ExperimentConfig>> plans;
  for (const auto& combo : combos) {
    ExperimentConfig config = base;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& value = axes[a].values[combo[a]];
      set_config_value(config, axes[a].key, value);
      const auto dot = axes[a].key.rfind('.');
      label += fmt::format("{}{}-{}", label.empty() ? "" : "_", axes[a].key.substr(dot + 1), value);
    }
    for (auto s : seeds) {
      config.seed = s;
      config.validate();
    }
    plans.emplace_back(label.empty() ? "base" : label, config);
  }

  fs::create_directories(out_dir);
  auto summary = open_output(fresh_path(out_dir, "sweep_summary", ".csv"));
  summary << "combination,seeds,mean_top_g_acc,std_top_g_acc,mean_l_acc,std_l_acc\n";
  for (auto& [label, config] : plans) {
    std::vector<SeedOutcome> outcomes;
    for (auto s : seeds) {
      config.seed = s;
      outcomes.push_back(run_one(config, out_dir, label));
    }
    const Aggregate agg = aggregate_outcomes(outcomes);
    fmt::print(summary, "{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", label, outcomes.size(), agg.g_mean, agg.g_std,
               agg.l_mean, agg.l_std);
    fmt::print("{} seeds={} g_acc={:.2f}±{:.2f} ({:.2f}±{:.2f})\n", label, outcomes.size(), 100.0 * agg.g_mean,
               100.0 * agg.g_std, 100.0 * agg.l_mean, 100.0 * agg.l_std);
  }
  return 0;
}

int cmd_check() {
  bool all = true;
  for (const auto& r : run_self_checks()) {
    fmt::print("{} {}{}\n", r.passed ? "PASS" : "FAIL", r.name, r.detail.empty() ? "" : " (" + r.detail + ")");
    all = all && r.passed;
  }
  return all ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous federated learning with data-free server distillation"};
  app.require_subcommand(1);

  std::string config_path, seeds_text, out_dir = "runs";
  std::vector<std::string> overrides, axes;

  auto* run = app.add_subcommand("run", "Run one configuration, once per seed");
  run->add_option("--config,-c", config_path, "key=value config file")->check(CLI::ExistingFile);
  run->add_option("--set,-s", overrides, "override, key=value (repeatable)");
  run->add_option("--seeds", seeds_text, "comma-separated master seeds");
  run->add_option("--out,-o", out_dir, "output directory");

  auto* sweep = app.add_subcommand("sweep", "Run the cross product of listed override values");
  sweep->add_option("--config,-c", config_path, "key=value config file")->check(CLI::ExistingFile);
  sweep->add_option("--set,-s", overrides, "fixed override, key=value (repeatable)");
  sweep->add_option("--seeds", seeds_text, "comma-separated master seeds");
  sweep->add_option("--out,-o", out_dir, "output directory");
  sweep->add_option("axes", axes, "key=v1,v2,...")->required();

  app.add_subcommand("check", "Run the fast invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, overrides, seeds_text, out_dir);
    if (sweep->parsed()) return cmd_sweep(config_path, overrides, axes, seeds_text, out_dir);
    return cmd_check();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
