#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parsnet/stream.hpp"

namespace parsnet {

enum class ScenarioKind { sporadic, infinite_delay };

struct ExperimentConfig {
  std::string data_path;             // CSV source; empty when a generator is used
  std::string generator = "sea";     // sea | hyperplane
  std::size_t gen_size = 0;          // 0 selects the generator default
  ScenarioKind scenario = ScenarioKind::sporadic;
  double label_fraction = 0.5;
  std::size_t batch_size = 1000;
  std::vector<std::uint64_t> seeds{1};
  double hyperplane_drift = 1e-4;
  double sea_label_noise = 0.0;
  LearnerConfig learner;
  std::string out_dir = "parsnet_out";
  bool trace = false;
  bool audit = false;
};

using Settings = std::map<std::string, std::string>;

// Keys accepted in config files and on the command line (dashes and
// underscores are interchangeable).
const std::vector<std::string>& setting_keys();

// Applies one key=value setting; throws ConfigError on unknown keys or bad values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

// Flat key=value text; '#' starts a comment, blank lines are ignored.
Settings parse_config_text(const std::string& text, const std::string& origin = "config");
Settings read_config_file(const std::string& path);

// Defaults, then the config file, then command-line settings. The seed
// fallback applies only when neither layer sets seeds.
ExperimentConfig resolve_config(const Settings& file, const Settings& cli,
                                const std::optional<std::string>& seed_fallback = std::nullopt);

void validate(const ExperimentConfig& config);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

StreamScenario build_scenario(const ExperimentConfig& config, std::uint64_t seed);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<RunMetrics> metrics;
  std::string error;
};

struct ExperimentResult {
  int exit_code = 0;
  std::vector<SeedOutcome> seeds;
  nlohmann::json summary;
};

// Per-batch report: index, accuracy, hidden, components, pseudo_count, cumulative_seconds.
void write_batch_csv(std::ostream& out, const RunMetrics& metrics);

nlohmann::json summarize(const ExperimentConfig& config, const std::vector<SeedOutcome>& outcomes);

// Runs every seed, writes seed_<s>.csv and summary.json under out_dir and a
// short report to `log`. Exit code 0 on success, 2 if any seed failed.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log);

} // namespace parsnet
