#include "parsnet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "parsnet/datasets.hpp"
#include "parsnet/error.hpp"

namespace parsnet {

namespace {

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
  if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") {
    return true;
  }
  if (value == "0" || value == "false" || value == "no" || value == "off") {
    return false;
  }
  throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) {
    return 0.0;
  }
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) {
    return 0.0;
  }
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) {
    s += (x - m) * (x - m);
  }
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

nlohmann::json optional_vector(const std::vector<std::optional<double>>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& x : v) {
    out.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
  }
  return out;
}

} // namespace

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys{
      "data",     "gen",          "gen_size",      "scenario", "label_frac", "batch",   "seeds",
      "ablate",   "out",          "alpha1",        "alpha2",   "alpha4",     "lr_gen",  "lr_disc",
      "mask_fraction", "prune_grace", "epsilon",   "augment",  "drift",      "label_noise",
      "trace",    "audit"};
  return keys;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : split(text, ',')) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const std::uint64_t lo = to_unsigned("seeds", trim(item.substr(0, dash)));
      const std::uint64_t hi = to_unsigned("seeds", trim(item.substr(dash + 1)));
      if (hi < lo || hi - lo > 10000) {
        throw ConfigError("seeds: bad range '" + item + "'");
      }
      for (std::uint64_t s = lo; s <= hi; ++s) {
        seeds.push_back(s);
      }
    } else {
      seeds.push_back(to_unsigned("seeds", item));
    }
  }
  if (seeds.empty()) {
    throw ConfigError("seeds: empty list");
  }
  return seeds;
}

void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = normalize_key(trim(raw_key));
  const std::string value = trim(raw_value);
  LearnerConfig& l = c.learner;
  if (key == "data") {
    c.data_path = value;
  } else if (key == "gen") {
    if (value != "sea" && value != "hyperplane") {
      throw ConfigError("gen: expected sea or hyperplane, got '" + value + "'");
    }
    c.generator = value;
    c.data_path.clear();
  } else if (key == "gen_size") {
    c.gen_size = to_unsigned(key, value);
  } else if (key == "scenario") {
    if (value == "sporadic") {
      c.scenario = ScenarioKind::sporadic;
    } else if (value == "delay") {
      c.scenario = ScenarioKind::infinite_delay;
    } else {
      throw ConfigError("scenario: expected sporadic or delay, got '" + value + "'");
    }
  } else if (key == "label_frac") {
    c.label_fraction = to_double(key, value);
  } else if (key == "batch") {
    c.batch_size = to_unsigned(key, value);
  } else if (key == "seeds") {
    c.seeds = parse_seed_list(value);
  } else if (key == "ablate") {
    l.agmm_off = l.evolution_off = l.slash_off = false;
    for (const std::string& item : split(value, ',')) {
      if (item == "agmm") {
        l.agmm_off = true;
      } else if (item == "evolve") {
        l.evolution_off = true;
      } else if (item == "slash") {
        l.slash_off = true;
      } else if (item != "none") {
        throw ConfigError("ablate: unknown component '" + item + "'");
      }
    }
  } else if (key == "out") {
    c.out_dir = value;
  } else if (key == "alpha1") {
    l.alpha1 = to_double(key, value);
  } else if (key == "alpha2") {
    l.alpha2 = to_double(key, value);
  } else if (key == "alpha4") {
    l.alpha4 = to_double(key, value);
  } else if (key == "lr_gen") {
    l.lr_gen = to_double(key, value);
  } else if (key == "lr_disc") {
    l.lr_disc = to_double(key, value);
  } else if (key == "mask_fraction") {
    l.mask_fraction = to_double(key, value);
  } else if (key == "prune_grace") {
    l.prune_grace = static_cast<std::int64_t>(to_unsigned(key, value));
  } else if (key == "epsilon") {
    l.epsilon = to_double(key, value);
  } else if (key == "augment") {
    if (value == "tabular") {
      l.augment_mode = AugmentMode::tabular;
    } else if (value == "image") {
      l.augment_mode = AugmentMode::image;
    } else {
      throw ConfigError("augment: expected tabular or image, got '" + value + "'");
    }
  } else if (key == "drift") {
    c.hyperplane_drift = to_double(key, value);
  } else if (key == "label_noise") {
    c.sea_label_noise = to_double(key, value);
  } else if (key == "trace") {
    c.trace = to_bool(key, value);
  } else if (key == "audit") {
    c.audit = to_bool(key, value);
  } else {
    throw ConfigError("unknown setting '" + raw_key + "'");
  }
}

Settings parse_config_text(const std::string& text, const std::string& origin) {
  Settings out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = normalize_key(trim(line.substr(0, eq)));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

Settings read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path);
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), path);
}

ExperimentConfig resolve_config(const Settings& file, const Settings& cli,
                                const std::optional<std::string>& seed_fallback) {
  ExperimentConfig c;
  const bool seeds_given = file.count("seeds") > 0 || cli.count("seeds") > 0;
  if (!seeds_given && seed_fallback && !trim(*seed_fallback).empty()) {
    apply_setting(c, "seeds", *seed_fallback);
  }
  // "gen" clears "data", so apply generator choices before data paths.
  auto apply_layer = [&c](const Settings& layer) {
    if (auto it = layer.find("gen"); it != layer.end()) {
      apply_setting(c, it->first, it->second);
    }
    for (const auto& [key, value] : layer) {
      if (key != "gen") {
        apply_setting(c, key, value);
      }
    }
  };
  apply_layer(file);
  apply_layer(cli);
  validate(c);
  return c;
}

void validate(const ExperimentConfig& c) {
  if (c.batch_size == 0) {
    throw ConfigError("batch must be positive");
  }
  if (c.seeds.empty()) {
    throw ConfigError("at least one seed is required");
  }
  if (c.scenario == ScenarioKind::sporadic && !(c.label_fraction > 0.0 && c.label_fraction <= 1.0)) {
    throw ConfigError("label_frac must lie in (0, 1]");
  }
  const LearnerConfig& l = c.learner;
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(l.alpha1) || !unit(l.alpha2)) {
    throw ConfigError("alpha1 and alpha2 must lie in [0, 1]");
  }
  if (!(l.alpha4 > 0.0)) {
    throw ConfigError("alpha4 must be positive");
  }
  if (l.lr_gen < 0.0 || l.lr_disc < 0.0) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (!(l.mask_fraction >= 0.0 && l.mask_fraction < 1.0)) {
    throw ConfigError("mask_fraction must lie in [0, 1)");
  }
  if (!(l.epsilon > 0.0)) {
    throw ConfigError("epsilon must be positive");
  }
  if (!unit(c.sea_label_noise)) {
    throw ConfigError("label_noise must lie in [0, 1]");
  }
  if (c.out_dir.empty()) {
    throw ConfigError("out must not be empty");
  }
}

StreamScenario build_scenario(const ExperimentConfig& c, std::uint64_t seed) {
  std::vector<Batch> batches;
  if (!c.data_path.empty()) {
    batches = load_csv(c.data_path, c.batch_size);
  } else if (c.generator == "sea") {
    batches = gen_sea(c.gen_size > 0 ? c.gen_size : 120000, seed, SeaOptions{c.batch_size, c.sea_label_noise});
  } else {
    batches = gen_hyperplane(c.gen_size > 0 ? c.gen_size : 25000, seed,
                             HyperplaneOptions{c.batch_size, c.hyperplane_drift});
  }
  const std::size_t classes = infer_num_classes(batches);
  if (c.scenario == ScenarioKind::infinite_delay) {
    return make_infinite_delay(std::move(batches), classes);
  }
  Rng mask_rng = make_rng(seed, 201);
  return make_sporadic(std::move(batches), classes, c.label_fraction, mask_rng);
}

void write_batch_csv(std::ostream& out, const RunMetrics& m) {
  out << "index,accuracy,hidden,components,pseudo_count,cumulative_seconds\n";
  for (std::size_t k = 0; k < m.batch_accuracy.size(); ++k) {
    out << (k + 1) << ',' << format_double(m.batch_accuracy[k]) << ',' << m.hidden_trajectory[k] << ','
        << m.agmm_trajectory[k] << ',' << m.pseudo_per_batch[k] << ','
        << format_double(m.cumulative_seconds[k]) << '\n';
  }
}

nlohmann::json summarize(const ExperimentConfig& c, const std::vector<SeedOutcome>& outcomes) {
  nlohmann::json j;
  j["source"] = c.data_path.empty() ? c.generator : c.data_path;
  j["scenario"] = c.scenario == ScenarioKind::sporadic ? "sporadic" : "delay";
  j["label_fraction"] = c.label_fraction;
  j["batch_size"] = c.batch_size;
  j["ablation"] = {{"agmm", c.learner.agmm_off}, {"evolve", c.learner.evolution_off}, {"slash", c.learner.slash_off}};

  std::vector<double> cr;
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json errors = nlohmann::json::array();
  std::vector<double> hidden;
  std::vector<double> pseudo;
  for (const SeedOutcome& o : outcomes) {
    if (!o.metrics) {
      errors.push_back({{"seed", o.seed}, {"error", o.error}});
      continue;
    }
    const RunMetrics& m = *o.metrics;
    const double rate = 100.0 * m.classification_rate;
    cr.push_back(rate);
    hidden.push_back(static_cast<double>(m.hidden_trajectory.back()));
    pseudo.push_back(static_cast<double>(m.pseudo_total));
    runs.push_back({{"seed", o.seed},
                    {"cr", rate},
                    {"precision", optional_vector(m.class_metrics.precision)},
                    {"recall", optional_vector(m.class_metrics.recall)},
                    {"final_hidden", m.hidden_trajectory.back()},
                    {"final_components", m.agmm_trajectory.back()},
                    {"pseudo_labels", m.pseudo_total},
                    {"batches", m.batch_accuracy.size()}});
  }
  j["runs"] = runs;
  j["cr"] = cr;
  j["cr_mean"] = mean_of(cr);
  j["cr_std"] = sample_std(cr);
  j["hidden_mean"] = mean_of(hidden);
  j["pseudo_mean"] = mean_of(pseudo);
  j["errors"] = errors;
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& c, std::ostream& log) {
  validate(c);
  namespace fs = std::filesystem;
  fs::create_directories(c.out_dir);
  ExperimentResult result;
  for (std::uint64_t seed : c.seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    try {
      const StreamScenario scenario = build_scenario(c, seed);
      LearnerConfig lc = c.learner;
      lc.seed = seed;
      const std::string stem = (fs::path(c.out_dir) / ("seed_" + std::to_string(seed))).string();
      std::ofstream trace;
      std::ofstream audit;
      RunOptions options;
      if (c.trace) {
        trace.open(stem + "_trace.csv");
        options.trace = &trace;
      }
      if (c.audit) {
        audit.open(stem + "_audit.csv");
        options.audit = &audit;
      }
      RunMetrics metrics = prequential_run(lc, scenario, options);
      std::ofstream csv(stem + ".csv");
      write_batch_csv(csv, metrics);
      if (!csv) {
        throw std::runtime_error("failed to write " + stem + ".csv");
      }
      log << "seed " << seed << ": CR " << 100.0 * metrics.classification_rate << "%, HN "
          << metrics.hidden_trajectory.back() << ", PS " << metrics.pseudo_total << '\n';
      outcome.metrics = std::move(metrics);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      outcome.error = e.what();
      log << "seed " << seed << " failed: " << e.what() << '\n';
      result.exit_code = 2;
    }
    result.seeds.push_back(std::move(outcome));
  }
  result.summary = summarize(c, result.seeds);
  std::ofstream json((fs::path(c.out_dir) / "summary.json").string());
  json << result.summary.dump(2) << '\n';
  if (!json) {
    result.exit_code = 2;
  }
  log << "CR " << result.summary["cr_mean"].get<double>() << " +- " << result.summary["cr_std"].get<double>()
      << ", HN " << result.summary["hidden_mean"].get<double>() << ", PS "
      << result.summary["pseudo_mean"].get<double>() << '\n';
  return result;
}

} // namespace parsnet
