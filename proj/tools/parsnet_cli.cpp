#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "parsnet/error.hpp"
#include "parsnet/experiment.hpp"

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

constexpr Flag kFlags[] = {
    {"--data", "data", "CSV dataset with a 'label' column"},
    {"--gen", "gen", "synthetic stream: sea or hyperplane"},
    {"--gen-size", "gen_size", "number of generated samples (0 = generator default)"},
    {"--scenario", "scenario", "label access: sporadic or delay"},
    {"--label-frac", "label_frac", "fraction of labelled samples per batch (sporadic)"},
    {"--batch", "batch", "batch size"},
    {"--seeds", "seeds", "seed list, e.g. 1,2,3 or 1-5"},
    {"--out", "out", "output directory"},
    {"--alpha1", "alpha1", "mixture confidence threshold"},
    {"--alpha2", "alpha2", "network confidence threshold"},
    {"--alpha4", "alpha4", "initial spread of new mixture components"},
    {"--lr-gen", "lr_gen", "generative learning rate"},
    {"--lr-disc", "lr_disc", "discriminative learning rate"},
    {"--mask-fraction", "mask_fraction", "fraction of inputs blanked in the generative step"},
    {"--prune-grace", "prune_grace", "samples before a mixture component may be pruned"},
    {"--epsilon", "epsilon", "damping term of the importance estimate"},
    {"--augment", "augment", "augmentation noise: tabular or image"},
    {"--drift", "drift", "per-sample weight drift of the hyperplane generator"},
    {"--label-noise", "label_noise", "label noise of the SEA generator"},
    {"--trace", "trace", "write per-sample NS trace CSVs (true/false)"},
    {"--audit", "audit", "write pseudo-label audit CSVs (true/false)"},
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised evolving network for data streams"};
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  for (const Flag& f : kFlags) {
    options[f.key] = app.add_option(f.name, values[f.key], f.help);
  }
  options["data"]->excludes(options["gen"]);
  std::vector<std::string> ablations;
  CLI::Option* ablate = app.add_option("--ablate", ablations, "disable a component: agmm, evolve or slash")
                            ->delimiter(',');
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    parsnet::Settings cli;
    for (const Flag& f : kFlags) {
      if (options[f.key]->count() > 0) {
        cli[f.key] = values[f.key];
      }
    }
    if (ablate->count() > 0) {
      std::string joined;
      for (const std::string& a : ablations) {
        joined += (joined.empty() ? "" : ",") + a;
      }
      cli["ablate"] = joined;
    }
    const parsnet::Settings file =
        config_path.empty() ? parsnet::Settings{} : parsnet::read_config_file(config_path);
    std::optional<std::string> env_seed;
    if (const char* s = std::getenv("PARSNET_SEED")) {
      env_seed = s;
    }
    const parsnet::ExperimentConfig config = parsnet::resolve_config(file, cli, env_seed);
    const parsnet::ExperimentResult result = parsnet::run_experiment(config, std::cout);
    return result.exit_code;
  } catch (const parsnet::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
