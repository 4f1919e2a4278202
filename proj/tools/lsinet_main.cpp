// lsinet: train, evaluate, ablate and inspect LSINet forecasters.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/errors.hpp"
#include "lsinet/eval/commands.hpp"
#include "lsinet/eval/run_config.hpp"

namespace {

using lsinet::eval::RunConfig;

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (auto& c : s) {
    if (c == '_') c = '-';
  }
  return s;
}

// Binds every config key to an option; values are applied after the config file.
struct ConfigOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "key = value config file (flags override it)")
        ->check(CLI::ExistingFile);
    for (const auto& k : lsinet::eval::config_keys()) {
      CLI::Option* opt = nullptr;
      if (k.is_flag) {
        opt = app.add_flag(flag_name(k.key), flags[k.key], k.help);
      } else {
        opt = app.add_option(flag_name(k.key), values[k.key], k.help);
      }
      options.emplace_back(k.key, opt);
    }
  }

  RunConfig build() const {
    RunConfig c;
    if (!config_file.empty()) lsinet::eval::apply_config_file(c, config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      const auto flag = flags.find(key);
      lsinet::eval::apply_setting(
          c, key, flag != flags.end() ? (flag->second ? "true" : "false") : values.at(key));
    }
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  lsinet::ad::tune_allocator();
  CLI::App app{"LSINet time-series forecaster"};
  app.require_subcommand(1);

  ConfigOptions train_opts;
  auto* train = app.add_subcommand("train", "train over the configured seeds");
  train_opts.attach(*train);

  ConfigOptions ablate_opts;
  std::vector<std::string> variants{"full", "no_msim", "no_asrl", "dense_gates"};
  auto* ablate = app.add_subcommand("ablate", "train labeled variants side by side");
  ablate_opts.attach(*ablate);
  ablate->add_option("--variants", variants,
                     "variants such as full, no_msim, no_asrl, dense_gates, or combinations "
                     "like no_msim+no_asrl")
      ->delimiter(',');

  std::string checkpoint;
  std::optional<std::string> data_path;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its test split");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_path, "CSV path overriding the recorded one");

  std::size_t head = 0;
  std::string what = "both";
  std::string heatmap_out = "heatmaps";
  auto* heatmap = app.add_subcommand("export-heatmap", "write a head's connection matrices");
  heatmap->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  heatmap->add_option("--head", head, "head index, block-major across stacked blocks");
  heatmap->add_option("--what", what, "probs, hard or both");
  heatmap->add_option("--out", heatmap_out, "output directory");

  std::uint64_t gradcheck_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--seed", gradcheck_seed, "seed for random inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) return lsinet::eval::run_train(train_opts.build(), std::cout);
    if (ablate->parsed()) {
      return lsinet::eval::run_ablate(ablate_opts.build(), variants, std::cout);
    }
    if (eval->parsed()) return lsinet::eval::run_eval(checkpoint, data_path, std::cout);
    if (heatmap->parsed()) {
      return lsinet::eval::run_export_heatmap(checkpoint, head, what, heatmap_out, std::cout);
    }
    if (gradcheck->parsed()) return lsinet::eval::run_gradcheck(gradcheck_seed, std::cout);
  } catch (const lsinet::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const lsinet::LoadError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const lsinet::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
