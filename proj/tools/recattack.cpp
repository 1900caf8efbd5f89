// SPDX-License-Identifier: Apache-2.0
/**
 * @file   recattack.cpp
 * @brief  Command-line front end for the experiment harness.
 *
 * Exit codes: 0 success, 1 usage/configuration error, 2 stage failure.
 */
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recattack/recattack.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace recattack;

  CLI::App app{"Black-box extraction and profile-pollution laboratory for sequential recommenders"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "flat key = value config file (overrides flags)");

  // Every configuration key doubles as a flag, e.g. --distill.alpha 0.9
  std::map<std::string, std::string> flag_values;
  for (const auto& f : config_fields())
    app.add_option("--" + f.key, flag_values[f.key], f.help);

  struct Command {
    const char* name;
    const char* help;
    const char* stages;  // nullptr: keep the configured stage list
  };
  const std::vector<Command> commands = {
      {"gen-corpus", "build (or load) the corpus and write corpus.txt", "corpus"},
      {"train-victim", "train the victim model", "corpus,victim"},
      {"synthesize", "query the black box and write queries.tsv", "synthesize"},
      {"distill", "train the surrogate from queries.tsv", "distill"},
      {"attack", "generate polluted sequences with the surrogate", "attack"},
      {"evaluate", "score the polluted sequences and the surrogate", "evaluate"},
      {"pipeline", "run every enabled stage", nullptr},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) subs[c.name] = app.add_subcommand(c.name, c.help);

  std::string arms = "combined+dual,pair_only+grad_only";
  auto* ablation = app.add_subcommand("ablation", "compare loss / signal arms on a shared victim");
  ablation->add_option("--arms", arms, "comma-separated loss+signal arms");

  std::string alphas = "0.7,0.8,0.9,0.97,0.99";
  auto* sweep = app.add_subcommand("alpha-sweep", "distill once per alpha on a shared query set");
  sweep->add_option("--alphas", alphas, "comma-separated decay values in (0,1)");

  auto* print = app.add_subcommand("print-config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  ExperimentConfig cfg;
  try {
    for (const auto& f : config_fields())
      if (auto* opt = app.get_option("--" + f.key); opt->count() > 0) set_config_value(cfg, f.key, flag_values[f.key]);
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& c : commands)
      if (subs[c.name]->parsed() && c.stages) cfg.stages = c.stages;
    cfg.validate();
  } catch (const Error& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (print->parsed()) {
      std::cout << config_echo(cfg, true);
      return 0;
    }
    if (ablation->parsed()) {
      const auto rep = run_ablation(cfg, split_list(arms));
      std::cout << "ablation written to " << cfg.output_dir << "/ablation.csv\n";
      for (const auto& row : rep["ablation"])
        std::cout << "  " << row["arm"].get<std::string>() << "  post_hit=" << row["metrics"]["post_hit_rate"]
                  << "  agr@k=" << row["metrics"]["agrk"] << '\n';
      return 0;
    }
    if (sweep->parsed()) {
      std::vector<double> values;
      for (const auto& a : split_list(alphas)) values.push_back(detail::parse_double(a));
      const auto res = run_alpha_sweep(cfg, values);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& r : res.rows)
        std::cout << "alpha=" << r.alpha << "  agr@1=" << r.agr1 << "  agr@" << cfg.eval_k << "=" << r.agrk << '\n';
      return 0;
    }
    const auto rep = run_pipeline(cfg);
    std::cout << "report written to " << cfg.output_dir << "/report.json\n";
    if (rep.contains("evaluate")) std::cout << rep["evaluate"]["summary"].dump(2) << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
