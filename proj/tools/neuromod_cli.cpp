#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmod/data_io.hpp"
#include "nmod/harness.hpp"

namespace {

using nmod::harness::RunConfig;

struct FlagSet {
  std::string config;
  std::string seed;
  std::string base;
  std::string model;
  std::string scale;
  std::string epochs;
  std::string batch_size;
  std::string out;
  std::string dataset;
  std::string data_dir;
  std::string subset;
};

void add_common_options(CLI::App* cmd, FlagSet& flags) {
  cmd->add_option("--config", flags.config, "config file (key=value lines)");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--base", flags.base, "base optimizer: sgd|adam");
  cmd->add_option("--model", flags.model, "model name from the active catalog");
  cmd->add_option("--scale", flags.scale, "model scale: paper|desk");
  cmd->add_option("--epochs", flags.epochs, "training epochs per evaluation");
  cmd->add_option("--batch-size", flags.batch_size, "minibatch size");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--dataset", flags.dataset, "cifar10|cifar100|blobs|spirals");
  cmd->add_option("--data-dir", flags.data_dir, "directory holding dataset binaries");
  cmd->add_option("--subset", flags.subset, "keep only the first N training records");
}

RunConfig build_run(const CLI::App* cmd, const FlagSet& flags) {
  RunConfig run = nmod::harness::default_config();
  if (cmd->count("--config")) run = nmod::harness::load_config_file(flags.config, run);
  const std::vector<std::pair<const char*, const std::string*>> overrides = {
      {"seed", &flags.seed},           {"base", &flags.base},
      {"model", &flags.model},         {"scale", &flags.scale},
      {"epochs", &flags.epochs},       {"batch_size", &flags.batch_size},
      {"out", &flags.out},             {"dataset", &flags.dataset},
      {"data_dir", &flags.data_dir},   {"subset", &flags.subset},
  };
  const std::vector<std::pair<const char*, const char*>> flag_names = {
      {"seed", "--seed"},         {"base", "--base"},
      {"model", "--model"},       {"scale", "--scale"},
      {"epochs", "--epochs"},     {"batch_size", "--batch-size"},
      {"out", "--out"},           {"dataset", "--dataset"},
      {"data_dir", "--data-dir"}, {"subset", "--subset"},
  };
  for (size_t i = 0; i < overrides.size(); ++i) {
    if (cmd->count(flag_names[i].second))
      nmod::harness::apply_config_entry(run, overrides[i].first, *overrides[i].second);
  }
  return run;
}

const char* kind_name(nmod::grn::ProteinKind k) {
  using nmod::grn::ProteinKind;
  return k == ProteinKind::Input ? "input" : k == ProteinKind::Output ? "output" : "regulator";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuromodulated training experiments"};
  app.require_subcommand(1);

  FlagSet ev_flags, cmp_flags, tr_flags, pc_flags;
  std::string cmp_genome, tr_genome, vg_genome;

  CLI::App* evolve = app.add_subcommand("evolve", "evolve a hyperparameter controller");
  add_common_options(evolve, ev_flags);

  CLI::App* compare = app.add_subcommand("compare", "baselines vs the evolved controller");
  add_common_options(compare, cmp_flags);
  compare->add_option("--genome", cmp_genome, "controller genome file")->required();

  CLI::App* trace = app.add_subcommand("trace", "record controller inputs/outputs while training");
  add_common_options(trace, tr_flags);
  trace->add_option("--genome", tr_genome, "controller genome file")->required();

  CLI::App* print_config = app.add_subcommand("print-config", "print the effective configuration");
  add_common_options(print_config, pc_flags);

  CLI::App* validate = app.add_subcommand("validate-genome", "check a genome file");
  validate->add_option("genome", vg_genome, "genome file to validate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (evolve->parsed()) {
      const RunConfig run = build_run(evolve, ev_flags);
      const auto out = nmod::harness::cmd_evolve(run);
      std::printf("best fitness %s over %d generations\n",
                  nmod::io::format_real(out.result.best.fitness.value_or(0.0)).c_str(),
                  run.evolution.generations);
      std::printf("genome:  %s\n", out.genome_path.c_str());
      std::printf("history: %s\n", out.history_path.c_str());
    } else if (compare->parsed()) {
      const RunConfig run = build_run(compare, cmp_flags);
      const std::string csv = nmod::harness::cmd_compare(run, cmp_genome);
      std::printf("comparison: %s\n", csv.c_str());
    } else if (trace->parsed()) {
      const RunConfig run = build_run(trace, tr_flags);
      const std::string csv = nmod::harness::cmd_trace(run, tr_genome);
      std::printf("telemetry: %s\n", csv.c_str());
    } else if (print_config->parsed()) {
      const RunConfig run = build_run(print_config, pc_flags);
      std::fputs(nmod::harness::render_config(run).c_str(), stdout);
    } else if (validate->parsed()) {
      const auto gf = nmod::io::load_genome(vg_genome);
      std::printf("base %s, beta %s, delta %s\n",
                  gf.base == nmod::opt::BaseKind::Sgd ? "sgd" : "adam",
                  nmod::io::format_real(gf.genome.beta).c_str(),
                  nmod::io::format_real(gf.genome.delta).c_str());
      for (const auto kind : {nmod::grn::ProteinKind::Input, nmod::grn::ProteinKind::Output,
                              nmod::grn::ProteinKind::Regulator}) {
        std::printf("%d %s proteins\n", gf.genome.count(kind), kind_name(kind));
      }
      std::printf("ok\n");
    }
  } catch (const nmod::harness::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const nmod::io::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
