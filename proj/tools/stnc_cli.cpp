// stnc command-line driver. Every subcommand reads a pipeline config and works
// inside one run directory; stage subcommands expect the artifacts of the
// earlier stages to be there already.
//
// Exit codes: 0 success, 2 validation/usage error, 3 stage failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stnc/pipeline.hpp"

namespace {

using stnc::pipeline::PipelineConfig;
namespace fs = std::filesystem;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string stage_cache;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "pipeline config (JSON)")->required();
  cmd->add_option("--out", args.out, "run directory (default: output_dir from the config)");
  cmd->add_option("--seed", args.seed, "master seed override");
  cmd->add_option("--stage-cache", args.stage_cache, "stage cache directory");
}

PipelineConfig load(const CommonArgs& args) {
  PipelineConfig c = stnc::pipeline::load_config(args.config);
  if (args.seed) c.override_seed(*args.seed);
  if (!args.out.empty()) c.output_dir = args.out;
  stnc::require(!c.output_dir.empty(), stnc::ErrorKind::kValidation,
                "no output directory: pass --out or set output_dir in the config");
  return c;
}

std::optional<fs::path> cache_of(const CommonArgs& args) {
  if (args.stage_cache.empty()) return std::nullopt;
  return fs::path(args.stage_cache);
}

void print_metrics(const stnc::pipeline::RunReport& r) {
  std::printf("accuracy %.4f  macro_accuracy %.4f  (mean over %zu fold(s))\n", r.mean_accuracy,
              r.mean_macro_accuracy, r.metrics.at("folds").size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal non-negative component representation pipeline"};
  app.set_version_flag("--version", STNC_VERSION);
  app.require_subcommand(1);

  CommonArgs args;
  using StageFn = void (*)(stnc::pipeline::Run&);
  const std::vector<std::pair<std::string, StageFn>> stages{
      {"synth", stnc::pipeline::stage_synth},
      {"codebook", stnc::pipeline::stage_codebook},
      {"encode", stnc::pipeline::stage_encode},
      {"train", stnc::pipeline::stage_train},
      {"encode-test", stnc::pipeline::stage_encode_test},
      {"classify", stnc::pipeline::stage_classify},
  };
  const std::vector<std::string> stage_help{
      "ingest or synthesize the dataset and fix the folds",
      "train the visual-word codebook per fold",
      "encode histograms, STP vectors and STDVs per fold",
      "train the blended-graph factorization per fold",
      "encode test samples against the frozen factorization",
      "kernel SVM classification and metrics",
  };
  std::vector<CLI::App*> stage_cmds;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto* cmd = app.add_subcommand(stages[i].first, stage_help[i]);
    add_common(cmd, args);
    stage_cmds.push_back(cmd);
  }

  auto* pipeline_cmd = app.add_subcommand("pipeline", "run every stage end to end");
  add_common(pipeline_cmd, args);

  std::string parameter;
  std::vector<double> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "run the pipeline once per parameter value");
  add_common(sweep_cmd, args);
  sweep_cmd->add_option("--param", parameter, "beta, lambda, K_c, G or C")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

  auto* compare_cmd = app.add_subcommand("compare", "BoVW vs GNMF vs STANNCR vs pseudoinverse on identical folds");
  add_common(compare_cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const PipelineConfig config = load(args);
    const fs::path out = config.output_dir;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (!stage_cmds[i]->parsed()) continue;
      stnc::pipeline::Run run(config, out, cache_of(args));
      stages[i].second(run);
      std::printf("%s: done (%s)\n", stages[i].first.c_str(), out.string().c_str());
      if (stages[i].first == "classify") {
        const auto r = stnc::pipeline::finish_report(run);
        print_metrics(r);
      }
      return 0;
    }
    if (pipeline_cmd->parsed()) {
      const auto r = stnc::pipeline::run_pipeline(config, out, cache_of(args));
      print_metrics(r);
      std::printf("report: %s\n", (out / "run_report.json").string().c_str());
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const auto rows = stnc::pipeline::sweep(config, parameter, values, out, cache_of(args));
      std::printf("%-12s %-16s %s\n", parameter.c_str(), "macro_accuracy", "accuracy");
      for (const auto& r : rows) std::printf("%-12g %-16.4f %.4f\n", r.value, r.macro_accuracy, r.accuracy);
      std::printf("table: %s\n", (out / "sweep.csv").string().c_str());
      return 0;
    }
    if (compare_cmd->parsed()) {
      const auto rows = stnc::pipeline::compare_encoders(config, out, cache_of(args));
      std::printf("%-14s %-10s %-10s %-16s %s\n", "method", "fold", "accuracy", "macro_accuracy", "clamped");
      for (const auto& r : rows)
        std::printf("%-14s %-10s %-10.4f %-16.4f %zu\n", r.method.c_str(), r.fold.c_str(), r.accuracy,
                    r.macro_accuracy, r.clamped);
      std::printf("table: %s\n", (out / "compare.csv").string().c_str());
      return 0;
    }
  } catch (const stnc::Error& e) {
    std::cerr << "stnc: " << e.what() << '\n';
    return e.kind() == stnc::ErrorKind::kValidation ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "stnc: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
