#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ifnet/cli/commands.hpp"

using namespace ifnet;

int main(int argc, char** argv) {
  CLI::App app{"IF-Net: implicit feature networks for 3D shape reconstruction"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  cli::Options opts;
  app.add_option("--config", config_path, "run configuration (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024));
  app.add_flag("--deterministic", opts.deterministic, "byte-reproducible outputs (zeroes wall-clock columns)");
  app.add_flag("--resume", opts.resume, "continue training from the checkpoint");

  auto* gen = app.add_subcommand("gen", "generate synthetic shapes, task inputs and training samples");
  auto* train = app.add_subcommand("train", "train a model, writing checkpoint and loss CSV");

  cli::ReconstructArgs rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "extract meshes from a trained model");
  reconstruct->add_option("--input", rec.input, "input .ifvx, .xyz, .off or .obj (default: a dataset split)");
  reconstruct->add_option("--output", rec.output, "output .obj for --input");
  reconstruct->add_option("--checkpoint", rec.checkpoint, "model checkpoint (default: from the config)");
  reconstruct->add_option("--field", rec.field, "also dump the occupancy field (IFFD)");
  reconstruct->add_option("--split", rec.split, "dataset split to reconstruct")->check(CLI::IsMember({"train", "val", "test"}));

  cli::EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score reconstructions against ground truth");
  eval->add_option("--pred", ev.pred_dir, "directory of predicted meshes (default: output_dir)");
  eval->add_option("--gt", ev.gt_dir, "directory of ground-truth meshes (default: dataset split)");
  eval->add_option("--csv", ev.csv, "metrics CSV path (default: eval_csv)");
  eval->add_option("--split", ev.split, "dataset split to score")->check(CLI::IsMember({"train", "val", "test"}));

  auto* verify = app.add_subcommand("verify", "run the property battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitUsage;
  }

  try {
    set_num_threads(threads);
    if (verify->parsed()) return cli::cmd_verify(opts);
    if (config_path.empty()) throw ConfigError("--config is required for " + app.get_subcommands().front()->get_name());
    auto cfg = cli::load_run_config(config_path);
    if (seed) cfg = cli::with_override(cfg, "seed", std::to_string(*seed));
    if (gen->parsed()) return cli::cmd_gen(cfg, opts);
    if (train->parsed()) return cli::cmd_train(cfg, opts);
    if (reconstruct->parsed()) return cli::cmd_reconstruct(cfg, opts, rec);
    if (eval->parsed()) return cli::cmd_eval(cfg, opts, ev);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return cli::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitUsage;
  }
  return cli::kExitUsage;
}
