// bfpn: Bayesian FPN segmentation with MC-dropout uncertainty and CTR
// estimation on synthetic chest phantoms.
//
// Exit codes: 0 success (warnings allowed), 1 usage, 2 I/O, 3 numeric.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "bfpn/commands.hpp"
#include "bfpn/util.hpp"

namespace {

uint64_t default_seed() {
  uint64_t s = 0;
  bfpn::env_u64("BFPN_SEED", s);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian FPN chest-phantom segmentation and CTR estimation"};
  app.require_subcommand(1);

  bfpn::cmd::PhantomArgs pa;
  pa.seed = default_seed();
  auto* phantom = app.add_subcommand(
      "phantom", "Generate a synthetic chest-phantom dataset");
  phantom->add_option("--count", pa.count, "Number of samples");
  phantom->add_option("--size", pa.size, "Image size (H = W)");
  phantom->add_option("--out", pa.out, "Output dataset directory")->required();
  phantom->add_option("--seed", pa.seed, "RNG seed");
  phantom->add_option("--noise-lo", pa.noise_lo, "Noise sigma lower bound");
  phantom->add_option("--noise-hi", pa.noise_hi, "Noise sigma upper bound");

  bfpn::cmd::TrainArgs ta;
  ta.seed = default_seed();
  auto* train = app.add_subcommand("train", "Train the Bayesian FPN");
  train->add_option("--data", ta.data, "Dataset directory")->required();
  train->add_option("--steps", ta.steps, "Optimization steps");
  train->add_option("--batch", ta.batch, "Minibatch size");
  train->add_option("--lr", ta.lr, "Learning rate");
  train
      ->add_option("--norm", ta.norm,
                   "Decoder normalization: instance|batch|group[:G]")
      ->default_str("instance");
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--seed", ta.seed, "RNG seed");
  train->add_flag("--no-augment{false}", ta.augment,
                  "Disable data augmentation");

  bfpn::cmd::InferArgs ia;
  ia.seed = default_seed();
  auto* infer = app.add_subcommand(
      "infer", "MC-dropout inference: masks, uncertainty maps, CTR");
  infer->add_option("--ckpt", ia.ckpt, "Checkpoint path")->required();
  infer->add_option("--image", ia.image, "Input image (PGM)")->required();
  infer->add_option("--T", ia.T, "Number of MC dropout samples");
  infer->add_option("--out", ia.out, "Output directory")->required();
  infer->add_option("--seed", ia.seed, "RNG seed");
  infer->add_option("--config", ia.config,
                    "run_config.json (default: beside the checkpoint)");

  bfpn::cmd::EvalArgs ea;
  ea.seed = default_seed();
  auto* eval = app.add_subcommand("eval", "Metric suite over the test split");
  eval->add_option("--ckpt", ea.ckpt, "Checkpoint path")->required();
  eval->add_option("--data", ea.data, "Dataset directory")->required();
  eval->add_option("--T", ea.T, "Number of MC dropout samples");
  eval->add_option("--out", ea.out, "Output directory")->required();
  eval->add_option("--seed", ea.seed, "RNG seed");
  eval->add_option("--config", ea.config, "run_config.json");
  eval->add_flag("--oracle", ea.oracle,
                 "Score ground-truth masks as predictions (self-check)");

  bfpn::cmd::SweepArgs sa;
  sa.seed = default_seed();
  auto* sweep = app.add_subcommand(
      "sweep", "MC sample-count sweep with bootstrap intervals");
  sweep->add_option("--ckpt", sa.ckpt, "Checkpoint path")->required();
  sweep->add_option("--data", sa.data, "Dataset directory")->required();
  sweep->add_option("--T-list", sa.t_list, "T values (comma separated)")
      ->delimiter(',');
  sweep->add_option("--out", sa.out, "Output directory")->required();
  sweep->add_option("--seed", sa.seed, "RNG seed");
  sweep->add_option("--config", sa.config, "run_config.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*phantom) return bfpn::cmd::run_phantom(pa);
    if (*train) return bfpn::cmd::run_train(ta);
    if (*infer) return bfpn::cmd::run_infer(ia);
    if (*eval) return bfpn::cmd::run_eval(ea);
    if (*sweep) return bfpn::cmd::run_sweep(sa);
  } catch (const bfpn::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const bfpn::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const bfpn::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
