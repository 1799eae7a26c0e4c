#pragma once

#include <string>
#include <vector>

#include "bfpn/model.hpp"

namespace bfpn::cmd {

struct PhantomArgs {
  std::string out;
  int count = 200;
  int size = 64;
  uint64_t seed = 0;
  double noise_lo = 0.01, noise_hi = 0.10;
};

struct TrainArgs {
  std::string data;
  std::string out;
  int steps = 3000;
  int batch = 8;
  double lr = 1e-4;
  std::string norm = "instance";  // decoder normalization
  uint64_t seed = 0;
  bool augment = true;
};

struct InferArgs {
  std::string ckpt;
  std::string image;
  std::string out;
  std::string config;  // defaults to run_config.json beside the checkpoint
  int T = 20;
  uint64_t seed = 0;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string config;
  int T = 20;
  uint64_t seed = 0;
  bool oracle = false;  // score ground-truth masks as predictions
};

struct SweepArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string config;
  std::vector<int> t_list = {1, 2, 5, 10, 20, 30};
  uint64_t seed = 0;
};

int run_phantom(const PhantomArgs& args);
int run_train(const TrainArgs& args);
int run_infer(const InferArgs& args);
int run_eval(const EvalArgs& args);
int run_sweep(const SweepArgs& args);

// run_config.json helpers (model section round-trip).
std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_run_config(const std::string& json_text);

}  // namespace bfpn::cmd
