#include "bfpn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "bfpn/eval.hpp"
#include "bfpn/io.hpp"
#include "bfpn/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bfpn::cmd {
namespace {

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  return format_g9(v);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir);
}

json norm_to_json(const NormKind& k) { return norm_kind_text(k); }

json model_to_json(const ModelConfig& c) {
  json j;
  j["input_size"] = c.input_size;
  j["base_channels"] = c.base_channels;
  j["encoder_stages"] = c.encoder_stages;
  j["pyramid_channels"] = c.pyramid_channels;
  j["encoder_dropout_p"] = c.encoder_dropout_p;
  j["head_spatial_dropout_p"] = c.head_spatial_dropout_p;
  j["norm_encoder"] = norm_to_json(c.norm_encoder);
  j["norm_decoder"] = norm_to_json(c.norm_decoder);
  j["num_classes"] = c.num_classes;
  return j;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.encoder_stages = j.at("encoder_stages").get<int>();
  c.pyramid_channels = j.at("pyramid_channels").get<int>();
  c.encoder_dropout_p = j.at("encoder_dropout_p").get<double>();
  c.head_spatial_dropout_p = j.at("head_spatial_dropout_p").get<double>();
  c.norm_encoder = parse_norm_kind(j.at("norm_encoder").get<std::string>());
  c.norm_decoder = parse_norm_kind(j.at("norm_decoder").get<std::string>());
  c.num_classes = j.at("num_classes").get<int>();
  c.validate();
  return c;
}

void write_run_config(const std::string& dir, const std::string& command,
                      uint64_t seed, const json& extra,
                      const ModelConfig* model) {
  json j;
  j["command"] = command;
  j["seed"] = seed;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = *it;
  if (model) j["model"] = model_to_json(*model);
  io::write_file((fs::path(dir) / "run_config.json").string(),
                 j.dump(2) + "\n");
}

// Model config from --config or from run_config.json beside the checkpoint.
ModelConfig resolve_model_config(const std::string& config_flag,
                                 const std::string& ckpt_path) {
  std::string path = config_flag;
  if (path.empty())
    path = (fs::path(ckpt_path).parent_path() / "run_config.json").string();
  if (!fs::exists(path))
    throw UsageError("cannot find model config: " + path +
                     " (pass --config explicitly)");
  return model_config_from_run_config(io::read_file(path));
}

std::vector<PhantomSample> select_split(std::vector<PhantomSample> samples,
                                        const io::SplitIds& ids,
                                        const std::vector<int>& want) {
  std::map<int, PhantomSample> by_id;
  for (auto& s : samples) by_id.emplace(s.id, std::move(s));
  std::vector<PhantomSample> out;
  for (int id : want) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw IoError("splits.json references missing sample id " +
                    std::to_string(id));
    out.push_back(std::move(it->second));
  }
  (void)ids;
  return out;
}

std::vector<PhantomSample> load_test_split(const std::string& data_dir) {
  std::vector<PhantomSample> samples = io::load_dataset(data_dir);
  io::SplitIds ids;
  if (io::read_splits(data_dir, ids))
    return select_split(std::move(samples), ids, ids.test);
  std::fprintf(stderr,
               "note: %s has no splits.json; evaluating all samples\n",
               data_dir.c_str());
  return samples;
}

}  // namespace

std::string model_config_json(const ModelConfig& cfg) {
  return model_to_json(cfg).dump(2);
}

ModelConfig model_config_from_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw IoError(std::string("run config: parse error: ") + e.what());
  }
  if (!j.contains("model"))
    throw UsageError("run config has no \"model\" section");
  return model_from_json(j.at("model"));
}

int run_phantom(const PhantomArgs& args) {
  if (args.count < 1) throw UsageError("phantom: --count must be >= 1");
  if (args.out.empty()) throw UsageError("phantom: --out is required");
  PhantomConfig cfg;
  cfg.count = args.count;
  cfg.size = args.size;
  cfg.seed = args.seed;
  cfg.noise_lo = args.noise_lo;
  cfg.noise_hi = args.noise_hi;
  cfg.validate();

  std::vector<PhantomSample> samples = generate(cfg);
  SplitResult parts = split(std::move(samples), 0.7, 0.1, 0.2, args.seed);
  io::SplitIds ids;
  for (const auto& s : parts.train) ids.train.push_back(s.id);
  for (const auto& s : parts.val) ids.val.push_back(s.id);
  for (const auto& s : parts.test) ids.test.push_back(s.id);

  std::vector<PhantomSample> all;
  all.reserve(size_t(cfg.count));
  for (auto& s : parts.train) all.push_back(std::move(s));
  for (auto& s : parts.val) all.push_back(std::move(s));
  for (auto& s : parts.test) all.push_back(std::move(s));
  std::sort(all.begin(), all.end(),
            [](const PhantomSample& a, const PhantomSample& b) {
              return a.id < b.id;
            });

  ensure_dir(args.out);
  io::save_dataset(args.out, all);
  io::write_splits(args.out, ids, args.seed);
  json extra;
  extra["phantom"] = {{"count", cfg.count},
                      {"size", cfg.size},
                      {"ctr_range", {cfg.ctr_lo, cfg.ctr_hi}},
                      {"lung_extent_range", {cfg.lung_extent_lo, cfg.lung_extent_hi}},
                      {"noise_range", {cfg.noise_lo, cfg.noise_hi}},
                      {"blur", cfg.blur}};
  write_run_config(args.out, "phantom", args.seed, extra, nullptr);
  std::printf("wrote %d phantoms (%d train / %d val / %d test) to %s\n",
              cfg.count, int(ids.train.size()), int(ids.val.size()),
              int(ids.test.size()), args.out.c_str());
  return 0;
}

int run_train(const TrainArgs& args) {
  if (args.data.empty() || args.out.empty())
    throw UsageError("train: --data and --out are required");

  std::vector<PhantomSample> samples = io::load_dataset(args.data);
  std::vector<PhantomSample> train_set, val_set;
  io::SplitIds ids;
  if (io::read_splits(args.data, ids)) {
    std::vector<PhantomSample> copy = samples;
    train_set = select_split(std::move(copy), ids, ids.train);
    val_set = select_split(std::move(samples), ids, ids.val);
  } else {
    SplitResult parts = split(std::move(samples), 0.7, 0.1, 0.2, args.seed);
    train_set = std::move(parts.train);
    val_set = std::move(parts.val);
  }
  if (train_set.empty()) throw UsageError("train: empty training split");

  ModelConfig mc;
  mc.input_size = train_set[0].size;
  mc.norm_decoder = parse_norm_kind(args.norm);
  mc.validate();
  BayesianFpn<float> model(mc, args.seed);

  TrainConfig tc;
  tc.batch_size = args.batch;
  tc.learning_rate = args.lr;
  tc.steps = args.steps;
  tc.seed = args.seed;
  tc.aug.enabled = args.augment;

  Adam<float> adam(model.params(), tc.learning_rate, tc.beta1, tc.beta2,
                   tc.adam_eps);
  TrainResult res = train(model, train_set, val_set, tc, &adam);

  ensure_dir(args.out);
  // loss history CSV
  std::string csv = "step,total,bce_h,bce_l,j_h,j_l\n";
  for (size_t i = 0; i < res.history.size(); ++i) {
    const LossValue& v = res.history[i];
    csv += std::to_string(i) + "," + csv_num(v.total) + "," +
           csv_num(v.bce_heart) + "," + csv_num(v.bce_lungs) + "," +
           csv_num(v.jaccard_heart) + "," + csv_num(v.jaccard_lungs) + "\n";
  }
  io::write_file((fs::path(args.out) / "loss.csv").string(), csv);

  // final checkpoint carries the optimizer state, the best one does not
  io::save_checkpoint((fs::path(args.out) / "checkpoint_final.bfpn").string(),
                      model, &adam);
  model.restore(res.best_params);
  io::save_checkpoint((fs::path(args.out) / "checkpoint_best.bfpn").string(),
                      model, nullptr);

  json extra;
  extra["train"] = {{"data", args.data},       {"steps", args.steps},
                    {"batch_size", args.batch}, {"learning_rate", args.lr},
                    {"norm", args.norm},        {"augment", args.augment}};
  write_run_config(args.out, "train", args.seed, extra, &mc);
  std::printf("trained %d steps; best val IoU %.4f at step %d; wrote %s\n",
              args.steps, res.best_val_iou, res.best_step, args.out.c_str());
  return 0;
}

int run_infer(const InferArgs& args) {
  if (args.ckpt.empty() || args.image.empty() || args.out.empty())
    throw UsageError("infer: --ckpt, --image and --out are required");
  if (args.T < 1) throw UsageError("infer: --T must be >= 1");

  ModelConfig mc = resolve_model_config(args.config, args.ckpt);
  BayesianFpn<float> model(mc, 0);
  io::load_checkpoint(args.ckpt, model, nullptr);

  io::Pgm pgm = io::read_pgm(args.image);
  if (pgm.w != mc.input_size || pgm.h != mc.input_size)
    throw UsageError("infer: image size does not match model input size");
  std::vector<float> img(pgm.data.size());
  for (size_t i = 0; i < img.size(); ++i) img[i] = float(pgm.data[i]) / 255.0f;
  Tensor<float> x =
      Tensor<float>::from_data({1, 1, mc.input_size, mc.input_size}, img);

  McSampleStack stack = mc_sample(model, x, args.T, args.seed);
  UncertaintyReport rep = report(stack);

  ensure_dir(args.out);
  const int S = mc.input_size;
  const size_t npx = size_t(S) * S;
  auto to_f32 = [](const std::vector<double>& v) {
    std::vector<float> f(v.size());
    for (size_t i = 0; i < v.size(); ++i) f[i] = float(v[i]);
    return f;
  };
  auto write_map = [&](const char* name, const std::vector<double>& v,
                       std::vector<int> shape) {
    std::vector<float> f = to_f32(v);
    io::write_btsr_f32((fs::path(args.out) / name).string(), shape, f.data());
  };
  write_map("mean.btsr", rep.mean, {2, S, S});
  write_map("entropy.btsr", rep.entropy, {2, S, S});
  write_map("mutual_info.btsr", rep.mutual_info, {2, S, S});
  write_map("entropy_sum.btsr", rep.entropy_sum, {S, S});
  write_map("mi_sum.btsr", rep.mi_sum, {S, S});

  // 8-bit renderings: probabilities 0..1 -> 0..255, uncertainties 0..ln2 ->
  // 0..255, clamped
  auto render = [&](const char* name, const double* v, double vmax) {
    std::vector<uint8_t> px(npx);
    for (size_t i = 0; i < npx; ++i) {
      double t = v[i] / vmax * 255.0;
      px[i] = uint8_t(std::lround(std::min(255.0, std::max(0.0, t))));
    }
    io::write_pgm((fs::path(args.out) / name).string(), S, S, px.data());
  };
  render("mean_heart.pgm", rep.mean.data(), 1.0);
  render("mean_lungs.pgm", rep.mean.data() + npx, 1.0);
  render("entropy_sum.pgm", rep.entropy_sum.data(), std::log(2.0));
  render("mi_sum.pgm", rep.mi_sum.data(), std::log(2.0));

  std::string image_id = fs::path(args.image).stem().string();
  std::string csv = "image_id,T,mean,std,p2.5,p97.5,flagged_samples\n";
  try {
    CtrEstimate est = estimate_ctr(stack);
    csv += image_id + "," + std::to_string(args.T) + "," + csv_num(est.mean) +
           "," + csv_num(est.stddev) + "," + csv_num(est.p2_5) + "," +
           csv_num(est.p97_5) + "," + std::to_string(est.flagged) + "\n";
  } catch (const NumericError&) {
    std::fprintf(stderr,
                 "warning: every MC sample produced an empty mask; CTR "
                 "estimate flagged\n");
    csv += image_id + "," + std::to_string(args.T) + ",nan,nan,nan,nan," +
           std::to_string(args.T) + "\n";
  }
  io::write_file((fs::path(args.out) / "ctr.csv").string(), csv);

  json extra;
  extra["infer"] = {{"ckpt", args.ckpt}, {"image", args.image}, {"T", args.T}};
  write_run_config(args.out, "infer", args.seed, extra, &mc);
  return 0;
}

int run_eval(const EvalArgs& args) {
  if (args.ckpt.empty() || args.data.empty() || args.out.empty())
    throw UsageError("eval: --ckpt, --data and --out are required");

  ModelConfig mc = resolve_model_config(args.config, args.ckpt);
  BayesianFpn<float> model(mc, 0);
  io::load_checkpoint(args.ckpt, model, nullptr);
  std::vector<PhantomSample> test = load_test_split(args.data);

  std::vector<MetricRow> rows;
  if (args.oracle) {
    // pipeline self-check: score the ground truth against itself
    for (const auto& s : test) {
      MetricRow r;
      r.image_id = "img_" + std::to_string(s.id);
      r.iou_heart = r.iou_lungs = r.dice_heart = r.dice_lungs = 1.0;
      r.ctr_pred = ground_truth_ctr(s);
      r.ctr_gt = s.gt_ctr;
      rows.push_back(r);
    }
  } else {
    rows = evaluate(model, test, args.T, args.seed);
  }

  ensure_dir(args.out);
  std::string csv =
      "image_id,iou_heart,iou_lungs,dice_heart,dice_lungs,ctr_pred,ctr_gt,"
      "flagged_samples\n";
  double sih = 0, sil = 0, sdh = 0, sdl = 0, scp = 0, scg = 0;
  int flagged_total = 0, with_ctr = 0;
  std::vector<double> cps, cgs;
  for (const auto& r : rows) {
    csv += r.image_id + "," + csv_num(r.iou_heart) + "," +
           csv_num(r.iou_lungs) + "," + csv_num(r.dice_heart) + "," +
           csv_num(r.dice_lungs) + "," + csv_num(r.ctr_pred) + "," +
           csv_num(r.ctr_gt) + "," + std::to_string(r.flagged_samples) + "\n";
    sih += r.iou_heart;
    sil += r.iou_lungs;
    sdh += r.dice_heart;
    sdl += r.dice_lungs;
    flagged_total += r.flagged_samples;
    if (!std::isnan(r.ctr_pred)) {
      scp += r.ctr_pred;
      scg += r.ctr_gt;
      cps.push_back(r.ctr_pred);
      cgs.push_back(r.ctr_gt);
      ++with_ctr;
    }
  }
  const double n = double(rows.size());
  csv += "aggregate," + csv_num(sih / n) + "," + csv_num(sil / n) + "," +
         csv_num(sdh / n) + "," + csv_num(sdl / n) + "," +
         csv_num(with_ctr ? scp / with_ctr : std::nan("")) + "," +
         csv_num(with_ctr ? scg / with_ctr : std::nan("")) + "," +
         std::to_string(flagged_total) + "\n";
  io::write_file((fs::path(args.out) / "metrics.csv").string(), csv);

  double r_ctr = std::nan("");
  if (cps.size() >= 2) {
    try {
      r_ctr = pearson(cps, cgs);
    } catch (const NumericError&) {
    }
  }
  std::printf(
      "eval over %zu images: IoU heart %.4f lungs %.4f, Dice heart %.4f "
      "lungs %.4f, CTR pearson %.4f\n",
      rows.size(), sih / n, sil / n, sdh / n, sdl / n, r_ctr);

  json extra;
  extra["eval"] = {{"ckpt", args.ckpt},
                   {"data", args.data},
                   {"T", args.T},
                   {"oracle", args.oracle}};
  write_run_config(args.out, "eval", args.seed, extra, &mc);
  return 0;
}

int run_sweep(const SweepArgs& args) {
  if (args.ckpt.empty() || args.data.empty() || args.out.empty())
    throw UsageError("sweep: --ckpt, --data and --out are required");
  if (args.t_list.empty()) throw UsageError("sweep: empty T list");
  for (int t : args.t_list)
    if (t < 1) throw UsageError("sweep: T values must be >= 1");

  ModelConfig mc = resolve_model_config(args.config, args.ckpt);
  BayesianFpn<float> model(mc, 0);
  io::load_checkpoint(args.ckpt, model, nullptr);
  std::vector<PhantomSample> test = load_test_split(args.data);

  std::vector<SweepRow> rows = mc_sweep(model, test, args.t_list, args.seed);
  ensure_dir(args.out);
  std::string csv = "T,metric,value,ci_low,ci_high\n";
  for (const auto& r : rows)
    csv += std::to_string(r.T) + "," + r.metric + "," + csv_num(r.value) +
           "," + csv_num(r.ci_low) + "," + csv_num(r.ci_high) + "\n";
  io::write_file((fs::path(args.out) / "sweep.csv").string(), csv);

  json extra;
  extra["sweep"] = {{"ckpt", args.ckpt},
                    {"data", args.data},
                    {"t_list", args.t_list}};
  write_run_config(args.out, "sweep", args.seed, extra, &mc);
  std::printf("sweep over %zu T values written to %s\n", args.t_list.size(),
              args.out.c_str());
  return 0;
}

}  // namespace bfpn::cmd
