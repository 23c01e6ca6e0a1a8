// vitsim: synthetic ViT generation, static/dynamic pruning, reference
// inference, accelerator simulation and analytical modeling.
//
// Exit codes: 0 success, 2 invalid input, 3 internal invariant violation.
// VITSIM_LOG={error,warn,info,debug} controls stderr verbosity.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "vitsim/model_io.hpp"
#include "vitsim/perf_model.hpp"
#include "vitsim/reference.hpp"
#include "vitsim/reports.hpp"
#include "vitsim/simulator.hpp"
#include "vitsim/synthetic.hpp"
#include "vitsim/weight_pruning.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("VITSIM_LOG");
    if (!env) return LogLevel::kWarn;
    const std::string v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "warn") return LogLevel::kWarn;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level())
    std::cerr << "vitsim [" << names[static_cast<int>(level)] << "] " << msg
              << "\n";
}

vitsim::ModelConfig preset_config(const std::string& name) {
  if (name == "deit-small") return vitsim::ModelConfig{};
  if (name == "tiny") return vitsim::tiny_config();
  throw std::invalid_argument("unknown preset '" + name +
                              "' (expected deit-small or tiny)");
}

struct ModelArgs {
  std::string config_path;
  std::string weights_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "model config JSON")->required();
    cmd->add_option("--weights", weights_path, "weight container (.vsbm)")
        ->required();
  }

  vitsim::ModelConfig load_cfg() const {
    return vitsim::load_config(config_path);
  }
};

vitsim::ModelWeights load_weights(const std::string& path,
                                  const vitsim::ModelConfig& cfg) {
  auto c = vitsim::TensorContainer::read(path);
  return vitsim::unpack_model(c, cfg);
}

std::vector<double> load_or_make_image(const std::optional<std::string>& path,
                                       const vitsim::ModelConfig& cfg,
                                       std::uint64_t seed) {
  const std::size_t want = cfg.image_h * cfg.image_w * cfg.channels;
  if (path) {
    auto c = vitsim::TensorContainer::read(*path);
    auto img = vitsim::tensor_vector(c.dense("image"));
    if (img.size() != want)
      throw std::invalid_argument("input image has " +
                                  std::to_string(img.size()) +
                                  " values, expected " + std::to_string(want));
    return img;
  }
  vitsim::Rng rng = vitsim::named_rng(seed, "input/image");
  std::vector<double> img(want);
  for (auto& p : img) p = rng.uniform(-1.0, 1.0);
  log(LogLevel::kInfo, "generated a seeded random input image");
  return img;
}

void write_json_out(const json& j, const std::optional<std::string>& out) {
  if (out) {
    vitsim::save_json(j, *out);
    log(LogLevel::kInfo, "wrote " + *out);
  } else {
    std::cout << j.dump(2) << "\n";
  }
}

json prune_report_json(const vitsim::PruneReport& report, double keep_rate,
                       std::size_t block, std::size_t baseline_params) {
  json encoders = json::array();
  for (const auto& e : report.encoders)
    encoders.push_back({{"removed_heads", e.removed_heads},
                        {"alpha", e.alpha},
                        {"alpha_proj", e.alpha_proj},
                        {"mlp_kept", e.mlp_kept},
                        {"weight_params", e.weight_params}});
  return json{{"keep_rate", keep_rate},
              {"block", block},
              {"head_retained_ratio", report.head_retained_ratio},
              {"alpha", report.alpha},
              {"alpha_proj", report.alpha_proj},
              {"alpha_mlp", report.alpha_mlp},
              {"param_count", report.param_count},
              {"baseline_param_count", baseline_params},
              {"compression_ratio",
               double(baseline_params) / double(report.param_count)},
              {"encoders", encoders}};
}

// measured per-layer sparsity inputs for the analytic model
std::vector<vitsim::EncoderCycleInputs> measured_layer_inputs(
    const vitsim::ModelWeights& m, const vitsim::ModelConfig& cfg) {
  auto tdm = vitsim::tdm_layer_set(cfg.tdm_layers, cfg.layers);
  std::vector<vitsim::EncoderCycleInputs> layers;
  std::size_t n = cfg.tokens;
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    const auto& w = m.encoders[l - 1];
    vitsim::EncoderCycleInputs in;
    in.tokens_in = n;
    const std::size_t body = n - 1;
    const std::size_t keep = static_cast<std::size_t>(
        std::ceil(cfg.token_keep_rate * static_cast<double>(body)));
    const bool drop =
        std::find(tdm.begin(), tdm.end(), l) != tdm.end() && keep < body;
    in.tokens_out = drop ? keep + 2 : n;
    in.token_drop = drop;
    in.heads_kept = w.heads_kept();
    in.mlp_kept = w.mlp_kept;
    const std::size_t hb = cfg.head_dim / cfg.block;
    const std::size_t rows = w.wq.block_rows();
    const std::size_t qkv_cols = 3 * in.heads_kept * hb;
    const std::size_t present_qkv = w.wq.present_blocks() +
                                    w.wk.present_blocks() +
                                    w.wv.present_blocks();
    in.alpha = qkv_cols ? double(present_qkv) / double(qkv_cols * rows) : 0.0;
    const std::size_t proj_rows = in.heads_kept * hb;
    in.alpha_proj = proj_rows ? double(w.wproj.present_blocks()) /
                                    double(w.wproj.block_cols() * proj_rows)
                              : 0.0;
    n = in.tokens_out;
    layers.push_back(in);
  }
  return layers;
}

int cmd_gen(const std::string& preset, const std::string& config_path,
            std::uint64_t seed, std::size_t block, double keep_rate,
            double bias_scale, const std::string& out_dir) {
  vitsim::ModelConfig cfg = config_path.empty()
                                ? preset_config(preset)
                                : vitsim::load_config(config_path);
  if (block) cfg.block = block;
  cfg.token_keep_rate = keep_rate;
  cfg.validate();
  auto weights = vitsim::generate_model(cfg, seed, 0.02, bias_scale);
  auto scores = vitsim::generate_scores(cfg, seed);
  vitsim::save_model(out_dir, cfg, weights, &scores);
  log(LogLevel::kInfo, "wrote model to " + out_dir);
  std::cout << json{{"out", out_dir},
                    {"layers", cfg.layers},
                    {"dim", cfg.dim},
                    {"tokens", cfg.tokens},
                    {"block", cfg.block},
                    {"seed", seed}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_prune(const ModelArgs& model, double keep_rate,
              const std::string& out_dir,
              const std::optional<std::string>& report_out) {
  auto cfg = model.load_cfg();
  auto container = vitsim::TensorContainer::read(model.weights_path);
  auto weights = vitsim::unpack_model(container, cfg);
  auto scores = vitsim::unpack_scores(container, cfg);

  auto baseline = prune_model(weights, cfg, scores, 1.0);
  auto [pruned, report] = prune_model(weights, cfg, scores, keep_rate);
  vitsim::save_model(out_dir, cfg, pruned);

  // header-only mask export in the container's sparse layout
  vitsim::TensorContainer masks;
  for (std::size_t e = 0; e < pruned.encoders.size(); ++e) {
    const auto p = "masks/enc" + std::to_string(e) + "/";
    const auto& w = pruned.encoders[e];
    masks.add(p + "wq", vitsim::mask_to_sparse(vitsim::mask_of(w.wq)));
    masks.add(p + "wk", vitsim::mask_to_sparse(vitsim::mask_of(w.wk)));
    masks.add(p + "wv", vitsim::mask_to_sparse(vitsim::mask_of(w.wv)));
    masks.add(p + "wproj", vitsim::mask_to_sparse(vitsim::mask_of(w.wproj)));
  }
  masks.write(fs::path(out_dir) / "masks.vsbm");

  json j = prune_report_json(report, keep_rate, cfg.block,
                             baseline.second.param_count);
  vitsim::save_json(j, fs::path(out_dir) / "prune_report.json");
  if (report_out) vitsim::save_json(j, *report_out);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_infer(const ModelArgs& model, const std::optional<std::string>& input,
              std::uint64_t seed, std::optional<double> keep_rate,
              const std::optional<std::string>& out) {
  auto cfg = model.load_cfg();
  if (keep_rate) cfg.token_keep_rate = *keep_rate;
  cfg.validate();
  auto weights = load_weights(model.weights_path, cfg);
  auto image = load_or_make_image(input, cfg, seed);
  auto res = vitsim::model_forward(image, weights, cfg);
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < res.logits.size(); ++i)
    if (res.logits[i] > res.logits[argmax]) argmax = i;
  write_json_out(json{{"logits", res.logits},
                      {"argmax", argmax},
                      {"token_counts", res.token_counts}},
                 out);
  return 0;
}

int cmd_simulate(const ModelArgs& model,
                 const std::optional<std::string>& hw_path,
                 const std::optional<std::string>& input, std::uint64_t seed,
                 std::optional<double> keep_rate,
                 const std::optional<std::string>& out) {
  auto cfg = model.load_cfg();
  if (keep_rate) cfg.token_keep_rate = *keep_rate;
  cfg.validate();
  vitsim::HardwareConfig hw =
      hw_path ? vitsim::load_hw_config(*hw_path) : vitsim::HardwareConfig{};
  auto weights = load_weights(model.weights_path, cfg);
  auto image = load_or_make_image(input, cfg, seed);
  auto report = vitsim::simulate_model(image, weights, cfg, hw);
  log(LogLevel::kDebug,
      "total cycles " + std::to_string(report.total_cycles));

  // analytic cycle composition over the measured per-layer sparsity; exact
  // for uniform column densities, an estimate otherwise
  auto layers = measured_layer_inputs(weights, cfg);
  auto predicted = vitsim::predict_model_cycles(layers, cfg, hw);
  json j = vitsim::sim_report_to_json(report, hw);
  j["analytic_cycles"] = vitsim::stage_cycles_to_json(predicted);
  j["analytic_cycles"]["total"] = predicted.total();
  write_json_out(j, out);
  return 0;
}

int cmd_model(const std::string& config_path, std::optional<double> rb,
              std::optional<double> rt,
              const std::optional<std::string>& ratios_path,
              const std::optional<std::string>& out) {
  auto cfg = vitsim::load_config(config_path);
  if (rt) cfg.token_keep_rate = *rt;
  cfg.validate();

  vitsim::ComplexityInputs in;
  in.tokens = cfg.tokens;
  in.dim = cfg.dim;
  in.head_dim = cfg.head_dim;
  in.mlp_dim = cfg.mlp_dim;
  in.heads = cfg.heads;
  in.heads_kept = cfg.heads;
  in.alpha = in.alpha_proj = in.alpha_mlp = rb.value_or(1.0);
  if (ratios_path) {
    std::ifstream is(*ratios_path);
    if (!is)
      throw std::runtime_error("cannot open ratios: " + *ratios_path);
    json j;
    is >> j;
    in.alpha = j.value("alpha", in.alpha);
    in.alpha_proj = j.value("alpha_proj", in.alpha_proj);
    in.alpha_mlp = j.value("alpha_mlp", in.alpha_mlp);
    in.heads_kept = j.value("heads_kept", in.heads_kept);
  }

  auto tdm = vitsim::tdm_layer_set(cfg.tdm_layers, cfg.layers);
  auto trajectory = vitsim::token_trajectory(cfg.tokens, cfg.layers,
                                             cfg.tdm_layers,
                                             cfg.token_keep_rate);
  json encoders = json::array();
  double model_total = 0.0;
  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    auto li = in;
    li.tokens = trajectory[l - 1];
    li.tokens_kept = trajectory[l];
    li.token_drop = std::find(tdm.begin(), tdm.end(), l) != tdm.end();
    auto c = vitsim::complexity_pruned(li);
    model_total += c.total();
    encoders.push_back(vitsim::complexity_to_json(c));
  }

  vitsim::ComplexityInputs base = in;
  base.alpha = base.alpha_proj = base.alpha_mlp = 1.0;
  base.heads_kept = cfg.heads;
  const double baseline_total =
      double(cfg.layers) * vitsim::complexity_unpruned(base).total();

  json j{{"encoders", encoders},
         {"model_total", model_total},
         {"baseline_model_total", baseline_total},
         {"compression_ratio", baseline_total / model_total},
         {"embedding_macs", vitsim::embedding_macs(cfg)},
         {"classifier_macs", vitsim::classifier_macs(cfg)},
         {"alpha", in.alpha},
         {"alpha_mlp", in.alpha_mlp},
         {"token_keep_rate", cfg.token_keep_rate},
         {"token_counts", trajectory}};
  write_json_out(j, out);
  return 0;
}

int cmd_sweep(const ModelArgs& model, const std::optional<std::string>& hw_path,
              std::vector<double> rb_list, std::vector<double> rt_list,
              std::uint64_t seed, const std::string& out_csv) {
  auto cfg = model.load_cfg();
  vitsim::HardwareConfig hw =
      hw_path ? vitsim::load_hw_config(*hw_path) : vitsim::HardwareConfig{};
  auto container = vitsim::TensorContainer::read(model.weights_path);
  auto weights = vitsim::unpack_model(container, cfg);
  auto scores = vitsim::unpack_scores(container, cfg);
  auto image = load_or_make_image(std::nullopt, cfg, seed);

  if (rb_list.empty()) rb_list = {1.0, 0.7, 0.5};
  if (rt_list.empty()) rt_list = {1.0, 0.9, 0.7, 0.5};

  std::ofstream os(out_csv);
  if (!os) throw std::runtime_error("cannot open for writing: " + out_csv);
  os << "rb,rt,head_retained_ratio,alpha,alpha_proj,alpha_mlp,param_count,"
        "macs,total_cycles,latency_ms,utilization\n";
  for (double rb : rb_list) {
    auto [pruned, report] = prune_model(weights, cfg, scores, rb);
    for (double rt : rt_list) {
      auto run_cfg = cfg;
      run_cfg.token_keep_rate = rt;
      auto sim = vitsim::simulate_model(image, pruned, run_cfg, hw);
      os << rb << ',' << rt << ',' << report.head_retained_ratio << ','
         << report.alpha << ',' << report.alpha_proj << ','
         << report.alpha_mlp << ',' << report.param_count << ','
         << sim.macs.total() << ',' << sim.total_cycles << ','
         << sim.latency_ms(hw) << ',' << sim.utilization << "\n";
      log(LogLevel::kInfo, "swept rb=" + std::to_string(rb) +
                               " rt=" + std::to_string(rt));
    }
  }
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + out_csv);
  std::cout << json{{"out", out_csv},
                    {"rows", rb_list.size() * rt_list.size()}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"block-pruned ViT reference engine and accelerator simulator"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a seeded synthetic model");
  std::string gen_preset = "deit-small", gen_config, gen_out = "model";
  std::uint64_t gen_seed = 0;
  std::size_t gen_block = 0;
  double gen_rt = 1.0, gen_bias = 0.0;
  gen->add_option("--preset", gen_preset, "deit-small or tiny");
  gen->add_option("--config", gen_config, "config JSON instead of a preset");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--block", gen_block, "override the block size");
  gen->add_option("--rt", gen_rt, "token keep rate stored in the config");
  gen->add_option("--bias-scale", gen_bias, "uniform bias magnitude");
  gen->add_option("--out", gen_out, "output directory")->required();

  // prune
  auto* prune = app.add_subcommand("prune", "static block-weight pruning");
  ModelArgs prune_model_args;
  prune_model_args.attach(prune);
  double prune_rb = 1.0;
  std::string prune_out = "pruned";
  std::optional<std::string> prune_report_out;
  prune->add_option("--rb", prune_rb, "weight keep rate in (0,1]")
      ->required();
  prune->add_option("--out", prune_out, "output directory")->required();
  prune->add_option("--report", prune_report_out, "extra report path");

  // infer
  auto* infer = app.add_subcommand("infer", "reference inference");
  ModelArgs infer_model;
  infer_model.attach(infer);
  std::optional<std::string> infer_input, infer_out;
  std::optional<double> infer_rt;
  std::uint64_t infer_seed = 0;
  infer->add_option("--input", infer_input,
                    "input tensor container with an 'image' tensor");
  infer->add_option("--seed", infer_seed, "seed for a random input");
  infer->add_option("--rt", infer_rt, "override the token keep rate");
  infer->add_option("--out", infer_out, "logits JSON path (stdout if absent)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "accelerator simulation");
  ModelArgs sim_model;
  sim_model.attach(sim);
  std::optional<std::string> sim_hw, sim_input, sim_out;
  std::optional<double> sim_rt;
  std::uint64_t sim_seed = 0;
  sim->add_option("--hw", sim_hw, "hardware config JSON");
  sim->add_option("--input", sim_input, "input tensor container");
  sim->add_option("--seed", sim_seed, "seed for a random input");
  sim->add_option("--rt", sim_rt, "override the token keep rate");
  sim->add_option("--out", sim_out, "report JSON path (stdout if absent)");

  // model
  auto* mdl = app.add_subcommand("model", "analytical complexity report");
  std::string mdl_config;
  std::optional<double> mdl_rb, mdl_rt;
  std::optional<std::string> mdl_ratios, mdl_out;
  mdl->add_option("--config", mdl_config, "model config JSON")->required();
  mdl->add_option("--rb", mdl_rb, "weight keep rate for the ratio defaults");
  mdl->add_option("--rt", mdl_rt, "token keep rate");
  mdl->add_option("--ratios", mdl_ratios,
                  "JSON with measured alpha/alpha_proj/alpha_mlp/heads_kept");
  mdl->add_option("--out", mdl_out, "report JSON path (stdout if absent)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "prune/simulate grid to CSV");
  ModelArgs sweep_model;
  sweep_model.attach(sweep);
  std::optional<std::string> sweep_hw;
  std::vector<double> sweep_rb, sweep_rt;
  std::uint64_t sweep_seed = 0;
  std::string sweep_out = "sweep.csv";
  sweep->add_option("--hw", sweep_hw, "hardware config JSON");
  sweep->add_option("--rb", sweep_rb, "weight keep rates");
  sweep->add_option("--rt", sweep_rt, "token keep rates");
  sweep->add_option("--seed", sweep_seed, "seed for the input image");
  sweep->add_option("--out", sweep_out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen(gen_preset, gen_config, gen_seed, gen_block, gen_rt,
                     gen_bias, gen_out);
    if (prune->parsed())
      return cmd_prune(prune_model_args, prune_rb, prune_out,
                       prune_report_out);
    if (infer->parsed())
      return cmd_infer(infer_model, infer_input, infer_seed, infer_rt,
                       infer_out);
    if (sim->parsed())
      return cmd_simulate(sim_model, sim_hw, sim_input, sim_seed, sim_rt,
                          sim_out);
    if (mdl->parsed())
      return cmd_model(mdl_config, mdl_rb, mdl_rt, mdl_ratios, mdl_out);
    if (sweep->parsed())
      return cmd_sweep(sweep_model, sweep_hw, sweep_rb, sweep_rt, sweep_seed,
                       sweep_out);
  } catch (const vitsim::internal_error& e) {
    log(LogLevel::kError, e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    log(LogLevel::kError, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(LogLevel::kError, e.what());
    return 2;
  }
  return 0;
}
