#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asr/conv_kernels.hpp"
#include "asr/harness.hpp"
#include "asr/rng.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

asr::TrainConfig load_config(const std::string& path) {
  return asr::load_config_file(path);
}

std::vector<asr::NamedTensor> named_params(asr::ModelParams& params) {
  return params.named();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

int run_gen_data(const std::string& config_path, const std::string& out_dir,
                 int episodes, const std::string& split_arg) {
  asr::TrainConfig cfg = load_config(config_path);
  asr::Dataset ds = asr::make_dataset(cfg.dataset_config());
  std::filesystem::create_directories(out_dir);

  nlohmann::json index;
  index["config"] = asr::config_to_json(cfg);
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : ds.specs) {
    nlohmann::json e;
    e["class_id"] = s.class_id;
    e["shape"] = static_cast<int>(s.shape);
    e["pattern"] = static_cast<int>(s.pattern);
    e["color"] = s.color;
    specs.push_back(e);
  }
  index["class_specs"] = specs;
  index["base_ids"] = ds.base_ids;
  index["novel_ids"] = ds.novel_ids;
  nlohmann::json eps = nlohmann::json::array();

  std::vector<asr::Split> splits;
  if (split_arg == "base" || split_arg == "both") splits.push_back(asr::Split::base);
  if (split_arg == "novel" || split_arg == "both") splits.push_back(asr::Split::novel);
  if (splits.empty()) throw asr::ConfigError("gen-data: split must be base, novel or both");

  for (asr::Split split : splits) {
    const std::string tag = split == asr::Split::base ? "base" : "novel";
    for (int i = 0; i < episodes; ++i) {
      asr::Episode ep = asr::sample_episode(ds, split, cfg.k_shot,
                                            static_cast<std::uint64_t>(i));
      const std::string dir = out_dir + "/episode_" + tag + "_" + std::to_string(i);
      std::filesystem::create_directories(dir);
      for (std::size_t s = 0; s < ep.support.size(); ++s) {
        asr::write_ppm(dir + "/support_" + std::to_string(s) + ".ppm", ep.support[s].first);
        asr::write_pgm(dir + "/support_" + std::to_string(s) + "_mask.pgm",
                       ep.support[s].second);
      }
      asr::write_ppm(dir + "/query.ppm", ep.query_image);
      asr::write_pgm(dir + "/query_mask.pgm", ep.query_mask);
      nlohmann::json e;
      e["split"] = tag;
      e["index"] = i;
      e["class_id"] = ep.class_id;
      e["distractor_ids"] = ep.distractor_ids;
      e["k"] = cfg.k_shot;
      eps.push_back(e);
    }
  }
  index["episodes"] = eps;
  write_text_file(out_dir + "/index.json", index.dump(2) + "\n");
  std::cout << "wrote " << eps.size() << " episodes to " << out_dir << "\n";
  return kExitOk;
}

int run_train(const std::string& config_path, const std::string& out_path) {
  asr::TrainConfig cfg = load_config(config_path);
  asr::Dataset ds = asr::make_dataset(cfg.dataset_config());
  asr::TrainResult result = asr::train(cfg, ds);
  auto named = named_params(result.params);
  asr::save_checkpoint(out_path, named, asr::downsample_curve(result.loss_log));
  const double first = result.loss_log.empty() ? 0.0 : result.loss_log.front();
  const double last = result.loss_log.empty() ? 0.0 : result.loss_log.back();
  std::cout << "trained " << cfg.steps << " steps (" << to_string(cfg.mode)
            << "), loss " << first << " -> " << last << ", checkpoint " << out_path
            << "\n";
  return kExitOk;
}

int run_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& split_arg, int episodes, const std::string& out_path) {
  asr::TrainConfig cfg = load_config(config_path);
  asr::Dataset ds = asr::make_dataset(cfg.dataset_config());
  asr::ModelParams params = asr::init_params(cfg);
  auto named = named_params(params);
  std::vector<double> curve = asr::load_checkpoint(ckpt_path, named);
  asr::Split split;
  if (split_arg == "base") split = asr::Split::base;
  else if (split_arg == "novel") split = asr::Split::novel;
  else throw asr::ConfigError("eval: split must be base or novel");
  asr::Report report = asr::evaluate(params, cfg, ds, split, episodes,
                                     asr::eval_seed(cfg, split), curve);
  write_text_file(out_path, asr::report_to_json(report).dump(2) + "\n");
  std::cout << "split=" << split_arg << " episodes=" << episodes
            << " miou=" << report.iou.miou << " fb_iou=" << report.iou.fb_iou << "\n";
  return kExitOk;
}

int run_ablate(const std::string& config_path, const std::string& out_path,
               int episodes) {
  asr::TrainConfig cfg = load_config(config_path);
  asr::Dataset ds = asr::make_dataset(cfg.dataset_config());
  auto rows = asr::ablate(cfg, ds, episodes);
  std::ostringstream csv;
  csv << "mode,filter_strategy,novel_miou\n";
  for (const auto& r : rows)
    csv << r.mode << "," << r.strategy << "," << r.novel_miou << "\n";
  write_text_file(out_path, csv.str());
  std::cout << csv.str();
  return kExitOk;
}

int run_sweep_d(const std::string& config_path, const std::string& d_arg,
                const std::string& out_path, int episodes) {
  asr::TrainConfig cfg = load_config(config_path);
  asr::Dataset ds = asr::make_dataset(cfg.dataset_config());
  std::vector<int> d_values;
  std::stringstream ss(d_arg);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) d_values.push_back(std::stoi(item));
  if (d_values.empty()) throw asr::ConfigError("sweep-d: no d values given");
  auto rows = asr::sweep_d(cfg, d_values, ds, episodes);
  std::ostringstream csv;
  csv << "d,novel_miou\n";
  for (const auto& r : rows) csv << r.d << "," << r.novel_miou << "\n";
  write_text_file(out_path, csv.str());
  std::cout << csv.str();
  return kExitOk;
}

int run_analyze(int verify_n, const std::string& report_path) {
  if (verify_n > 0) {
    asr::IdentityCheck check = asr::verify_identity(verify_n);
    std::cout << "samples: " << verify_n << "\n"
              << "max |<u1,u2> - closed form|: " << check.max_abs_error << "\n"
              << "max |cos(u1,u2) - closed form| (normalization gap): "
              << check.max_normalized_gap << "\n";
    return kExitOk;
  }
  std::ifstream f(report_path);
  if (!f) throw asr::ConfigError("analyze: cannot open " + report_path);
  nlohmann::json j = nlohmann::json::parse(f);
  std::cout << "miou: " << j.value("miou", 0.0) << "\n"
            << "fb_iou: " << j.value("fb_iou", 0.0) << "\n";
  if (j.contains("mean_offdiag_cos") && !j["mean_offdiag_cos"].is_null())
    std::cout << "mean off-diagonal |cos|: " << j["mean_offdiag_cos"].get<double>() << "\n";
  if (j.contains("per_class_iou"))
    for (const auto& [cls, v] : j["per_class_iou"].items())
      std::cout << "iou[class " << cls << "]: " << v.get<double>() << "\n";
  if (j.contains("sparsity_entropy"))
    for (const auto& [cls, v] : j["sparsity_entropy"].items())
      std::cout << "sparsity entropy[class " << cls << "]: " << v.get<double>() << "\n";
  if (j.contains("confusion")) {
    const auto& M = j["confusion"];
    std::int64_t diag = 0, off = 0;
    for (std::size_t r = 0; r < M.size(); ++r)
      for (std::size_t c = 0; c < M[r].size(); ++c) {
        const std::int64_t v = M[r][c].get<std::int64_t>();
        if (r == c) diag += v; else off += v;
      }
    std::cout << "confusion: " << diag << " pixels on-diagonal, " << off
              << " off-diagonal\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anti-aliasing semantic reconstruction on a synthetic episodic benchmark"};
  app.require_subcommand(1);

  std::string kernels = "parallel";
  app.add_option("--kernels", kernels, "conv kernel dispatch: serial or parallel")
      ->check(CLI::IsMember({"serial", "parallel"}));

  std::string config_path, out_path, ckpt_path, split = "novel", d_arg, report_path;
  int episodes = 200;
  int gen_episodes = 8;
  std::string gen_split = "both";
  int verify_n = 0;

  auto* gen = app.add_subcommand("gen-data", "export episodes as PPM/PGM plus an index");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_path)->required();
  gen->add_option("--episodes", gen_episodes, "episodes per split");
  gen->add_option("--split", gen_split)->check(CLI::IsMember({"base", "novel", "both"}));

  auto* tr = app.add_subcommand("train", "train and write a checkpoint");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--out", out_path)->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint and write a JSON report");
  ev->add_option("--config", config_path)->required();
  ev->add_option("--ckpt", ckpt_path)->required();
  ev->add_option("--split", split)->check(CLI::IsMember({"base", "novel"}));
  ev->add_option("--episodes", episodes);
  ev->add_option("--out", out_path)->required();

  auto* ab = app.add_subcommand("ablate", "train/evaluate the module and filtering ablation");
  ab->add_option("--config", config_path)->required();
  ab->add_option("--out", out_path)->required();
  ab->add_option("--episodes", episodes);

  auto* sw = app.add_subcommand("sweep-d", "retrain over channel widths D");
  sw->add_option("--config", config_path)->required();
  sw->add_option("--d", d_arg, "comma-separated D values")->required();
  sw->add_option("--out", out_path)->required();
  sw->add_option("--episodes", episodes);

  auto* an = app.add_subcommand("analyze", "identity verification / report summary");
  an->add_option("--verify-identity", verify_n, "sample count for the closed-form check");
  an->add_option("--report", report_path, "report JSON to summarize");

  CLI11_PARSE(app, argc, argv);

  asr::kernels::set_mode(kernels == "serial" ? asr::kernels::Mode::serial
                                             : asr::kernels::Mode::parallel);

  try {
    if (gen->parsed()) return run_gen_data(config_path, out_path, gen_episodes, gen_split);
    if (tr->parsed()) return run_train(config_path, out_path);
    if (ev->parsed()) return run_eval(config_path, ckpt_path, split, episodes, out_path);
    if (ab->parsed()) return run_ablate(config_path, out_path, episodes);
    if (sw->parsed()) return run_sweep_d(config_path, d_arg, out_path, episodes);
    if (an->parsed()) {
      if (verify_n <= 0 && report_path.empty())
        throw asr::ConfigError("analyze: pass --verify-identity N or --report <file>");
      return run_analyze(verify_n, report_path);
    }
  } catch (const asr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const asr::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const asr::NonFiniteError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
