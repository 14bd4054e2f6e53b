#include "asr/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "asr/rng.hpp"

namespace asr {

namespace {

constexpr std::uint64_t kRoleFlip = 0xf11b;
constexpr std::uint64_t kRoleRetry = 0x12e7;
constexpr std::uint64_t kRoleEvalEpisode = 0xe7a1;
constexpr std::uint64_t kRoleConfusionSupport = 0xc0f;

void check_dataset_matches(const TrainConfig& cfg, const Dataset& ds) {
  if (ds.config.n_classes != cfg.n_classes || ds.config.n_base != cfg.n_base ||
      ds.config.image_size != cfg.image_size ||
      ds.config.max_objects_per_query != cfg.max_objects_per_query ||
      ds.config.seed != cfg.seed)
    throw ConfigError("dataset does not match the training configuration");
  if (static_cast<int>(ds.base_ids.size()) != cfg.b)
    throw ConfigError("b must equal the dataset's base class count");
}

bool grouped_losses(PipelineMode mode) {
  return mode == PipelineMode::reconst_span || mode == PipelineMode::full_asr;
}

Tensor mean_of_scalars(const std::vector<Tensor>& xs) {
  Tensor acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return mul(acc, 1.0 / static_cast<double>(xs.size()));
}

void sgd_step(ModelParams& params, double lr) {
  for (auto& nt : params.named()) {
    if (!nt.tensor.has_grad()) continue;
    auto data = nt.tensor.mutable_data();
    auto grad = nt.tensor.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
  }
}

// Plain-double diagnostic of one episode's support vectors: the class's own
// direction in D-space. Base classes use their own channel group; novel
// classes use the reconstruction-weighted combination of unit sub-vectors.
// Returns false when a needed sub-vector is degenerate.
bool class_direction(const Dataset& ds, const TrainConfig& cfg, int class_id,
                     const std::vector<double>& mean_vec,
                     const std::vector<double>& mean_weights, std::vector<double>& out) {
  const int d = cfg.d;
  auto sub_norm = [&](int b) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += mean_vec[b * d + j] * mean_vec[b * d + j];
    return std::sqrt(s);
  };
  out.assign(d, 0.0);
  const bool is_base =
      std::find(ds.base_ids.begin(), ds.base_ids.end(), class_id) != ds.base_ids.end();
  if (is_base) {
    const int g = ds.group_index(class_id);
    for (int j = 0; j < d; ++j) out[j] = mean_vec[g * d + j];
    double n = 0.0;
    for (double v : out) n += v * v;
    return std::sqrt(n) >= kDegenerateNorm;
  }
  for (int b = 0; b < cfg.b; ++b) {
    const double n = sub_norm(b);
    if (n < kDegenerateNorm) return false;
    for (int j = 0; j < d; ++j) out[j] += mean_weights[b] * mean_vec[b * d + j] / n;
  }
  double n = 0.0;
  for (double v : out) n += v * v;
  return std::sqrt(n) >= kDegenerateNorm;
}

}  // namespace

std::uint64_t eval_seed(const TrainConfig& cfg, Split split) {
  return sub_seed(cfg.seed, kRoleEvalEpisode, split == Split::base ? 1 : 2);
}

TrainResult train(const TrainConfig& cfg, const Dataset& dataset) {
  cfg.validate();
  check_dataset_matches(cfg, dataset);
  ModelParams params = init_params(cfg);
  const LossWeights lw = cfg.loss_weights();

  std::vector<double> loss_log;
  loss_log.reserve(static_cast<std::size_t>(cfg.steps));

  constexpr int kMaxEpisodeAttempts = 8;
  for (int step = 0; step < cfg.steps; ++step) {
    // A support set whose masked features leave a channel group at exactly
    // zero norm has no defined basis direction (DegenerateSubvector). Such
    // episodes are a sampling pathology of small random models, so the step
    // deterministically redraws its episode a bounded number of times before
    // giving up.
    for (int attempt = 0;; ++attempt) {
      const std::uint64_t index =
          attempt == 0 ? static_cast<std::uint64_t>(step)
                       : sub_seed(cfg.seed, kRoleRetry, static_cast<std::uint64_t>(step),
                                  static_cast<std::uint64_t>(attempt));
      Episode ep = sample_episode(dataset, Split::base, cfg.k_shot, index);
      for (std::size_t shot = 0; shot < ep.support.size(); ++shot) {
        Rng flip_rng(sub_seed(cfg.seed, kRoleFlip, static_cast<std::uint64_t>(step), shot));
        if (flip_rng.coin()) {
          ep.support[shot].first = flip_horizontal(ep.support[shot].first);
          ep.support[shot].second = flip_horizontal(ep.support[shot].second);
        }
      }

      try {
        EpisodeForward fwd = forward_episode(params, cfg, ep);
        Tensor l_seg = segmentation_loss(fwd.logits, ep.query_mask);
        Tensor l_dec = Tensor::scalar(0.0);
        Tensor l_con = Tensor::scalar(0.0);
        if (grouped_losses(cfg.mode)) {
          const int group = dataset.group_index(ep.class_id);
          std::vector<Tensor> decs;
          for (const auto& w : fwd.support.shot_weights)
            decs.push_back(decoupling_loss(w.values, group));
          l_dec = mean_of_scalars(decs);
          if (contrastive_active(lw, step)) {
            std::vector<Tensor> cons;
            for (const auto& v : fwd.support.shot_vectors)
              cons.push_back(contrastive_loss(v, fwd.query.vector));
            l_con = mean_of_scalars(cons);
          }
        }
        Tensor loss = total_loss(l_dec, l_seg, l_con, lw, step);
        loss_log.push_back(loss.value());

        params.zero_grads();
        loss.backward();
        const double lr = cfg.lr0 *
                          std::pow(1.0 - static_cast<double>(step) / cfg.steps,
                                   cfg.poly_power);
        sgd_step(params, lr);
      } catch (const NonFiniteError& e) {
        throw NumericalError(step, e.what());
      } catch (const DegenerateSubvector&) {
        if (attempt + 1 >= kMaxEpisodeAttempts) throw;
        continue;
      }
      break;
    }
  }
  return TrainResult{std::move(params), std::move(loss_log)};
}

Report evaluate(const ModelParams& params, const TrainConfig& cfg,
                const Dataset& dataset, Split split, int n_episodes,
                std::uint64_t seed, const std::vector<double>& loss_curve,
                const FgProbFn& override_fg) {
  cfg.validate();
  check_dataset_matches(cfg, dataset);
  if (n_episodes < 1) throw ConfigError("evaluate: n_episodes must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();

  const std::vector<int>& candidates =
      split == Split::base ? dataset.base_ids : dataset.novel_ids;
  IoUAccumulator iou;
  ConfusionMatrix confusion(cfg.n_classes + 1);
  std::map<int, std::vector<double>> direction_sum;
  std::map<int, int> direction_count;
  std::map<int, std::vector<std::vector<double>>> weight_samples;

  const int size = cfg.image_size;
  for (int i = 0; i < n_episodes; ++i) {
    Episode ep = sample_episode(dataset, split, cfg.k_shot,
                                sub_seed(seed, static_cast<std::uint64_t>(i)));

    // Foreground probability per candidate class of the split.
    std::vector<std::vector<double>> probs;
    probs.reserve(candidates.size());
    QueryBranch query;
    bool have_query = false;
    std::vector<double> own_mean_vec, own_mean_weights;

    for (int cand : candidates) {
      Tensor prob_map;
      if (override_fg) {
        prob_map = override_fg(ep, cand);
        if (prob_map.rank() != 2 || prob_map.dim(0) != size || prob_map.dim(1) != size)
          throw ShapeError("evaluate: override probability map has wrong shape");
      } else {
        if (!have_query) {
          query = query_forward(params, cfg, ep.query_image);
          have_query = true;
        }
        // A candidate whose support set leaves a channel group degenerate has
        // no defined reconstruction; the model simply fails that run, scored
        // as an all-background prediction.
        try {
          SupportBranch sb;
          if (cand == ep.class_id) {
            sb = support_forward(params, cfg, ep.support);
            // diagnostics from the episode's own support set
            const int bd = cfg.b * cfg.d;
            own_mean_vec.assign(bd, 0.0);
            own_mean_weights.assign(cfg.b, 0.0);
            for (const auto& v : sb.shot_vectors)
              for (int j = 0; j < bd; ++j) own_mean_vec[j] += v.values.data()[j];
            for (const auto& w : sb.shot_weights)
              for (int j = 0; j < cfg.b; ++j) own_mean_weights[j] += w.values.data()[j];
            const double inv = 1.0 / static_cast<double>(sb.shot_vectors.size());
            for (double& v : own_mean_vec) v *= inv;
            for (double& v : own_mean_weights) v *= inv;
          } else {
            Episode cand_ep = sample_episode(
                dataset, split, cfg.k_shot,
                sub_seed(seed, kRoleConfusionSupport, static_cast<std::uint64_t>(i),
                         static_cast<std::uint64_t>(cand)));
            sb = support_forward(params, cfg, cand_ep.support);
          }
          Tensor logits = decode_logits(params, cfg, query, sb);
          const auto ld = logits.data();
          std::vector<double> p(static_cast<std::size_t>(size) * size);
          for (std::size_t px = 0; px < p.size(); ++px) {
            const double z0 = ld[2 * px], z1 = ld[2 * px + 1];
            const double m = std::max(z0, z1);
            const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
            p[px] = e1 / (e0 + e1);
          }
          prob_map = Tensor::from_data({size, size}, std::move(p));
        } catch (const DegenerateSubvector&) {
          prob_map = Tensor::zeros({size, size});
        }
      }
      probs.push_back(std::vector<double>(prob_map.data().begin(), prob_map.data().end()));
    }

    // Target prediction: the probability map of the episode's own class.
    std::size_t target_idx = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c)
      if (candidates[c] == ep.class_id) target_idx = c;
    std::vector<double> pred(static_cast<std::size_t>(size) * size);
    for (std::size_t px = 0; px < pred.size(); ++px)
      pred[px] = probs[target_idx][px] > 0.5 ? 1.0 : 0.0;
    Tensor pred_mask = Tensor::from_data({size, size}, std::move(pred));
    iou.add(pred_mask, ep.query_mask, ep.class_id);

    // Multi-class pixel assignment for the confusion diagnostic.
    std::vector<double> true_labels(static_cast<std::size_t>(size) * size, 0.0);
    for (const auto& [cls, mask] : ep.query_class_masks) {
      const auto md = mask.data();
      for (std::size_t px = 0; px < md.size(); ++px)
        if (md[px] == 1.0) true_labels[px] = static_cast<double>(cls);
    }
    std::vector<double> pred_labels(static_cast<std::size_t>(size) * size, 0.0);
    for (std::size_t px = 0; px < pred_labels.size(); ++px) {
      double best = 0.0;
      int best_class = 0;
      for (std::size_t c = 0; c < candidates.size(); ++c)
        if (probs[c][px] > best) {
          best = probs[c][px];
          best_class = candidates[c];
        }
      pred_labels[px] = best >= 0.5 ? static_cast<double>(best_class) : 0.0;
    }
    confusion.add(Tensor::from_data({size, size}, std::move(true_labels)),
                  Tensor::from_data({size, size}, std::move(pred_labels)));

    if (!own_mean_vec.empty()) {
      weight_samples[ep.class_id].push_back(own_mean_weights);
      std::vector<double> dir;
      if (class_direction(dataset, cfg, ep.class_id, own_mean_vec, own_mean_weights, dir)) {
        auto& acc = direction_sum[ep.class_id];
        if (acc.empty()) acc.assign(dir.size(), 0.0);
        for (std::size_t j = 0; j < dir.size(); ++j) acc[j] += dir[j];
        ++direction_count[ep.class_id];
      }
    }
  }

  Report report;
  report.iou = iou.report();
  report.confusion = confusion.counts();
  report.loss_curve = loss_curve;
  report.config_echo = config_to_json(cfg);

  std::vector<std::pair<int, std::vector<double>>> unit_dirs;
  for (auto& [cls, acc] : direction_sum) {
    double n = 0.0;
    for (double v : acc) n += v * v;
    n = std::sqrt(n);
    if (n < kDegenerateNorm) continue;
    std::vector<double> u(acc.size());
    for (std::size_t j = 0; j < acc.size(); ++j) u[j] = acc[j] / n;
    unit_dirs.emplace_back(cls, std::move(u));
  }
  if (unit_dirs.size() >= 2)
    report.mean_offdiag_cos = orthogonality_matrix(unit_dirs).mean_offdiag;

  if (!weight_samples.empty()) {
    SparsityProfile profile = sparsity_profile(weight_samples);
    report.sparsity_entropy = profile.entropy;
  }

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

nlohmann::json report_to_json(const Report& report) {
  nlohmann::json j;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, v] : report.iou.per_class) per_class[std::to_string(cls)] = v;
  j["per_class_iou"] = per_class;
  j["miou"] = report.iou.miou;
  j["fb_iou"] = report.iou.fb_iou;
  j["confusion"] = report.confusion;
  if (report.mean_offdiag_cos)
    j["mean_offdiag_cos"] = *report.mean_offdiag_cos;
  else
    j["mean_offdiag_cos"] = nullptr;
  nlohmann::json entropy = nlohmann::json::object();
  for (const auto& [cls, h] : report.sparsity_entropy) entropy[std::to_string(cls)] = h;
  j["sparsity_entropy"] = entropy;
  j["loss_curve"] = report.loss_curve;
  j["config"] = report.config_echo;
  j["wall_time_s"] = report.wall_time_s;
  return j;
}

std::string report_to_stable_string(const Report& report) {
  nlohmann::json j = report_to_json(report);
  j.erase("wall_time_s");
  return j.dump(2);
}

std::vector<AblateRow> ablate(const TrainConfig& cfg, const Dataset& dataset,
                              int eval_episodes) {
  cfg.validate();
  struct Variant {
    PipelineMode mode;
    FilterStrategy strategy;
  };
  std::vector<Variant> variants = {
      {PipelineMode::baseline, cfg.filter_strategy},
      {PipelineMode::reconst_only, cfg.filter_strategy},
      {PipelineMode::reconst_span, cfg.filter_strategy},
      {PipelineMode::full_asr, cfg.filter_strategy},
      {PipelineMode::full_asr, FilterStrategy::projection},
      {PipelineMode::full_asr, FilterStrategy::cosine},
      {PipelineMode::full_asr, FilterStrategy::concat},
  };
  std::map<std::string, double> cache;
  std::vector<AblateRow> rows;
  for (const auto& v : variants) {
    TrainConfig run = cfg;
    run.mode = v.mode;
    run.filter_strategy = v.strategy;
    const std::string key = to_string(v.mode) + "/" + to_string(v.strategy);
    if (!cache.count(key)) {
      TrainResult tr = train(run, dataset);
      Report rep = evaluate(tr.params, run, dataset, Split::novel, eval_episodes,
                            eval_seed(run, Split::novel));
      cache[key] = rep.iou.miou;
    }
    rows.push_back({to_string(v.mode), to_string(v.strategy), cache[key]});
  }
  return rows;
}

std::vector<SweepRow> sweep_d(const TrainConfig& cfg, const std::vector<int>& d_values,
                              const Dataset& dataset, int eval_episodes) {
  if (d_values.empty()) throw ConfigError("sweep_d: no d values");
  std::vector<SweepRow> rows;
  for (int d : d_values) {
    TrainConfig run = cfg;
    run.d = d;
    run.validate();
    TrainResult tr = train(run, dataset);
    Report rep = evaluate(tr.params, run, dataset, Split::novel, eval_episodes,
                          eval_seed(run, Split::novel));
    rows.push_back({d, rep.iou.miou});
  }
  return rows;
}

namespace {

template <typename T>
T get_key(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for key '") + key + "'");
  }
}

}  // namespace

TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::vector<std::string> known = {
      "b", "d", "stem_channels", "image_size", "k_shot", "steps", "lr0",
      "poly_power", "alpha", "beta", "gamma", "tau", "filter_strategy",
      "basis_mode", "mode", "n_classes", "n_base", "max_objects_per_query", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("config: unknown key '" + key + "'");
  }
  TrainConfig cfg;
  cfg.b = get_key(j, "b", cfg.b);
  cfg.d = get_key(j, "d", cfg.d);
  cfg.stem_channels = get_key(j, "stem_channels", cfg.stem_channels);
  cfg.image_size = get_key(j, "image_size", cfg.image_size);
  cfg.k_shot = get_key(j, "k_shot", cfg.k_shot);
  cfg.steps = get_key(j, "steps", cfg.steps);
  cfg.lr0 = get_key(j, "lr0", cfg.lr0);
  cfg.poly_power = get_key(j, "poly_power", cfg.poly_power);
  cfg.alpha = get_key(j, "alpha", cfg.alpha);
  cfg.beta = get_key(j, "beta", cfg.beta);
  cfg.gamma = get_key(j, "gamma", cfg.gamma);
  cfg.tau = get_key(j, "tau", cfg.tau);
  try {
    cfg.filter_strategy = filter_strategy_from_string(
        get_key<std::string>(j, "filter_strategy", to_string(cfg.filter_strategy)));
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  cfg.basis_mode =
      basis_mode_from_string(get_key<std::string>(j, "basis_mode", to_string(cfg.basis_mode)));
  cfg.mode = pipeline_mode_from_string(get_key<std::string>(j, "mode", to_string(cfg.mode)));
  cfg.n_classes = get_key(j, "n_classes", cfg.n_classes);
  cfg.n_base = get_key(j, "n_base", cfg.n_base);
  cfg.max_objects_per_query = get_key(j, "max_objects_per_query", cfg.max_objects_per_query);
  cfg.seed = get_key(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["b"] = cfg.b;
  j["d"] = cfg.d;
  j["stem_channels"] = cfg.stem_channels;
  j["image_size"] = cfg.image_size;
  j["k_shot"] = cfg.k_shot;
  j["steps"] = cfg.steps;
  j["lr0"] = cfg.lr0;
  j["poly_power"] = cfg.poly_power;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["gamma"] = cfg.gamma;
  j["tau"] = cfg.tau;
  j["filter_strategy"] = to_string(cfg.filter_strategy);
  j["basis_mode"] = to_string(cfg.basis_mode);
  j["mode"] = to_string(cfg.mode);
  j["n_classes"] = cfg.n_classes;
  j["n_base"] = cfg.n_base;
  j["max_objects_per_query"] = cfg.max_objects_per_query;
  j["seed"] = cfg.seed;
  return j;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::vector<double> downsample_curve(const std::vector<double>& curve,
                                     std::size_t max_points) {
  if (curve.size() <= max_points || max_points == 0) return curve;
  std::vector<double> out;
  const std::size_t stride = (curve.size() + max_points - 1) / max_points;
  for (std::size_t i = 0; i < curve.size(); i += stride) out.push_back(curve[i]);
  if (out.empty() || curve.back() != out.back()) out.push_back(curve.back());
  return out;
}

}  // namespace asr
