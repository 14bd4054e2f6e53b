#include "asr/model.hpp"

#include "asr/rng.hpp"

namespace asr {

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "baseline") return PipelineMode::baseline;
  if (s == "reconst_only") return PipelineMode::reconst_only;
  if (s == "reconst_span") return PipelineMode::reconst_span;
  if (s == "full_asr") return PipelineMode::full_asr;
  throw ConfigError("unknown mode: " + s);
}

std::string to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::baseline: return "baseline";
    case PipelineMode::reconst_only: return "reconst_only";
    case PipelineMode::reconst_span: return "reconst_span";
    case PipelineMode::full_asr: return "full_asr";
  }
  throw ConfigError("unknown mode");
}

BasisMode basis_mode_from_string(const std::string& s) {
  if (s == "self") return BasisMode::self_basis;
  if (s == "support") return BasisMode::support_basis;
  throw ConfigError("unknown basis_mode: " + s);
}

std::string to_string(BasisMode m) {
  return m == BasisMode::self_basis ? "self" : "support";
}

void TrainConfig::validate() const {
  if (b < 1 || d < 1 || stem_channels < 1)
    throw ConfigError("b, d and stem_channels must be positive");
  if (image_size < 32 || image_size % 4 != 0)
    throw ConfigError("image_size must be >= 32 and a multiple of 4");
  if (k_shot < 1) throw ConfigError("k_shot must be >= 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
  if (poly_power < 0) throw ConfigError("poly_power must be nonnegative");
  if (alpha < 0 || beta < 0 || gamma < 0)
    throw ConfigError("loss weights must be nonnegative");
  if (tau < 0 || tau > 1) throw ConfigError("tau must lie in [0,1]");
  if (n_base < 2) throw ConfigError("n_base must be >= 2");
  if (n_base >= n_classes) throw ConfigError("n_base must be smaller than n_classes");
  if (max_objects_per_query < 1)
    throw ConfigError("max_objects_per_query must be >= 1");
  if (b != n_base)
    throw ConfigError("b must equal n_base (one channel group per base class)");
}

DatasetConfig TrainConfig::dataset_config() const {
  return DatasetConfig{n_classes, n_base, image_size, max_objects_per_query, seed};
}

EncoderConfig TrainConfig::encoder_config() const {
  return EncoderConfig{b, d, stem_channels};
}

LossWeights TrainConfig::loss_weights() const {
  return LossWeights{alpha, beta, gamma, tau, steps};
}

std::vector<NamedTensor> ModelParams::named() const {
  return {
      {"enc.stem1.kernel", encoder.stem1_kernel},
      {"enc.stem1.bias", encoder.stem1_bias},
      {"enc.stem2.kernel", encoder.stem2_kernel},
      {"enc.stem2.bias", encoder.stem2_bias},
      {"enc.pyramid1.kernel", encoder.pyramid1_kernel},
      {"enc.pyramid1.bias", encoder.pyramid1_bias},
      {"enc.pyramid2.kernel", encoder.pyramid2_kernel},
      {"enc.pyramid2.bias", encoder.pyramid2_bias},
      {"enc.merge.kernel", encoder.merge_kernel},
      {"enc.merge.bias", encoder.merge_bias},
      {"dec.conv1.kernel", decoder.conv1_kernel},
      {"dec.conv1.bias", decoder.conv1_bias},
      {"dec.conv2.kernel", decoder.conv2_kernel},
      {"dec.conv2.bias", decoder.conv2_bias},
      {"dec.head.kernel", decoder.head_kernel},
      {"dec.head.bias", decoder.head_bias},
  };
}

void ModelParams::zero_grads() {
  for (auto& nt : named()) nt.tensor.zero_grad();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : named()) n += nt.tensor.size();
  return n;
}

int decoder_in_channels(const TrainConfig& cfg) {
  switch (cfg.mode) {
    case PipelineMode::baseline:
      return 2 * cfg.b * cfg.d;
    case PipelineMode::reconst_only:
    case PipelineMode::reconst_span:
      return cfg.d;
    case PipelineMode::full_asr:
      switch (cfg.filter_strategy) {
        case FilterStrategy::projection:
        case FilterStrategy::none:
          return cfg.d;
        case FilterStrategy::cosine:
          return 1;
        case FilterStrategy::concat:
          return 2 * cfg.d;
      }
  }
  throw ConfigError("decoder_in_channels: invalid mode/strategy");
}

ModelParams init_params(const TrainConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.encoder = init_encoder_params(cfg.encoder_config(), sub_seed(cfg.seed, 0x11));
  // decoder width follows the stem so desk-scale models stay small
  p.decoder = init_decoder_params(decoder_in_channels(cfg), cfg.stem_channels,
                                  sub_seed(cfg.seed, 0x22));
  return p;
}

SupportBranch support_forward(const ModelParams& params, const TrainConfig& cfg,
                              const std::vector<std::pair<Tensor, Tensor>>& support) {
  if (support.empty()) throw ConfigError("support_forward: empty support set");
  const EncoderConfig ec = cfg.encoder_config();
  SupportBranch branch;

  std::vector<Tensor> pooled;
  for (const auto& [image, mask] : support) {
    GroupedFeatureMap features = encode(image, params.encoder, ec);
    GroupedFeatureMap masked = mask_features(features, mask);
    SemanticVector v = semantic_vector(masked);
    branch.shot_weights.push_back(support_weights(v));
    pooled.push_back(v.values);
    branch.shot_vectors.push_back(std::move(v));
  }

  Tensor mean_vec = pooled.front();
  for (std::size_t i = 1; i < pooled.size(); ++i) mean_vec = add(mean_vec, pooled[i]);
  mean_vec = mul(mean_vec, 1.0 / static_cast<double>(pooled.size()));
  branch.baseline_vector = mean_vec;

  // Eq.-1 reconstruction is built only where the pipeline consumes it (the
  // filtering step); a dead channel group then only faults runs that must
  // actually project onto the reconstructed vector.
  if (cfg.mode == PipelineMode::full_asr && cfg.filter_strategy != FilterStrategy::none) {
    std::vector<ClassVector> per_shot;
    per_shot.reserve(branch.shot_vectors.size());
    for (const auto& v : branch.shot_vectors) per_shot.push_back(reconstruct_support(v));
    branch.recon = kshot_aggregate(per_shot);
    branch.has_recon = true;
  }
  if (cfg.mode != PipelineMode::baseline && cfg.basis_mode == BasisMode::support_basis) {
    SemanticVector mean_sem{cfg.b, cfg.d, mean_vec};
    branch.support_basis = basis_set(mean_sem);
    branch.has_basis = true;
  }
  return branch;
}

QueryBranch query_forward(const ModelParams& params, const TrainConfig& cfg,
                          const Tensor& image) {
  GroupedFeatureMap features = encode(image, params.encoder, cfg.encoder_config());
  SemanticVector v = semantic_vector(features);
  return QueryBranch{std::move(features), std::move(v)};
}

Tensor decode_logits(const ModelParams& params, const TrainConfig& cfg,
                     const QueryBranch& query, const SupportBranch& support) {
  if (cfg.mode == PipelineMode::baseline) {
    Tensor fused = broadcast_concat(query.features.values, support.baseline_vector);
    return decode(GroupedFeatureMap{1, 2 * cfg.b * cfg.d, fused}, params.decoder);
  }

  GroupedFeatureMap recon_query = reconstruct_query(
      query.features, cfg.basis_mode,
      support.has_basis ? &support.support_basis : nullptr);

  if (cfg.mode == PipelineMode::full_asr && cfg.filter_strategy != FilterStrategy::none) {
    if (!support.has_recon)
      throw ConfigError("decode_logits: filtering requires a reconstructed support vector");
    return decode(fuse(cfg.filter_strategy, recon_query, support.recon), params.decoder);
  }
  return decode(recon_query, params.decoder);
}

EpisodeForward forward_episode(const ModelParams& params, const TrainConfig& cfg,
                               const Episode& episode) {
  EpisodeForward fwd{Tensor{}, support_forward(params, cfg, episode.support),
                     query_forward(params, cfg, episode.query_image)};
  fwd.logits = decode_logits(params, cfg, fwd.query, fwd.support);
  return fwd;
}

}  // namespace asr
