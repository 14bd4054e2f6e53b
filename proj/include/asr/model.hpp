#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asr/checkpoint.hpp"
#include "asr/encoder.hpp"
#include "asr/episodes.hpp"
#include "asr/filtering.hpp"
#include "asr/losses.hpp"

namespace asr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The four pipeline variants of the module ablation. baseline compares the
// masked-GAP support vector against raw query features via concatenation;
// reconst_only adds basis reconstruction of both branches; reconst_span adds
// the decoupling/contrastive losses; full_asr adds projection filtering.
enum class PipelineMode { baseline, reconst_only, reconst_span, full_asr };

PipelineMode pipeline_mode_from_string(const std::string& s);
std::string to_string(PipelineMode m);

BasisMode basis_mode_from_string(const std::string& s);
std::string to_string(BasisMode m);

struct TrainConfig {
  int b = 8;
  int d = 8;
  int stem_channels = 16;
  int image_size = 64;
  int k_shot = 1;
  int steps = 2000;
  double lr0 = 0.05;
  double poly_power = 0.9;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.1;
  double tau = 0.5;
  FilterStrategy filter_strategy = FilterStrategy::projection;
  BasisMode basis_mode = BasisMode::self_basis;
  PipelineMode mode = PipelineMode::full_asr;
  int n_classes = 12;
  int n_base = 8;
  int max_objects_per_query = 3;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  DatasetConfig dataset_config() const;
  EncoderConfig encoder_config() const;
  LossWeights loss_weights() const;
};

struct ModelParams {
  EncoderParams encoder;
  DecoderParams decoder;

  std::vector<NamedTensor> named() const;  // stable order for SGD/checkpoints
  void zero_grads();
  std::size_t parameter_count() const;
};

// Channel count entering the decoder for a given mode/strategy.
int decoder_in_channels(const TrainConfig& cfg);

// Encoder and decoder parameters in one call; deterministic in cfg.seed.
ModelParams init_params(const TrainConfig& cfg);

struct SupportBranch {
  std::vector<SemanticVector> shot_vectors;   // masked-GAP vector per shot
  std::vector<SupportWeights> shot_weights;   // softmax of sub-vector norms
  Tensor baseline_vector;                     // mean masked-GAP vector (B*D)
  ClassVector recon;                          // k-shot aggregated Eq.-style vector
  bool has_recon = false;
  BasisSet support_basis;                     // basis of the mean vector
  bool has_basis = false;
};

SupportBranch support_forward(const ModelParams& params, const TrainConfig& cfg,
                              const std::vector<std::pair<Tensor, Tensor>>& support);

struct QueryBranch {
  GroupedFeatureMap features;  // B groups of dim D
  SemanticVector vector;       // pooled, for the contrastive loss
};

QueryBranch query_forward(const ModelParams& params, const TrainConfig& cfg,
                          const Tensor& image);

// Fuses the two branches per the configured mode and decodes to logits at
// input resolution.
Tensor decode_logits(const ModelParams& params, const TrainConfig& cfg,
                     const QueryBranch& query, const SupportBranch& support);

struct EpisodeForward {
  Tensor logits;
  SupportBranch support;
  QueryBranch query;
};

EpisodeForward forward_episode(const ModelParams& params, const TrainConfig& cfg,
                               const Episode& episode);

}  // namespace asr
