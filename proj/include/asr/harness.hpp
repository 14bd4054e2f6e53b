#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asr/analysis.hpp"
#include "asr/model.hpp"

namespace asr {

/// Training aborted because the loss (or an intermediate value) left the
/// finite range; carries the offending step for diagnosis.
class NumericalError : public TensorError {
 public:
  NumericalError(int step, const std::string& detail)
      : TensorError("non-finite loss at step " + std::to_string(step) + ": " + detail),
        step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_log;  // one entry per step
};

// Episodic SGD with the poly schedule lr0*(1 - t/steps)^power. Deterministic
// in (config, seed): same config gives bitwise-identical parameters.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset);

struct Report {
  IoUReport iou;
  std::vector<std::vector<std::int64_t>> confusion;
  std::optional<double> mean_offdiag_cos;
  std::map<int, double> sparsity_entropy;
  std::vector<double> loss_curve;
  nlohmann::json config_echo;
  double wall_time_s = 0.0;
};

// Test hook: per-candidate foreground probability map for a query, replacing
// the model pipeline (used to inject oracle predictions).
using FgProbFn = std::function<Tensor(const Episode& episode, int candidate_class)>;

// Runs n deterministic episodes of the split, aggregating K-shot support
// vectors by averaging, and fills every report field including the
// confusion/orthogonality/sparsity diagnostics.
Report evaluate(const ModelParams& params, const TrainConfig& cfg,
                const Dataset& dataset, Split split, int n_episodes,
                std::uint64_t seed, const std::vector<double>& loss_curve = {},
                const FgProbFn& override_fg = nullptr);

nlohmann::json report_to_json(const Report& report);
// Identical serialization with wall_time_s removed (for byte comparisons).
std::string report_to_stable_string(const Report& report);

struct AblateRow {
  std::string mode;
  std::string strategy;
  double novel_miou = 0.0;
};

// The four pipeline modes plus the filtering strategies under full_asr,
// trained and evaluated with shared seeds.
std::vector<AblateRow> ablate(const TrainConfig& cfg, const Dataset& dataset,
                              int eval_episodes = 200);

struct SweepRow {
  int d = 0;
  double novel_miou = 0.0;
};

// Retrains per channel-group width D with matched seeds.
std::vector<SweepRow> sweep_d(const TrainConfig& cfg, const std::vector<int>& d_values,
                              const Dataset& dataset, int eval_episodes = 200);

// Flat-JSON config round trip; unknown keys and wrong types are ConfigErrors.
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig load_config_file(const std::string& path);

std::vector<double> downsample_curve(const std::vector<double>& curve,
                                     std::size_t max_points = 500);

// Deterministic evaluation seed for a split, derived from the config seed.
std::uint64_t eval_seed(const TrainConfig& cfg, Split split);

}  // namespace asr
