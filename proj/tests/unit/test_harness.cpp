#include <cstring>
#include <filesystem>
#include <set>

#include <doctest.h>

#include "asr/harness.hpp"

using namespace asr;

namespace {

// Tiny episodic setup that trains in well under a second per hundred steps.
TrainConfig tiny_config(std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.b = 2;
  cfg.d = 2;
  cfg.stem_channels = 4;
  cfg.image_size = 32;
  cfg.k_shot = 1;
  cfg.steps = 8;
  cfg.lr0 = 0.02;
  cfg.n_classes = 4;
  cfg.n_base = 2;
  cfg.max_objects_per_query = 2;
  cfg.seed = seed;
  return cfg;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

bool params_identical(ModelParams& a, ModelParams& b) {
  auto na = a.named();
  auto nb = b.named();
  for (std::size_t i = 0; i < na.size(); ++i)
    if (!same_bits(na[i].tensor, nb[i].tensor)) return false;
  return true;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  TrainConfig cfg = tiny_config(5);
  TrainConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.b == cfg.b);
  CHECK(back.seed == cfg.seed);
  CHECK(back.mode == cfg.mode);
  CHECK(back.filter_strategy == cfg.filter_strategy);

  CHECK_THROWS_AS(config_from_json({{"bogus_key", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"steps", "many"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"steps", 0}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"mode", "resnet"}}), ConfigError);
  nlohmann::json mismatch = {{"b", 3}, {"n_base", 4}};
  CHECK_THROWS_AS(config_from_json(mismatch), ConfigError);
}

TEST_CASE("init_params determinism and decoder sizing") {
  TrainConfig cfg = tiny_config(3);
  ModelParams a = init_params(cfg);
  ModelParams b = init_params(cfg);
  CHECK(params_identical(a, b));

  CHECK(decoder_in_channels(cfg) == cfg.d);  // full_asr + projection
  cfg.mode = PipelineMode::baseline;
  CHECK(decoder_in_channels(cfg) == 2 * cfg.b * cfg.d);
  cfg.mode = PipelineMode::full_asr;
  cfg.filter_strategy = FilterStrategy::cosine;
  CHECK(decoder_in_channels(cfg) == 1);
  cfg.filter_strategy = FilterStrategy::concat;
  CHECK(decoder_in_channels(cfg) == 2 * cfg.d);
}

TEST_CASE("train is deterministic and steps=1 performs one update") {
  TrainConfig cfg = tiny_config(21);
  Dataset ds = make_dataset(cfg.dataset_config());

  TrainResult a = train(cfg, ds);
  TrainResult b = train(cfg, ds);
  CHECK(params_identical(a.params, b.params));
  CHECK(a.loss_log == b.loss_log);

  TrainConfig one = cfg;
  one.steps = 1;
  TrainResult r = train(one, ds);
  CHECK(r.loss_log.size() == 1);
  ModelParams init = init_params(one);
  CHECK(!params_identical(r.params, init));  // the single update moved something
}

TEST_CASE("all four modes train without numerical failure on the tiny setup") {
  for (PipelineMode mode : {PipelineMode::baseline, PipelineMode::reconst_only,
                            PipelineMode::reconst_span, PipelineMode::full_asr}) {
    TrainConfig cfg = tiny_config(2);
    cfg.mode = mode;
    cfg.steps = 6;
    Dataset ds = make_dataset(cfg.dataset_config());
    TrainResult r = train(cfg, ds);
    CHECK(r.loss_log.size() == 6);
    for (double l : r.loss_log) CHECK(std::isfinite(l));
  }
}

TEST_CASE("gated contrastive loss leaves the pre-gate trajectory unchanged") {
  TrainConfig gated = tiny_config(7);
  gated.mode = PipelineMode::reconst_span;
  gated.steps = 6;
  gated.tau = 0.5;  // gate opens at step 3
  TrainConfig zeroed = gated;
  zeroed.gamma = 0.0;

  Dataset ds = make_dataset(gated.dataset_config());
  TrainResult a = train(gated, ds);
  TrainResult b = train(zeroed, ds);
  for (int i = 0; i < 3; ++i) CHECK(a.loss_log[i] == b.loss_log[i]);
}

TEST_CASE("evaluate: oracle predictor reaches miou 1 and reports deterministically") {
  TrainConfig cfg = tiny_config(11);
  Dataset ds = make_dataset(cfg.dataset_config());
  ModelParams params = init_params(cfg);

  FgProbFn oracle = [&](const Episode& ep, int candidate) {
    for (const auto& [cls, mask] : ep.query_class_masks)
      if (cls == candidate) return mask;
    return Tensor::zeros({cfg.image_size, cfg.image_size});
  };

  Report r = evaluate(params, cfg, ds, Split::novel, 10, 99, {}, oracle);
  CHECK(r.iou.miou == 1.0);
  CHECK(r.iou.fb_iou == 1.0);
  // With oracle probabilities every candidate-class pixel lands on the
  // diagonal; non-candidate distractor pixels (base classes in a novel-split
  // eval) are predicted background, i.e. column 0.
  std::set<int> cand(ds.novel_ids.begin(), ds.novel_ids.end());
  for (std::size_t i = 0; i < r.confusion.size(); ++i)
    for (std::size_t j = 0; j < r.confusion[i].size(); ++j) {
      if (i == j) continue;
      if (j == 0 && !cand.count(static_cast<int>(i))) continue;
      CHECK(r.confusion[i][j] == 0);
    }

  Report r2 = evaluate(params, cfg, ds, Split::novel, 10, 99, {}, oracle);
  CHECK(report_to_stable_string(r) == report_to_stable_string(r2));
}

TEST_CASE("evaluate fills every report field on a trained tiny model") {
  TrainConfig cfg = tiny_config(13);
  cfg.steps = 10;
  Dataset ds = make_dataset(cfg.dataset_config());
  TrainResult tr = train(cfg, ds);
  Report r = evaluate(tr.params, cfg, ds, Split::base, 8, eval_seed(cfg, Split::base),
                      downsample_curve(tr.loss_log));
  CHECK(r.iou.miou >= 0.0);
  CHECK(r.iou.miou <= 1.0);
  CHECK(!r.loss_curve.empty());
  CHECK(r.confusion.size() == static_cast<std::size_t>(cfg.n_classes + 1));
  CHECK(r.mean_offdiag_cos.has_value());  // two base classes evaluated
  CHECK(!r.sparsity_entropy.empty());
  nlohmann::json j = report_to_json(r);
  for (const char* key : {"per_class_iou", "miou", "fb_iou", "confusion",
                          "mean_offdiag_cos", "sparsity_entropy", "loss_curve",
                          "config", "wall_time_s"})
    CHECK(j.contains(key));
}

TEST_CASE("checkpoint round trip preserves parameters bitwise") {
  TrainConfig cfg = tiny_config(17);
  Dataset ds = make_dataset(cfg.dataset_config());
  TrainResult tr = train(cfg, ds);

  const std::string path = "test_ckpt.json";
  auto named = tr.params.named();
  save_checkpoint(path, named, {1.0, 0.5});

  ModelParams loaded = init_params(cfg);
  auto named_loaded = loaded.named();
  std::vector<double> curve = load_checkpoint(path, named_loaded);
  CHECK(curve == std::vector<double>{1.0, 0.5});
  CHECK(params_identical(tr.params, loaded));

  // shape mismatch is rejected
  TrainConfig other = tiny_config(17);
  other.d = 4;
  ModelParams wrong = init_params(other);
  auto named_wrong = wrong.named();
  CHECK_THROWS_AS(load_checkpoint(path, named_wrong), ShapeError);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".bin");
}

TEST_CASE("ablate emits the four mode rows plus three strategy rows") {
  TrainConfig cfg = tiny_config(19);
  cfg.steps = 4;
  Dataset ds = make_dataset(cfg.dataset_config());
  auto rows = ablate(cfg, ds, 4);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0].mode == "baseline");
  CHECK(rows[1].mode == "reconst_only");
  CHECK(rows[2].mode == "reconst_span");
  CHECK(rows[3].mode == "full_asr");
  CHECK(rows[4].strategy == "projection");
  CHECK(rows[5].strategy == "cosine");
  CHECK(rows[6].strategy == "concat");
  // the configured strategy is projection, so rows 3 and 4 coincide
  CHECK(rows[3].novel_miou == rows[4].novel_miou);

  auto rows2 = ablate(cfg, ds, 4);
  for (std::size_t i = 0; i < rows.size(); ++i)
    CHECK(rows[i].novel_miou == rows2[i].novel_miou);
}

TEST_CASE("sweep_d emits one row per d value, reproducibly") {
  TrainConfig cfg = tiny_config(23);
  cfg.steps = 4;
  Dataset ds = make_dataset(cfg.dataset_config());
  auto rows = sweep_d(cfg, {2, 4}, ds, 4);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].d == 2);
  CHECK(rows[1].d == 4);
  auto rows2 = sweep_d(cfg, {2, 4}, ds, 4);
  CHECK(rows[0].novel_miou == rows2[0].novel_miou);
  CHECK(rows[1].novel_miou == rows2[1].novel_miou);
}

TEST_CASE("downsample_curve keeps endpoints and stays within budget") {
  std::vector<double> curve(2000);
  for (std::size_t i = 0; i < curve.size(); ++i) curve[i] = static_cast<double>(i);
  auto down = downsample_curve(curve, 500);
  CHECK(down.size() <= 501);
  CHECK(down.front() == 0.0);
  CHECK(down.back() == 1999.0);
  CHECK(downsample_curve({1.0, 2.0}, 500) == std::vector<double>{1.0, 2.0});
}
