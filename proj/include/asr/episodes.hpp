#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "asr/tensor.hpp"

namespace asr {

enum class ObjectShape { circle, square, triangle, cross, ring, bar };
enum class FillPattern { solid, stripes, checker };

// Class id 0 is reserved for the background everywhere; object classes are
// numbered 1..n_classes so confusion rows/columns can include "predicted
// background" without remapping.
struct ClassSpec {
  int class_id = 0;
  ObjectShape shape = ObjectShape::circle;
  FillPattern pattern = FillPattern::solid;
  std::array<double, 3> color{0, 0, 0};
};

struct DatasetConfig {
  int n_classes = 12;
  int n_base = 8;
  int image_size = 64;  // multiple of 4, >= 32
  int max_objects_per_query = 3;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetConfig config;
  std::vector<ClassSpec> specs;  // indexed by class_id - 1
  std::vector<int> base_ids;
  std::vector<int> novel_ids;

  const ClassSpec& spec(int class_id) const;
  // Position of a base class id inside base_ids (its channel-group index).
  int group_index(int class_id) const;
};

// Deterministic class table. Base classes receive distinct (shape, pattern)
// combinations; every novel class borrows its shape, pattern and color from
// three different base classes without duplicating any (shape, pattern) pair.
Dataset make_dataset(const DatasetConfig& config);

class PlacementError : public TensorError {
 public:
  using TensorError::TensorError;
};

struct Scene {
  Tensor image;                               // H x W x 3 in [0,1]
  std::vector<std::pair<int, Tensor>> masks;  // per class, H x W binary
};

// Smooth noise background plus the given objects at seeded positions/sizes,
// placed without overlap (rejection with shrink). Deterministic in seed.
Scene render_scene(const std::vector<ClassSpec>& objects, std::uint64_t seed,
                   const DatasetConfig& config);

enum class Split { base, novel };

struct Episode {
  std::vector<std::pair<Tensor, Tensor>> support;  // (image, mask) pairs
  Tensor query_image;
  Tensor query_mask;  // target class only
  int class_id = 0;
  std::vector<int> distractor_ids;
  // Full per-class query masks (target + distractors), kept for the
  // confusion-matrix diagnostic.
  std::vector<std::pair<int, Tensor>> query_class_masks;
};

// Pure function of (config.seed, split, k, index).
Episode sample_episode(const Dataset& dataset, Split split, int k, std::uint64_t index);

Tensor flip_horizontal(const Tensor& t);  // rank-2 mask or rank-3 image

struct IoUReport {
  std::map<int, double> per_class;
  double miou = 0.0;
  double fb_iou = 0.0;
};

// Dataset-level IoU: TP/FP/FN are pooled per class across all records before
// the ratio. FB-IoU pools foreground and background over all records
// regardless of class.
class IoUAccumulator {
 public:
  void add(const Tensor& prediction, const Tensor& ground_truth, int class_id);
  IoUReport report() const;

 private:
  struct Counts {
    std::int64_t tp = 0, fp = 0, fn = 0;
  };
  std::map<int, Counts> per_class_;
  std::int64_t fg_inter_ = 0, fg_union_ = 0;
  std::int64_t bg_inter_ = 0, bg_union_ = 0;
};

void write_ppm(const std::string& path, const Tensor& image);
void write_pgm(const std::string& path, const Tensor& mask);

}  // namespace asr
