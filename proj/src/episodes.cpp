#include "asr/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "asr/encoder.hpp"
#include "asr/rng.hpp"

namespace asr {

namespace {

constexpr std::uint64_t kRoleEpisode = 0xe1;
constexpr std::uint64_t kRoleClass = 0xe2;
constexpr std::uint64_t kRoleSupport = 0xe3;
constexpr std::uint64_t kRoleQueryMix = 0xe4;
constexpr std::uint64_t kRoleQueryScene = 0xe5;

constexpr int kNumShapes = 6;
constexpr int kNumPatterns = 3;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

bool inside_shape(ObjectShape shape, double dx, double dy, double s) {
  const double half = s / 2.0;
  switch (shape) {
    case ObjectShape::circle:
      return dx * dx + dy * dy <= half * half;
    case ObjectShape::square:
      return std::fabs(dx) <= half && std::fabs(dy) <= half;
    case ObjectShape::triangle: {
      // apex up: (0,-half), (-half,+half), (+half,+half)
      if (dy < -half || dy > half) return false;
      const double t = (dy + half) / s;  // 0 at apex row, 1 at base
      return std::fabs(dx) <= t * half;
    }
    // arm/annulus/bar thicknesses stay >= 4 image pixels at the minimum
    // object size so a factor-4 nearest downsample cannot miss them
    case ObjectShape::cross:
      return (std::fabs(dx) <= s / 5.0 && std::fabs(dy) <= half) ||
             (std::fabs(dy) <= s / 5.0 && std::fabs(dx) <= half);
    case ObjectShape::ring: {
      const double r2 = dx * dx + dy * dy;
      const double inner = s / 8.0;
      return r2 >= inner * inner && r2 <= half * half;
    }
    case ObjectShape::bar:
      return std::fabs(dx) <= half && std::fabs(dy) <= s / 4.0;
  }
  return false;
}

std::array<double, 3> pattern_color(const ClassSpec& spec, double px, double py,
                                    double s) {
  bool bright = true;
  const double period = std::max(2.0, s / 5.0);
  switch (spec.pattern) {
    case FillPattern::solid:
      break;
    case FillPattern::stripes:
      bright = static_cast<long long>(std::floor((px + py) / period)) % 2 == 0;
      break;
    case FillPattern::checker:
      bright = (static_cast<long long>(std::floor(px / period)) +
                static_cast<long long>(std::floor(py / period))) %
                   2 ==
               0;
      break;
  }
  if (bright) return spec.color;
  return {spec.color[0] * 0.45, spec.color[1] * 0.45, spec.color[2] * 0.45};
}

void validate_config(const DatasetConfig& c) {
  if (c.n_base < 2) throw DomainError("dataset: need at least two base classes");
  if (c.n_base >= c.n_classes)
    throw DomainError("dataset: n_base must be smaller than n_classes");
  if (c.image_size < 32 || c.image_size % 4 != 0)
    throw DomainError("dataset: image_size must be >= 32 and a multiple of 4");
  if (c.max_objects_per_query < 1)
    throw DomainError("dataset: max_objects_per_query must be >= 1");
}

}  // namespace

const ClassSpec& Dataset::spec(int class_id) const {
  if (class_id < 1 || class_id > static_cast<int>(specs.size()))
    throw DomainError("dataset: class id out of range");
  return specs[static_cast<std::size_t>(class_id - 1)];
}

int Dataset::group_index(int class_id) const {
  for (std::size_t i = 0; i < base_ids.size(); ++i)
    if (base_ids[i] == class_id) return static_cast<int>(i);
  throw DomainError("dataset: class " + std::to_string(class_id) + " is not a base class");
}

Dataset make_dataset(const DatasetConfig& config) {
  validate_config(config);
  Rng rng(sub_seed(config.seed, 0xdada));

  std::vector<int> shape_order(kNumShapes), pattern_order(kNumPatterns);
  for (int i = 0; i < kNumShapes; ++i) shape_order[i] = i;
  for (int i = 0; i < kNumPatterns; ++i) pattern_order[i] = i;
  for (int i = kNumShapes - 1; i > 0; --i)
    std::swap(shape_order[i], shape_order[rng.uniform_int(i + 1)]);
  for (int i = kNumPatterns - 1; i > 0; --i)
    std::swap(pattern_order[i], pattern_order[rng.uniform_int(i + 1)]);

  Dataset ds;
  ds.config = config;
  const double hue0 = rng.uniform();

  auto make_color = [&](int index) {
    // golden-ratio spaced hues keep class colors well separated
    const double hue = std::fmod(hue0 + 0.618033988749895 * index, 1.0);
    return hsv_to_rgb(hue, 0.65 + 0.3 * rng.uniform(), 0.75 + 0.25 * rng.uniform());
  };

  // Base classes: distinct (shape, pattern) combinations covering several
  // shapes and patterns so novel mixtures always exist.
  for (int i = 0; i < config.n_base; ++i) {
    ClassSpec spec;
    spec.class_id = i + 1;
    spec.shape = static_cast<ObjectShape>(shape_order[i % kNumShapes]);
    spec.pattern =
        static_cast<FillPattern>(pattern_order[(i + i / kNumShapes) % kNumPatterns]);
    spec.color = make_color(i);
    ds.specs.push_back(spec);
    ds.base_ids.push_back(spec.class_id);
  }

  auto combo_used = [&](ObjectShape s, FillPattern p) {
    for (const auto& spec : ds.specs)
      if (spec.shape == s && spec.pattern == p) return true;
    return false;
  };

  // Novel classes: shape from one base, pattern from another, color from a
  // third, with the (shape, pattern) pair unused by any existing class.
  const int n_novel = config.n_classes - config.n_base;
  for (int i = 0; i < n_novel; ++i) {
    std::vector<std::pair<int, int>> donor_pairs;
    for (int a = 0; a < config.n_base; ++a)
      for (int b = 0; b < config.n_base; ++b)
        if (a != b) donor_pairs.emplace_back(a, b);
    for (int j = static_cast<int>(donor_pairs.size()) - 1; j > 0; --j)
      std::swap(donor_pairs[j], donor_pairs[rng.uniform_int(j + 1)]);

    bool placed = false;
    for (const auto& [a, b] : donor_pairs) {
      const ObjectShape s = ds.specs[a].shape;
      const FillPattern p = ds.specs[b].pattern;
      if (combo_used(s, p)) continue;
      ClassSpec spec;
      spec.class_id = config.n_base + i + 1;
      spec.shape = s;
      spec.pattern = p;
      int c = rng.uniform_int(config.n_base);
      if (config.n_base >= 3)
        while (c == a || c == b) c = rng.uniform_int(config.n_base);
      spec.color = ds.specs[c].color;
      ds.specs.push_back(spec);
      ds.novel_ids.push_back(spec.class_id);
      placed = true;
      break;
    }
    if (!placed)
      throw DomainError("dataset: no unused (shape, pattern) mixture available "
                        "for a novel class; reduce n_classes");
  }

  // triple uniqueness
  for (std::size_t i = 0; i < ds.specs.size(); ++i)
    for (std::size_t j = i + 1; j < ds.specs.size(); ++j) {
      const auto& a = ds.specs[i];
      const auto& b = ds.specs[j];
      if (a.shape == b.shape && a.pattern == b.pattern && a.color == b.color)
        throw DomainError("dataset: duplicate (shape, pattern, color) triple");
    }
  return ds;
}

Scene render_scene(const std::vector<ClassSpec>& objects, std::uint64_t seed,
                   const DatasetConfig& config) {
  validate_config(config);
  if (objects.empty() ||
      static_cast<int>(objects.size()) > config.max_objects_per_query)
    throw DomainError("render_scene: object count out of range");
  const int size = config.image_size;
  Rng rng(sub_seed(seed, 0x5ce2e));

  // background: bilinearly interpolated coarse noise, per channel, in [0, 0.4]
  constexpr int kGrid = 5;
  double grid[kGrid][kGrid][3];
  for (int gy = 0; gy < kGrid; ++gy)
    for (int gx = 0; gx < kGrid; ++gx)
      for (int ch = 0; ch < 3; ++ch) grid[gy][gx][ch] = rng.uniform(0.0, 0.4);
  std::vector<double> image(static_cast<std::size_t>(size) * size * 3);
  const double gscale = static_cast<double>(kGrid - 1) / (size - 1);
  for (int y = 0; y < size; ++y) {
    const double fy = y * gscale;
    const int y0 = std::min(static_cast<int>(fy), kGrid - 2);
    const double wy = fy - y0;
    for (int x = 0; x < size; ++x) {
      const double fx = x * gscale;
      const int x0 = std::min(static_cast<int>(fx), kGrid - 2);
      const double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v =
            (1 - wy) * ((1 - wx) * grid[y0][x0][ch] + wx * grid[y0][x0 + 1][ch]) +
            wy * ((1 - wx) * grid[y0 + 1][x0][ch] + wx * grid[y0 + 1][x0 + 1][ch]);
        image[(static_cast<std::size_t>(y) * size + x) * 3 + ch] = v;
      }
    }
  }

  struct Placed {
    double cx, cy, s;
  };
  std::vector<Placed> placed;
  const double size_lo = size / 6.0;
  const double size_hi = size / 3.0;
  const double size_floor = size / 12.0;

  for (std::size_t i = 0; i < objects.size(); ++i) {
    double s = rng.uniform(size_lo, size_hi);
    bool ok = false;
    double cx = 0, cy = 0;
    while (!ok) {
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        cx = rng.uniform(s / 2 + 1, size - s / 2 - 1);
        cy = rng.uniform(s / 2 + 1, size - s / 2 - 1);
        ok = true;
        for (const auto& p : placed) {
          const double min_dist = (s + p.s) / 2.0 + 2.0;
          const double dx = cx - p.cx, dy = cy - p.cy;
          if (dx * dx + dy * dy < min_dist * min_dist) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) {
        s *= 0.8;
        if (s < size_floor)
          throw PlacementError("render_scene: could not place all objects; "
                               "the configuration is overcrowded");
      }
    }
    placed.push_back({cx, cy, s});
  }

  Scene scene;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& spec = objects[i];
    const auto& p = placed[i];
    std::vector<double> mask(static_cast<std::size_t>(size) * size, 0.0);
    const int y_lo = std::max(0, static_cast<int>(std::floor(p.cy - p.s / 2 - 1)));
    const int y_hi = std::min(size - 1, static_cast<int>(std::ceil(p.cy + p.s / 2 + 1)));
    const int x_lo = std::max(0, static_cast<int>(std::floor(p.cx - p.s / 2 - 1)));
    const int x_hi = std::min(size - 1, static_cast<int>(std::ceil(p.cx + p.s / 2 + 1)));
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        if (!inside_shape(spec.shape, px - p.cx, py - p.cy, p.s)) continue;
        mask[static_cast<std::size_t>(y) * size + x] = 1.0;
        const auto col = pattern_color(spec, px, py, p.s);
        for (int ch = 0; ch < 3; ++ch)
          image[(static_cast<std::size_t>(y) * size + x) * 3 + ch] = col[ch];
      }
    scene.masks.emplace_back(spec.class_id,
                             Tensor::from_data({size, size}, std::move(mask)));
  }
  scene.image = Tensor::from_data({size, size, 3}, std::move(image));
  return scene;
}

Episode sample_episode(const Dataset& dataset, Split split, int k, std::uint64_t index) {
  if (k < 1) throw DomainError("sample_episode: k must be >= 1");
  const auto& ids = split == Split::base ? dataset.base_ids : dataset.novel_ids;
  if (ids.empty()) throw DomainError("sample_episode: empty split");
  const std::uint64_t split_tag = split == Split::base ? 1 : 2;
  const std::uint64_t base_seed =
      sub_seed(dataset.config.seed, kRoleEpisode, split_tag, index);

  Rng class_rng(sub_seed(base_seed, kRoleClass));
  const int class_id = ids[class_rng.uniform_int(static_cast<int>(ids.size()))];

  Episode ep;
  ep.class_id = class_id;
  const int low = dataset.config.image_size / 4;
  for (int i = 0; i < k; ++i) {
    // Support masks feed the masked GAP at feature resolution (fixed factor
    // 4), so a rendering whose mask vanishes under the nearest downsample is
    // re-drawn deterministically with the next sub-seed.
    bool placed = false;
    for (std::uint64_t attempt = 0; attempt < 20 && !placed; ++attempt) {
      Scene s = render_scene(
          {dataset.spec(class_id)},
          sub_seed(base_seed, kRoleSupport, static_cast<std::uint64_t>(i), attempt),
          dataset.config);
      const Tensor& mask = s.masks.front().second;
      double fg_low = 0.0;
      {
        Tensor low_mask = downsample_mask_nearest(mask, low, low);
        for (double v : low_mask.data()) fg_low += v;
      }
      bool any = false;
      for (double v : mask.data())
        if (v == 1.0) any = true;
      if (!any || fg_low == 0.0) continue;
      ep.support.emplace_back(s.image, mask);
      placed = true;
    }
    if (!placed)
      throw TensorError("sample_episode: could not render a support mask that "
                        "survives feature-resolution downsampling");
  }

  Rng qrng(sub_seed(base_seed, kRoleQueryMix));
  const int n_distractors = qrng.uniform_int(dataset.config.max_objects_per_query);
  std::vector<int> others;
  for (int id = 1; id <= dataset.config.n_classes; ++id)
    if (id != class_id) others.push_back(id);
  for (int i = static_cast<int>(others.size()) - 1; i > 0; --i)
    std::swap(others[i], others[qrng.uniform_int(i + 1)]);
  std::vector<ClassSpec> objects{dataset.spec(class_id)};
  for (int i = 0; i < n_distractors; ++i) {
    ep.distractor_ids.push_back(others[i]);
    objects.push_back(dataset.spec(others[i]));
  }

  Scene q = render_scene(objects, sub_seed(base_seed, kRoleQueryScene), dataset.config);
  ep.query_image = q.image;
  ep.query_mask = q.masks.front().second;
  ep.query_class_masks = q.masks;
  return ep;
}

Tensor flip_horizontal(const Tensor& t) {
  if (t.rank() == 2) {
    const int h = t.dim(0), w = t.dim(1);
    const auto d = t.data();
    std::vector<double> out(d.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[static_cast<std::size_t>(y) * w + x] =
            d[static_cast<std::size_t>(y) * w + (w - 1 - x)];
    return Tensor::from_data({h, w}, std::move(out));
  }
  if (t.rank() == 3) {
    const int h = t.dim(0), w = t.dim(1), c = t.dim(2);
    const auto d = t.data();
    std::vector<double> out(d.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          out[(static_cast<std::size_t>(y) * w + x) * c + ch] =
              d[(static_cast<std::size_t>(y) * w + (w - 1 - x)) * c + ch];
    return Tensor::from_data({h, w, c}, std::move(out));
  }
  throw ShapeError("flip_horizontal: expected rank 2 or 3");
}

void IoUAccumulator::add(const Tensor& prediction, const Tensor& ground_truth,
                         int class_id) {
  if (prediction.shape() != ground_truth.shape())
    throw ShapeError("iou: mask shapes differ");
  const auto pd = prediction.data();
  const auto gd = ground_truth.data();
  Counts& c = per_class_[class_id];
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    if ((pd[i] != 0.0 && pd[i] != 1.0) || (gd[i] != 0.0 && gd[i] != 1.0))
      throw DomainError("iou: masks must be binary");
    const bool p = pd[i] == 1.0, g = gd[i] == 1.0;
    if (p && g) ++tp;
    else if (p) ++fp;
    else if (g) ++fn;
    else ++tn;
  }
  c.tp += tp;
  c.fp += fp;
  c.fn += fn;
  fg_inter_ += tp;
  fg_union_ += tp + fp + fn;
  bg_inter_ += tn;
  bg_union_ += tn + fp + fn;
}

IoUReport IoUAccumulator::report() const {
  IoUReport r;
  double sum = 0.0;
  int n = 0;
  for (const auto& [cls, c] : per_class_) {
    const std::int64_t denom = c.tp + c.fp + c.fn;
    if (denom == 0) continue;  // class never seen with any foreground evidence
    const double iou = static_cast<double>(c.tp) / static_cast<double>(denom);
    r.per_class[cls] = iou;
    sum += iou;
    ++n;
  }
  r.miou = n > 0 ? sum / n : 0.0;
  const double fg = fg_union_ > 0 ? static_cast<double>(fg_inter_) / fg_union_ : 1.0;
  const double bg = bg_union_ > 0 ? static_cast<double>(bg_inter_) / bg_union_ : 1.0;
  r.fb_iou = (fg + bg) / 2.0;
  return r;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw ShapeError("write_ppm: image must be H x W x 3");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (double v : image.data()) {
    const int byte = std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255);
    f.put(static_cast<char>(byte));
  }
}

void write_pgm(const std::string& path, const Tensor& mask) {
  if (mask.rank() != 2) throw ShapeError("write_pgm: mask must be rank 2");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  f << "P5\n" << mask.dim(1) << " " << mask.dim(0) << "\n255\n";
  for (double v : mask.data()) f.put(static_cast<char>(v == 1.0 ? 255 : 0));
}

}  // namespace asr
