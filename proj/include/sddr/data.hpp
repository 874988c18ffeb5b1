#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sddr/rng.hpp"
#include "sddr/tensor.hpp"

namespace sddr {

enum class Origin { Real, Exemplar, Synthetic };

// Class identity plus the WordNet-style naming used for prompt construction:
// lemmas (underscore form) and a free-text definition.
struct LabelSpec {
  int class_id = 0;
  std::string name;                 // first lemma, spaces not underscores
  std::vector<std::string> lemmas;  // raw lemma forms
  std::string definition;           // may be empty
};

struct Sample {
  Tensor data;
  int label = 0;
};

enum class Split { Train, Test };

struct Dataset {
  std::vector<Sample> samples;
  std::vector<LabelSpec> labels;
  Split split = Split::Train;

  std::map<int, std::size_t> per_class_counts() const;
  std::vector<std::size_t> indices_of_classes(const std::vector<int>& class_ids) const;
  const LabelSpec& label_spec(int class_id) const;
};

// Isotropic Gaussian blobs: class means drawn uniformly on the sphere of the
// given radius, unit covariance. Deterministic in seed.
struct GaussianTask {
  std::vector<Tensor> means;  // [C] x [dim]
  double separation = 0.0;
};
GaussianTask make_gaussian_means(int num_classes, int dim, double separation,
                                 std::uint64_t seed);
std::pair<Dataset, Dataset> make_gaussian_task(int num_classes, int dim, double separation,
                                               int per_class_train, int per_class_test,
                                               std::uint64_t seed);

// Procedural glyph images: per-class pattern (bars / discs / checkers /
// rings) with translation+rotation jitter and additive noise, pixels in
// [0,1]. At least 32 distinct patterns.
inline constexpr int kGlyphPatternCount = 32;
struct GlyphParams {
  int image_side = 16;
  double jitter = 0.05;  // translation fraction; rotation = jitter * pi
  double noise = 0.05;  // additive uniform noise amplitude
};
Tensor render_glyph(int pattern, const GlyphParams& params, SplitMix64& rng);
std::pair<Dataset, Dataset> make_glyph_task(int num_classes, const GlyphParams& params,
                                            int per_class_train, int per_class_test,
                                            std::uint64_t seed);

// CIFAR-100 binary format: 3074-byte records, 1 coarse label byte (ignored),
// 1 fine label byte, 3072 pixel bytes (R plane, G plane, B plane, row-major
// 32x32). Pixels scaled to [0,1]. Label specs loaded from a JSON array of
// {"class_id", "name", "lemmas", "definition"}.
std::vector<LabelSpec> load_labels_json(const std::string& path);
std::pair<Dataset, Dataset> load_cifar100(const std::string& train_path,
                                          const std::string& test_path,
                                          const std::string& labels_path);

}  // namespace sddr
