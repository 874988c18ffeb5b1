#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sddr/data.hpp"
#include "sddr/rng.hpp"

namespace sddr {

struct GenerationParams {
  double guidance_scale = 2.0;
  int num_steps = 50;
  int width = 512;
  int height = 512;
  std::uint64_t seed = kDefaultSeed;
};

struct Prompt {
  std::string text;
};

// "{name}, {definition}" with the first lemma's underscores replaced by
// spaces; just "{name}" when the definition is empty.
Prompt build_prompt(const LabelSpec& spec);

// Per-item generation seed; keyed so output is independent of worker count
// and completion order.
inline std::uint64_t item_seed(std::uint64_t base_seed, int class_id, int index) {
  return mix_seed({base_seed, static_cast<std::uint64_t>(class_id),
                   static_cast<std::uint64_t>(index)});
}

struct ManifestEntry {
  int class_id = 0;
  std::string prompt;
  GenerationParams params;
  std::uint64_t seed = 0;            // item seed
  std::string source_tag;            // oracle | offline | remote
  std::string path;                  // storage path; empty means inline
  std::vector<std::size_t> shape;    // sample shape, kept so grayscale reads collapse
};

// Abstract pretrained generative source. Oracle and offline backends are
// deterministic in (class, count, seed).
class GenerativeSource {
 public:
  virtual ~GenerativeSource() = default;
  virtual std::string tag() const = 0;
  virtual std::vector<Sample> generate(int class_id, int count, std::uint64_t seed) const = 0;
};

// Task-side hook the oracle backend draws through.
class ClassSampler {
 public:
  virtual ~ClassSampler() = default;
  virtual int num_classes() const = 0;
  virtual std::vector<std::size_t> sample_shape() const = 0;
  // One draw from the class-conditional distribution, displaced by `shift`
  // and with dispersion scaled by `spread` (both identity at sigma = 0).
  virtual Tensor sample_shifted(int class_id, SplitMix64& rng, const std::vector<double>& shift,
                                double spread) const = 0;
};

class GaussianSampler : public ClassSampler {
 public:
  GaussianSampler(GaussianTask task) : task_(std::move(task)) {}
  int num_classes() const override { return static_cast<int>(task_.means.size()); }
  std::vector<std::size_t> sample_shape() const override { return task_.means[0].shape(); }
  Tensor sample_shifted(int class_id, SplitMix64& rng, const std::vector<double>& shift,
                        double spread) const override;

 private:
  GaussianTask task_;
};

// Glyph draws are rendered with noise amplitude scaled by `spread`, then the
// shift is added per pixel and the image re-clamped to [0,1].
class GlyphSampler : public ClassSampler {
 public:
  GlyphSampler(int num_classes, GlyphParams params) : num_classes_(num_classes), params_(params) {}
  int num_classes() const override { return num_classes_; }
  std::vector<std::size_t> sample_shape() const override;
  Tensor sample_shifted(int class_id, SplitMix64& rng, const std::vector<double>& shift,
                        double spread) const override;

 private:
  int num_classes_;
  GlyphParams params_;
};

// Emulated generator: draws from the true class-conditional distribution
// with the mean displaced by sigma along a fixed per-class unit direction
// and dispersion scaled by (1 + sigma/4). sigma = 0 is a perfect generator.
class OracleSource : public GenerativeSource {
 public:
  OracleSource(std::shared_ptr<const ClassSampler> sampler, double sigma);
  std::string tag() const override { return "oracle"; }
  std::vector<Sample> generate(int class_id, int count, std::uint64_t seed) const override;
  double sigma() const { return sigma_; }

 private:
  std::shared_ptr<const ClassSampler> sampler_;
  double sigma_;
  std::vector<std::vector<double>> directions_;  // per-class unit shift direction
};

// Reads previously generated samples from root/{class_id}/{index}.ppm in
// manifest order.
class OfflineSource : public GenerativeSource {
 public:
  explicit OfflineSource(std::string root);
  std::string tag() const override { return "offline"; }
  std::vector<Sample> generate(int class_id, int count, std::uint64_t seed) const override;
  const std::vector<ManifestEntry>& manifest() const { return manifest_; }

 private:
  std::string root_;
  std::vector<ManifestEntry> manifest_;
  std::map<int, std::vector<std::size_t>> by_class_;  // manifest positions per class
};

struct RemoteConfig {
  std::string endpoint;  // e.g. http://host:port
  int timeout_ms = 30000;
  int retries = 2;
};

// POSTs {endpoint}/v1/generate with the prompt and generation parameters and
// expects a binary PPM body back.
class RemoteSource : public GenerativeSource {
 public:
  RemoteSource(RemoteConfig cfg, GenerationParams params, std::map<int, LabelSpec> specs);
  std::string tag() const override { return "remote"; }
  std::vector<Sample> generate(int class_id, int count, std::uint64_t seed) const override;

 private:
  RemoteConfig cfg_;
  GenerationParams params_;
  std::map<int, LabelSpec> specs_;
};

// Growing store S of labeled synthetic samples plus provenance manifest.
class SyntheticStore {
 public:
  const std::map<int, std::vector<Sample>>& per_class() const { return per_class_; }
  const std::vector<ManifestEntry>& manifest() const { return manifest_; }
  std::size_t total_size() const;
  bool has_class(int class_id) const { return per_class_.count(class_id) > 0; }
  bool empty_samples() const { return total_size() == 0; }
  int per_class_count(int class_id) const;
  std::string manifest_json() const;

  friend void update_synthetic(SyntheticStore& store, const GenerativeSource& source,
                               const std::vector<LabelSpec>& new_class_specs, int n,
                               const GenerationParams& params);

 private:
  std::map<int, std::vector<Sample>> per_class_;
  std::vector<ManifestEntry> manifest_;
};

// Appends exactly n samples per new class; partial progress is not
// committed on backend failure. Per-item seeds come from item_seed().
void update_synthetic(SyntheticStore& store, const GenerativeSource& source,
                      const std::vector<LabelSpec>& new_class_specs, int n,
                      const GenerationParams& params);

// Uniform draw of k samples; without replacement when k <= store size,
// otherwise with replacement (reported through `with_replacement`).
std::vector<Sample> sample_synthetic_batch(const SyntheticStore& store, std::size_t k,
                                           SplitMix64& rng, bool* with_replacement = nullptr);

// Binary PPM (P6, 8-bit). Grayscale [H, W] tensors are written with equal
// channels and read back collapsed; [3, H, W] tensors round-trip as RGB.
// Values quantized to round(v * 255).
void write_ppm(const std::string& path, const Tensor& image);
std::string encode_ppm(const Tensor& image);
Tensor parse_ppm(const std::string& bytes, bool grayscale, const std::string& origin);
Tensor read_ppm(const std::string& path, bool grayscale);

// Writes root/{class_id}/{index}.ppm plus root/manifest.json so an
// OfflineSource can replay the store.
void write_offline_store(const std::string& root, const SyntheticStore& store);

}  // namespace sddr
