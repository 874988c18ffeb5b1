#include "sddr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "sddr/errors.hpp"

namespace sddr {

std::map<int, std::size_t> Dataset::per_class_counts() const {
  std::map<int, std::size_t> counts;
  for (const auto& s : samples) counts[s.label]++;
  return counts;
}

std::vector<std::size_t> Dataset::indices_of_classes(const std::vector<int>& class_ids) const {
  std::vector<bool> wanted;
  for (int c : class_ids) {
    if (c >= static_cast<int>(wanted.size())) wanted.resize(static_cast<std::size_t>(c) + 1, false);
    wanted[static_cast<std::size_t>(c)] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    int l = samples[i].label;
    if (l >= 0 && l < static_cast<int>(wanted.size()) && wanted[static_cast<std::size_t>(l)]) {
      out.push_back(i);
    }
  }
  return out;
}

const LabelSpec& Dataset::label_spec(int class_id) const {
  for (const auto& spec : labels) {
    if (spec.class_id == class_id) return spec;
  }
  throw ConfigError("unknown class id " + std::to_string(class_id));
}

GaussianTask make_gaussian_means(int num_classes, int dim, double separation,
                                 std::uint64_t seed) {
  if (num_classes < 2 || dim < 2) throw ConfigError("gaussian task needs C >= 2, dim >= 2");
  if (separation < 0.0) throw ConfigError("gaussian separation must be >= 0");
  GaussianTask task;
  task.separation = separation;
  SplitMix64 rng(mix_seed({seed, 0x6d65616e73ULL}));
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : v) {
        x = rng.next_normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-12);
    for (auto& x : v) x *= separation / norm;
    task.means.push_back(Tensor::from({static_cast<std::size_t>(dim)}, std::move(v)));
  }
  return task;
}

namespace {

std::vector<LabelSpec> synth_labels(int num_classes, const std::string& prefix,
                                    const std::string& def_prefix) {
  std::vector<LabelSpec> labels;
  for (int c = 0; c < num_classes; ++c) {
    LabelSpec spec;
    spec.class_id = c;
    spec.name = prefix + std::to_string(c);
    spec.lemmas = {spec.name};
    spec.definition = def_prefix + std::to_string(c);
    labels.push_back(std::move(spec));
  }
  return labels;
}

Tensor gaussian_sample(const GaussianTask& task, int class_id, SplitMix64& rng) {
  const Tensor& mean = task.means[static_cast<std::size_t>(class_id)];
  std::vector<double> v(mean.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mean[i] + rng.next_normal();
  return Tensor::unchecked(mean.shape(), std::move(v));
}

}  // namespace

std::pair<Dataset, Dataset> make_gaussian_task(int num_classes, int dim, double separation,
                                               int per_class_train, int per_class_test,
                                               std::uint64_t seed) {
  GaussianTask task = make_gaussian_means(num_classes, dim, separation, seed);
  auto labels = synth_labels(num_classes, "class-", "gaussian blob ");
  Dataset train{{}, labels, Split::Train};
  Dataset test{{}, labels, Split::Test};
  for (int c = 0; c < num_classes; ++c) {
    SplitMix64 rng(mix_seed({seed, static_cast<std::uint64_t>(c), 0x64617461ULL}));
    for (int i = 0; i < per_class_train; ++i) train.samples.push_back({gaussian_sample(task, c, rng), c});
    for (int i = 0; i < per_class_test; ++i) test.samples.push_back({gaussian_sample(task, c, rng), c});
  }
  return {std::move(train), std::move(test)};
}

Tensor render_glyph(int pattern, const GlyphParams& params, SplitMix64& rng) {
  if (pattern < 0 || pattern >= kGlyphPatternCount) {
    throw ConfigError("glyph pattern " + std::to_string(pattern) + " out of range");
  }
  int side = params.image_side;
  double dx = 0.0, dy = 0.0, rot = 0.0;
  if (params.jitter > 0.0) {
    dx = (2.0 * rng.next_double() - 1.0) * params.jitter;
    dy = (2.0 * rng.next_double() - 1.0) * params.jitter;
    rot = (2.0 * rng.next_double() - 1.0) * params.jitter * M_PI;
  }
  double cr = std::cos(rot), sr = std::sin(rot);
  Tensor img = Tensor::zeros({static_cast<std::size_t>(side), static_cast<std::size_t>(side)});
  for (int py = 0; py < side; ++py) {
    for (int px = 0; px < side; ++px) {
      // Centered unit coordinates with jitter applied.
      double x0 = (px + 0.5) / side - 0.5 - dx;
      double y0 = (py + 0.5) / side - 0.5 - dy;
      double x = cr * x0 - sr * y0;
      double y = sr * x0 + cr * y0;
      double v = 0.0;
      if (pattern < 8) {
        // Oriented stripe fields at 8 angles.
        double theta = pattern * M_PI / 8.0;
        double s = x * std::cos(theta) + y * std::sin(theta);
        v = 0.5 + 0.5 * std::sin(2.0 * M_PI * 3.0 * s);
      } else if (pattern < 16) {
        // Discs at 8 positions on a ring.
        double phi = (pattern - 8) * M_PI / 4.0;
        double cx = 0.22 * std::cos(phi), cy = 0.22 * std::sin(phi);
        double d = std::hypot(x - cx, y - cy);
        v = d < 0.16 ? 1.0 : 0.0;
      } else if (pattern < 24) {
        // Checkerboards, 4 scales x 2 phases.
        int scale = 2 + (pattern - 16) % 4;
        int phase = (pattern - 16) / 4;
        int cxi = static_cast<int>(std::floor((x + 0.5) * scale));
        int cyi = static_cast<int>(std::floor((y + 0.5) * scale));
        v = ((cxi + cyi + phase) % 2 + 2) % 2 == 0 ? 1.0 : 0.0;
      } else {
        // Concentric rings at 8 frequencies.
        double r = std::hypot(x, y);
        double freq = 2.0 + (pattern - 24);
        v = 0.5 + 0.5 * std::cos(2.0 * M_PI * freq * r);
      }
      if (params.noise > 0.0) {
        v += (2.0 * rng.next_double() - 1.0) * params.noise;
      }
      img.at(static_cast<std::size_t>(py), static_cast<std::size_t>(px)) =
          std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

std::pair<Dataset, Dataset> make_glyph_task(int num_classes, const GlyphParams& params,
                                            int per_class_train, int per_class_test,
                                            std::uint64_t seed) {
  if (num_classes > kGlyphPatternCount) {
    throw ConfigError("glyph task supports at most " + std::to_string(kGlyphPatternCount) +
                      " classes, got " + std::to_string(num_classes));
  }
  auto labels = synth_labels(num_classes, "glyph-", "procedural glyph pattern ");
  Dataset train{{}, labels, Split::Train};
  Dataset test{{}, labels, Split::Test};
  for (int c = 0; c < num_classes; ++c) {
    SplitMix64 rng(mix_seed({seed, static_cast<std::uint64_t>(c), 0x676c797068ULL}));
    for (int i = 0; i < per_class_train; ++i) train.samples.push_back({render_glyph(c, params, rng), c});
    for (int i = 0; i < per_class_test; ++i) test.samples.push_back({render_glyph(c, params, rng), c});
  }
  return {std::move(train), std::move(test)};
}

std::vector<LabelSpec> load_labels_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open labels file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("labels file " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw FormatError("labels file " + path + ": expected a JSON array");
  std::vector<LabelSpec> labels;
  for (const auto& item : doc) {
    LabelSpec spec;
    spec.class_id = item.at("class_id").get<int>();
    spec.name = item.at("name").get<std::string>();
    if (spec.name.empty()) throw FormatError("labels file " + path + ": empty name");
    if (item.contains("lemmas")) spec.lemmas = item["lemmas"].get<std::vector<std::string>>();
    if (spec.lemmas.empty()) spec.lemmas = {spec.name};
    if (item.contains("definition")) spec.definition = item["definition"].get<std::string>();
    labels.push_back(std::move(spec));
  }
  return labels;
}

namespace {

constexpr std::size_t kCifarRecord = 3074;
constexpr std::size_t kCifarPixels = 3072;

Dataset load_cifar_split(const std::string& path, const std::vector<LabelSpec>& labels,
                         Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open CIFAR file " + path);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % kCifarRecord != 0) {
    std::size_t offset = raw.size() - raw.size() % kCifarRecord;
    throw FormatError("CIFAR file " + path + ": size " + std::to_string(raw.size()) +
                      " not a multiple of 3074, trailing partial record at byte offset " +
                      std::to_string(offset));
  }
  Dataset ds{{}, labels, split};
  for (std::size_t r = 0; r < raw.size() / kCifarRecord; ++r) {
    const auto* rec = reinterpret_cast<const unsigned char*>(raw.data() + r * kCifarRecord);
    int fine = rec[1];  // rec[0] is the coarse label, ignored
    if (fine >= 100) {
      throw FormatError("CIFAR file " + path + ": fine label " + std::to_string(fine) +
                        " >= 100 in record " + std::to_string(r));
    }
    std::vector<double> pixels(kCifarPixels);
    for (std::size_t i = 0; i < kCifarPixels; ++i) pixels[i] = rec[2 + i] / 255.0;
    ds.samples.push_back({Tensor::from({3, 32, 32}, std::move(pixels)), fine});
  }
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar100(const std::string& train_path,
                                          const std::string& test_path,
                                          const std::string& labels_path) {
  auto labels = load_labels_json(labels_path);
  Dataset train = load_cifar_split(train_path, labels, Split::Train);
  Dataset test = load_cifar_split(test_path, labels, Split::Test);
  return {std::move(train), std::move(test)};
}

}  // namespace sddr
