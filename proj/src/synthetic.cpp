#include "sddr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "sddr/errors.hpp"

#define CPPHTTPLIB_NO_EXCEPTIONS  // error results inspected explicitly
#include <httplib.h>

namespace sddr {

namespace fs = std::filesystem;
using nlohmann::json;

Prompt build_prompt(const LabelSpec& spec) {
  std::string name = spec.lemmas.empty() ? spec.name : spec.lemmas.front();
  if (name.empty()) throw ConfigError("prompt: class " + std::to_string(spec.class_id) + " has no name");
  std::replace(name.begin(), name.end(), '_', ' ');
  if (spec.definition.empty()) return {name};
  return {name + ", " + spec.definition};
}

Tensor GaussianSampler::sample_shifted(int class_id, SplitMix64& rng,
                                       const std::vector<double>& shift, double spread) const {
  const Tensor& mean = task_.means[static_cast<std::size_t>(class_id)];
  std::vector<double> v(mean.size());
  double scale = std::sqrt(spread);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = mean[i] + shift[i] + scale * rng.next_normal();
  }
  return Tensor::unchecked(mean.shape(), std::move(v));
}

std::vector<std::size_t> GlyphSampler::sample_shape() const {
  auto side = static_cast<std::size_t>(params_.image_side);
  return {side, side};
}

Tensor GlyphSampler::sample_shifted(int class_id, SplitMix64& rng,
                                    const std::vector<double>& shift, double spread) const {
  GlyphParams p = params_;
  p.noise *= std::sqrt(spread);
  Tensor img = render_glyph(class_id, p, rng);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = std::clamp(img[i] + shift[i], 0.0, 1.0);
  }
  return img;
}

OracleSource::OracleSource(std::shared_ptr<const ClassSampler> sampler, double sigma)
    : sampler_(std::move(sampler)), sigma_(sigma) {
  if (sigma_ < 0.0) throw ConfigError("oracle sigma must be >= 0");
  std::size_t dim = shape_product(sampler_->sample_shape());
  for (int c = 0; c < sampler_->num_classes(); ++c) {
    SplitMix64 rng(mix_seed({static_cast<std::uint64_t>(c), 0x646972ULL}));
    std::vector<double> dir(dim);
    double norm = 0.0;
    for (auto& x : dir) {
      x = rng.next_normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : dir) x *= sigma_ / norm;
    directions_.push_back(std::move(dir));
  }
}

std::vector<Sample> OracleSource::generate(int class_id, int count, std::uint64_t seed) const {
  if (class_id < 0 || class_id >= sampler_->num_classes()) {
    throw GenerationError("oracle: unknown class " + std::to_string(class_id));
  }
  double spread = 1.0 + sigma_ / 4.0;
  const auto& shift = directions_[static_cast<std::size_t>(class_id)];
  std::vector<Sample> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SplitMix64 rng(item_seed(seed, class_id, i));
    out[static_cast<std::size_t>(i)] = {sampler_->sample_shifted(class_id, rng, shift, spread),
                                        class_id};
  }
  return out;
}

// ---------------------------------------------------------------------------
// PPM

std::string encode_ppm(const Tensor& image) {
  const auto& shape = image.shape();
  bool gray = shape.size() == 2;
  if (!gray && (shape.size() != 3 || shape[0] != 3)) {
    throw FormatError("PPM encode expects [H,W] or [3,H,W] tensors");
  }
  std::size_t h = gray ? shape[0] : shape[1];
  std::size_t w = gray ? shape[1] : shape[2];
  std::ostringstream out;
  out << "P6\n" << w << " " << h << "\n255\n";
  auto quantize = [](double v) {
    int q = static_cast<int>(std::lround(v * 255.0));
    return static_cast<unsigned char>(std::clamp(q, 0, 255));
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double v = gray ? image[y * w + x] : image[(ch * h + y) * w + x];
        out.put(static_cast<char>(quantize(v)));
      }
    }
  }
  return out.str();
}

void write_ppm(const std::string& path, const Tensor& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  std::string bytes = encode_ppm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path);
}

Tensor parse_ppm(const std::string& bytes, bool grayscale, const std::string& origin) {
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || maxval != 255 || w == 0 || h == 0) {
    throw FormatError("invalid PPM header in " + origin);
  }
  in.get();  // single whitespace after maxval
  std::size_t need = w * h * 3;
  std::size_t offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() - offset < need) {
    throw FormatError("truncated PPM body in " + origin);
  }
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  if (grayscale) {
    std::vector<double> v(w * h);
    for (std::size_t i = 0; i < w * h; ++i) v[i] = px[3 * i] / 255.0;
    return Tensor::from({h, w}, std::move(v));
  }
  std::vector<double> v(3 * w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) v[ch * w * h + i] = px[3 * i + ch] / 255.0;
  }
  return Tensor::from({3, h, w}, std::move(v));
}

Tensor read_ppm(const std::string& path, bool grayscale) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GenerationError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_ppm(bytes, grayscale, path);
}

// ---------------------------------------------------------------------------
// Offline backend

namespace {

json params_to_json(const GenerationParams& p) {
  return json{{"guidance_scale", p.guidance_scale},
              {"num_steps", p.num_steps},
              {"width", p.width},
              {"height", p.height},
              {"seed", p.seed}};
}

GenerationParams params_from_json(const json& j) {
  GenerationParams p;
  p.guidance_scale = j.at("guidance_scale").get<double>();
  p.num_steps = j.at("num_steps").get<int>();
  p.width = j.at("width").get<int>();
  p.height = j.at("height").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

json entry_to_json(const ManifestEntry& e) {
  json j{{"class_id", e.class_id}, {"prompt", e.prompt},     {"params", params_to_json(e.params)},
         {"item_seed", e.seed},    {"source_tag", e.source_tag}};
  if (!e.path.empty()) j["path"] = e.path;
  if (!e.shape.empty()) j["shape"] = e.shape;
  return j;
}

ManifestEntry entry_from_json(const json& j) {
  ManifestEntry e;
  e.class_id = j.at("class_id").get<int>();
  e.prompt = j.at("prompt").get<std::string>();
  e.params = params_from_json(j.at("params"));
  e.seed = j.at("item_seed").get<std::uint64_t>();
  e.source_tag = j.at("source_tag").get<std::string>();
  if (j.contains("path")) e.path = j["path"].get<std::string>();
  if (j.contains("shape")) e.shape = j["shape"].get<std::vector<std::size_t>>();
  return e;
}

}  // namespace

OfflineSource::OfflineSource(std::string root) : root_(std::move(root)) {
  std::string manifest_path = (fs::path(root_) / "manifest.json").string();
  std::ifstream in(manifest_path);
  if (!in) throw GenerationError("offline store: cannot open " + manifest_path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw FormatError("offline manifest " + manifest_path + ": " + e.what());
  }
  for (const auto& item : doc.at("entries")) {
    manifest_.push_back(entry_from_json(item));
    by_class_[manifest_.back().class_id].push_back(manifest_.size() - 1);
  }
}

std::vector<Sample> OfflineSource::generate(int class_id, int count, std::uint64_t) const {
  auto it = by_class_.find(class_id);
  if (it == by_class_.end()) {
    throw GenerationError("offline store: unknown class " + std::to_string(class_id));
  }
  if (count > static_cast<int>(it->second.size())) {
    throw GenerationError("offline store: class " + std::to_string(class_id) + " holds " +
                          std::to_string(it->second.size()) + " samples, asked for " +
                          std::to_string(count));
  }
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    const ManifestEntry& entry = manifest_[it->second[static_cast<std::size_t>(i)]];
    std::string path = (fs::path(root_) / entry.path).string();
    bool gray = entry.shape.size() == 2;
    out.push_back({read_ppm(path, gray), class_id});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remote backend

RemoteSource::RemoteSource(RemoteConfig cfg, GenerationParams params, std::map<int, LabelSpec> specs)
    : cfg_(std::move(cfg)), params_(params), specs_(std::move(specs)) {}

std::vector<Sample> RemoteSource::generate(int class_id, int count, std::uint64_t seed) const {
  auto it = specs_.find(class_id);
  if (it == specs_.end()) {
    throw GenerationError("remote: unknown class " + std::to_string(class_id));
  }
  Prompt prompt = build_prompt(it->second);
  httplib::Client client(cfg_.endpoint);
  client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
  client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    json body{{"prompt", prompt.text},
              {"guidance_scale", params_.guidance_scale},
              {"num_steps", params_.num_steps},
              {"seed", item_seed(seed, class_id, i)},
              {"width", params_.width},
              {"height", params_.height}};
    httplib::Result res;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      res = client.Post("/v1/generate", body.dump(), "application/json");
      if (res && res->status == 200) break;
    }
    if (!res || res->status != 200) {
      throw GenerationError("remote generation failed for class " + std::to_string(class_id) +
                            " index " + std::to_string(i) + ": " +
                            (res ? "HTTP " + std::to_string(res->status)
                                 : httplib::to_string(res.error())));
    }
    out.push_back({parse_ppm(res->body, false, "remote response"), class_id});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Store

std::size_t SyntheticStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [c, list] : per_class_) n += list.size();
  return n;
}

int SyntheticStore::per_class_count(int class_id) const {
  auto it = per_class_.find(class_id);
  return it == per_class_.end() ? 0 : static_cast<int>(it->second.size());
}

std::string SyntheticStore::manifest_json() const {
  json entries = json::array();
  for (const auto& e : manifest_) entries.push_back(entry_to_json(e));
  return json{{"entries", std::move(entries)}}.dump(2);
}

void update_synthetic(SyntheticStore& store, const GenerativeSource& source,
                      const std::vector<LabelSpec>& new_class_specs, int n,
                      const GenerationParams& params) {
  if (n < 0) throw ConfigError("synthetic n must be >= 0");
  // Stage everything first; a backend failure must not commit partial state.
  std::map<int, std::vector<Sample>> staged;
  std::vector<ManifestEntry> staged_manifest;
  for (const auto& spec : new_class_specs) {
    if (store.has_class(spec.class_id)) {
      throw ConfigError("synthetic store already holds class " + std::to_string(spec.class_id));
    }
    Prompt prompt = build_prompt(spec);
    std::vector<Sample> samples = source.generate(spec.class_id, n, params.seed);
    if (static_cast<int>(samples.size()) != n) {
      throw GenerationError("backend returned " + std::to_string(samples.size()) +
                            " samples for class " + std::to_string(spec.class_id) +
                            ", expected " + std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
      ManifestEntry entry;
      entry.class_id = spec.class_id;
      entry.prompt = prompt.text;
      entry.params = params;
      entry.seed = item_seed(params.seed, spec.class_id, i);
      entry.source_tag = source.tag();
      entry.shape = samples[static_cast<std::size_t>(i)].data.shape();
      staged_manifest.push_back(std::move(entry));
    }
    staged[spec.class_id] = std::move(samples);
  }
  for (auto& [class_id, samples] : staged) store.per_class_[class_id] = std::move(samples);
  store.manifest_.insert(store.manifest_.end(), staged_manifest.begin(), staged_manifest.end());
}

std::vector<Sample> sample_synthetic_batch(const SyntheticStore& store, std::size_t k,
                                           SplitMix64& rng, bool* with_replacement) {
  std::size_t total = store.total_size();
  if (total == 0) throw SamplingError("synthetic store is empty");
  std::vector<const Sample*> flat;
  flat.reserve(total);
  for (const auto& [c, list] : store.per_class()) {
    for (const auto& s : list) flat.push_back(&s);
  }
  std::vector<Sample> out;
  out.reserve(k);
  if (k <= total) {
    if (with_replacement != nullptr) *with_replacement = false;
    // Partial Fisher-Yates: first k slots of a shuffle.
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.next_below(total - i));
      std::swap(idx[i], idx[j]);
      out.push_back(*flat[idx[i]]);
    }
  } else {
    if (with_replacement != nullptr) *with_replacement = true;
    for (std::size_t i = 0; i < k; ++i) {
      out.push_back(*flat[static_cast<std::size_t>(rng.next_below(total))]);
    }
  }
  return out;
}

void write_offline_store(const std::string& root, const SyntheticStore& store) {
  fs::create_directories(root);
  std::map<int, int> counters;
  json entries = json::array();
  for (ManifestEntry entry : store.manifest()) {
    int idx = counters[entry.class_id]++;
    const auto& samples = store.per_class().at(entry.class_id);
    entry.path = std::to_string(entry.class_id) + "/" + std::to_string(idx) + ".ppm";
    fs::create_directories(fs::path(root) / std::to_string(entry.class_id));
    write_ppm((fs::path(root) / entry.path).string(),
              samples.at(static_cast<std::size_t>(idx)).data);
    entries.push_back(entry_to_json(entry));
  }
  std::string tmp = (fs::path(root) / "manifest.json.tmp").string();
  std::ofstream out(tmp);
  out << json{{"entries", std::move(entries)}}.dump(2) << "\n";
  out.close();
  fs::rename(tmp, (fs::path(root) / "manifest.json").string());
}

}  // namespace sddr
