#include "sddr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sddr/errors.hpp"
#include "sddr/rng.hpp"

namespace sddr {

namespace {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = (2.0 * rng.next_double() - 1.0) * bound;
  }
  return t;
}

double apply_act(Activation a, double x) {
  return a == Activation::Relu ? (x > 0.0 ? x : 0.0) : x;
}

double act_grad(Activation a, double pre) {
  return a == Activation::Relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0;
}

}  // namespace

std::size_t Network::num_classes() const {
  if (const auto* lin = std::get_if<LinearHead>(&head)) return lin->weights.dim(0);
  return std::get<CosineHead>(head).class_weights.dim(0);
}

Network make_network(std::size_t input_dim, const std::vector<std::size_t>& layer_dims,
                     HeadKind head_kind, std::size_t num_classes, std::uint64_t run_seed) {
  if (layer_dims.empty()) throw ConfigError("network needs at least one layer");
  Network net;
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < layer_dims.size(); ++i) {
    DenseLayer layer;
    layer.weights = glorot_uniform(layer_dims[i], in, mix_seed({run_seed, i}));
    layer.bias = Tensor::zeros({layer_dims[i]});
    layer.activation = (i + 1 < layer_dims.size()) ? Activation::Relu : Activation::Identity;
    net.layers.push_back(std::move(layer));
    in = layer_dims[i];
  }
  std::uint64_t head_seed = mix_seed({run_seed, layer_dims.size()});
  if (head_kind == HeadKind::Linear) {
    LinearHead h;
    h.weights = glorot_uniform(num_classes, in, head_seed);
    h.bias = Tensor::zeros({num_classes});
    net.head = std::move(h);
  } else {
    CosineHead h;
    h.class_weights = glorot_uniform(num_classes, in, head_seed);
    h.eta = 10.0;
    net.head = std::move(h);
  }
  return net;
}

void extend_head(Network& net, std::size_t new_num_classes, std::uint64_t run_seed) {
  std::size_t old = net.num_classes();
  if (new_num_classes < old) throw ConfigError("head extension cannot shrink class count");
  if (new_num_classes == old) return;
  std::size_t fdim = net.feature_dim();
  std::size_t added = new_num_classes - old;
  Tensor fresh = glorot_uniform(added, fdim,
                                mix_seed({run_seed, net.layers.size(), old}));
  auto grow = [&](Tensor& w) {
    Tensor next = Tensor::zeros({new_num_classes, fdim});
    std::copy(w.values().begin(), w.values().end(), next.values().begin());
    std::copy(fresh.values().begin(), fresh.values().end(),
              next.values().begin() + static_cast<std::ptrdiff_t>(old * fdim));
    w = std::move(next);
  };
  if (auto* lin = std::get_if<LinearHead>(&net.head)) {
    grow(lin->weights);
    Tensor b = Tensor::zeros({new_num_classes});
    std::copy(lin->bias.values().begin(), lin->bias.values().end(), b.values().begin());
    lin->bias = std::move(b);
  } else {
    auto& cos = std::get<CosineHead>(net.head);
    for (std::size_t r = 0; r < added; ++r) {
      double norm = 0.0;
      for (std::size_t c = 0; c < fdim; ++c) norm += fresh.at(r, c) * fresh.at(r, c);
      if (norm == 0.0) throw ConfigError("cosine head row with zero norm");
    }
    grow(cos.class_weights);
  }
}

ForwardCache forward_cached(const Network& net, const Tensor& batch) {
  if (batch.shape().size() != 2 || batch.dim(1) != net.input_dim()) {
    throw ConfigError("forward: batch width " +
                      std::to_string(batch.shape().size() == 2 ? batch.dim(1) : 0) +
                      " does not match network input dim " + std::to_string(net.input_dim()));
  }
  std::size_t b_count = batch.dim(0);
  ForwardCache cache;
  cache.input = batch;
  const Tensor* cur = &cache.input;
  for (const auto& layer : net.layers) {
    Tensor pre = Tensor::zeros({b_count, layer.out_dim()});
    for (std::size_t b = 0; b < b_count; ++b) {
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        double acc = layer.bias[o];
        const double* wrow = layer.weights.data() + o * layer.in_dim();
        const double* in = cur->data() + b * layer.in_dim();
        for (std::size_t i = 0; i < layer.in_dim(); ++i) acc += wrow[i] * in[i];
        pre.at(b, o) = acc;
      }
    }
    Tensor post = pre;
    for (std::size_t i = 0; i < post.size(); ++i) post[i] = apply_act(layer.activation, post[i]);
    cache.pre.push_back(std::move(pre));
    cache.post.push_back(std::move(post));
    cur = &cache.post.back();
  }
  const Tensor& features = cache.post.back();
  std::size_t n_classes = net.num_classes();
  std::size_t fdim = net.feature_dim();
  Tensor logits = Tensor::zeros({b_count, n_classes});
  if (const auto* lin = std::get_if<LinearHead>(&net.head)) {
    for (std::size_t b = 0; b < b_count; ++b) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        double acc = lin->bias[c];
        const double* wrow = lin->weights.data() + c * fdim;
        const double* f = features.data() + b * fdim;
        for (std::size_t i = 0; i < fdim; ++i) acc += wrow[i] * f[i];
        logits.at(b, c) = acc;
      }
    }
  } else {
    const auto& cos = std::get<CosineHead>(net.head);
    for (std::size_t b = 0; b < b_count; ++b) {
      const double* f = features.data() + b * fdim;
      double fn = 0.0;
      for (std::size_t i = 0; i < fdim; ++i) fn += f[i] * f[i];
      fn = std::sqrt(fn) + kCosineNormEps;
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double* w = cos.class_weights.data() + c * fdim;
        double wn = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < fdim; ++i) {
          wn += w[i] * w[i];
          dot += w[i] * f[i];
        }
        wn = std::sqrt(wn) + kCosineNormEps;
        logits.at(b, c) = cos.eta * dot / (fn * wn);
      }
    }
  }
  cache.out.features = features;
  cache.out.logits = std::move(logits);
  return cache;
}

ForwardResult forward(const Network& net, const Tensor& batch) {
  return forward_cached(net, batch).out;
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  for (const auto& layer : net.layers) {
    g.layer_weights.push_back(Tensor::zeros(layer.weights.shape()));
    g.layer_bias.push_back(Tensor::zeros(layer.bias.shape()));
  }
  if (const auto* lin = std::get_if<LinearHead>(&net.head)) {
    g.head_weights = Tensor::zeros(lin->weights.shape());
    g.head_bias = Tensor::zeros(lin->bias.shape());
  } else {
    g.head_weights = Tensor::zeros(std::get<CosineHead>(net.head).class_weights.shape());
  }
  return g;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Tensor& dlogits,
                   const Tensor* dfeatures_extra) {
  std::size_t b_count = cache.input.dim(0);
  std::size_t fdim = net.feature_dim();
  std::size_t n_classes = net.num_classes();
  Gradients g = zero_gradients(net);
  const Tensor& features = cache.out.features;

  Tensor dfeat = Tensor::zeros({b_count, fdim});
  if (dfeatures_extra != nullptr) dfeat = *dfeatures_extra;

  if (const auto* lin = std::get_if<LinearHead>(&net.head)) {
    for (std::size_t b = 0; b < b_count; ++b) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        double gl = dlogits.at(b, c);
        if (gl == 0.0) continue;
        g.head_bias[c] += gl;
        double* gw = g.head_weights.data() + c * fdim;
        const double* w = lin->weights.data() + c * fdim;
        const double* f = features.data() + b * fdim;
        double* df = dfeat.data() + b * fdim;
        for (std::size_t i = 0; i < fdim; ++i) {
          gw[i] += gl * f[i];
          df[i] += gl * w[i];
        }
      }
    }
  } else {
    const auto& cos = std::get<CosineHead>(net.head);
    for (std::size_t b = 0; b < b_count; ++b) {
      const double* f = features.data() + b * fdim;
      double fraw = 0.0;
      for (std::size_t i = 0; i < fdim; ++i) fraw += f[i] * f[i];
      fraw = std::sqrt(fraw);
      double fn = fraw + kCosineNormEps;
      for (std::size_t c = 0; c < n_classes; ++c) {
        double gl = dlogits.at(b, c);
        if (gl == 0.0) continue;
        const double* w = cos.class_weights.data() + c * fdim;
        double wraw = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < fdim; ++i) {
          wraw += w[i] * w[i];
          dot += w[i] * f[i];
        }
        wraw = std::sqrt(wraw);
        double wn = wraw + kCosineNormEps;
        double inv = 1.0 / (fn * wn);
        g.head_eta += gl * dot * inv;
        double* df = dfeat.data() + b * fdim;
        double* gw = g.head_weights.data() + c * fdim;
        double ge = gl * cos.eta;
        for (std::size_t i = 0; i < fdim; ++i) {
          df[i] += ge * w[i] * inv;
          gw[i] += ge * f[i] * inv;
        }
        if (fraw > 0.0) {
          double k = ge * dot / (fraw * fn * fn * wn);
          for (std::size_t i = 0; i < fdim; ++i) df[i] -= k * f[i];
        }
        if (wraw > 0.0) {
          double k = ge * dot / (wraw * wn * wn * fn);
          for (std::size_t i = 0; i < fdim; ++i) gw[i] -= k * w[i];
        }
      }
    }
  }

  // Body layers, last to first.
  Tensor delta = std::move(dfeat);  // dL/d(post-activation of current layer)
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& layer = net.layers[li];
    const Tensor& pre = cache.pre[li];
    const Tensor& in = li == 0 ? cache.input : cache.post[li - 1];
    Tensor dpre = delta;
    for (std::size_t b = 0; b < b_count; ++b) {
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        dpre.at(b, o) *= act_grad(layer.activation, pre.at(b, o));
      }
    }
    Tensor din = Tensor::zeros({b_count, layer.in_dim()});
    for (std::size_t b = 0; b < b_count; ++b) {
      const double* inb = in.data() + b * layer.in_dim();
      double* dinb = din.data() + b * layer.in_dim();
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        double d = dpre.at(b, o);
        if (d == 0.0) continue;
        g.layer_bias[li][o] += d;
        double* gw = g.layer_weights[li].data() + o * layer.in_dim();
        const double* w = layer.weights.data() + o * layer.in_dim();
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
          gw[i] += d * inb[i];
          dinb[i] += d * w[i];
        }
      }
    }
    delta = std::move(din);
  }
  return g;
}

std::vector<ParamBlock> param_blocks(Network& net) {
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& layer = net.layers[i];
    std::string base = "layers[" + std::to_string(i) + "]";
    blocks.push_back({base + ".weights", layer.weights.data(), layer.weights.size()});
    blocks.push_back({base + ".bias", layer.bias.data(), layer.bias.size()});
  }
  if (auto* lin = std::get_if<LinearHead>(&net.head)) {
    blocks.push_back({"head.weights", lin->weights.data(), lin->weights.size()});
    blocks.push_back({"head.bias", lin->bias.data(), lin->bias.size()});
  } else {
    auto& cos = std::get<CosineHead>(net.head);
    blocks.push_back({"head.class_weights", cos.class_weights.data(), cos.class_weights.size()});
    blocks.push_back({"head.eta", &cos.eta, 1});
  }
  return blocks;
}

std::vector<double> flatten_gradients(const Network& net, const Gradients& grads) {
  std::vector<double> flat;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    flat.insert(flat.end(), grads.layer_weights[i].values().begin(),
                grads.layer_weights[i].values().end());
    flat.insert(flat.end(), grads.layer_bias[i].values().begin(),
                grads.layer_bias[i].values().end());
  }
  flat.insert(flat.end(), grads.head_weights.values().begin(), grads.head_weights.values().end());
  if (net.head_kind() == HeadKind::Linear) {
    flat.insert(flat.end(), grads.head_bias.values().begin(), grads.head_bias.values().end());
  } else {
    flat.push_back(grads.head_eta);
  }
  return flat;
}

double SgdConfig::lr_at(int epoch) const {
  double lr = learning_rate;
  for (const auto& [e, mult] : schedule) {
    if (e <= epoch) lr *= mult;
  }
  return lr;
}

void sgd_update(double* params, const double* grads, double* velocity, std::size_t count,
                double lr, double momentum, double weight_decay) {
  for (std::size_t i = 0; i < count; ++i) {
    velocity[i] = momentum * velocity[i] + grads[i] + weight_decay * params[i];
    params[i] -= lr * velocity[i];
  }
}

void sgd_step(Network& net, const Gradients& grads, const SgdConfig& cfg, SgdState& state,
              int epoch) {
  std::vector<ParamBlock> blocks = param_blocks(net);
  std::vector<double> flat = flatten_gradients(net, grads);
  std::size_t total = flat.size();
  if (state.velocity.empty()) state.velocity.assign(total, 0.0);
  if (state.velocity.size() != total) {
    // Head growth between steps: keep old velocities, zero the new slots.
    // Block layout only ever grows at head boundaries, so rebuild per block.
    std::vector<double> next(total, 0.0);
    // Velocities are invalidated by any mid-run reshape except head growth,
    // where resetting new rows to zero is the intended behavior. Old layer
    // blocks keep identical offsets only before the head, so re-map blockwise.
    // For simplicity (and because only the head grows), reset head blocks.
    std::size_t offset = 0;
    std::size_t old_offset = 0;
    for (const auto& block : blocks) {
      bool head_block = block.path.rfind("head.", 0) == 0;
      if (!head_block && old_offset + block.count <= state.velocity.size()) {
        std::copy(state.velocity.begin() + static_cast<std::ptrdiff_t>(old_offset),
                  state.velocity.begin() + static_cast<std::ptrdiff_t>(old_offset + block.count),
                  next.begin() + static_cast<std::ptrdiff_t>(offset));
        old_offset += block.count;
      }
      offset += block.count;
    }
    state.velocity = std::move(next);
  }
  double lr = cfg.lr_at(epoch);
  std::size_t offset = 0;
  for (const auto& block : blocks) {
    for (std::size_t i = 0; i < block.count; ++i) {
      if (!std::isfinite(flat[offset + i])) {
        throw TrainingError("non-finite gradient in " + block.path);
      }
    }
    sgd_update(block.values, flat.data() + offset, state.velocity.data() + offset, block.count,
               lr, cfg.momentum, cfg.weight_decay);
    offset += block.count;
  }
  if (auto* cos = std::get_if<CosineHead>(&net.head)) {
    cos->eta = std::max(cos->eta, kEtaFloor);
  }
}

double finite_diff_check(Network net, const LossFn& loss_fn, double h) {
  LossEval base = loss_fn(net);
  std::vector<double> analytic = flatten_gradients(net, base.grads);
  std::vector<ParamBlock> blocks = param_blocks(net);
  double max_rel = 0.0;
  // Central differences cancel catastrophically when the loss is large and
  // the true derivative is near zero: (L+ - L-) carries roundoff of order
  // eps * |L|, so the quotient carries roundoff of order eps * |L| / h.
  // Disagreements below that bound measure floating-point noise, not
  // gradient correctness, so they are treated as exact matches.
  double noise_floor = 32.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::fabs(base.value)) / h;
  std::size_t offset = 0;
  for (const auto& block : blocks) {
    for (std::size_t i = 0; i < block.count; ++i) {
      double saved = block.values[i];
      block.values[i] = saved + h;
      double lp = loss_fn(net).value;
      block.values[i] = saved - h;
      double lm = loss_fn(net).value;
      block.values[i] = saved;
      double numeric = (lp - lm) / (2.0 * h);
      double a = analytic[offset + i];
      if (std::fabs(a - numeric) <= noise_floor) continue;
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
    offset += block.count;
  }
  return max_rel;
}

}  // namespace sddr
