#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "sddr/tensor.hpp"

namespace sddr {

enum class Activation { Relu, Identity };

struct DenseLayer {
  Tensor weights;  // [out, in]
  Tensor bias;     // [out]
  Activation activation = Activation::Identity;

  std::size_t in_dim() const { return weights.dim(1); }
  std::size_t out_dim() const { return weights.dim(0); }
};

struct LinearHead {
  Tensor weights;  // [num_classes, feature_dim]
  Tensor bias;     // [num_classes]
};

// Scaled cosine-similarity classifier. Logits are eta * cos(f, w_c) with an
// epsilon guard added to both norms; |logit| <= eta always.
struct CosineHead {
  Tensor class_weights;  // [num_classes, feature_dim]
  double eta = 10.0;
};

inline constexpr double kCosineNormEps = 1e-12;
inline constexpr double kEtaFloor = 0.01;

enum class HeadKind { Linear, Cosine };

struct Network {
  std::vector<DenseLayer> layers;
  std::variant<LinearHead, CosineHead> head;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t feature_dim() const { return layers.back().out_dim(); }
  std::size_t num_classes() const;
  HeadKind head_kind() const {
    return std::holds_alternative<LinearHead>(head) ? HeadKind::Linear : HeadKind::Cosine;
  }
  const CosineHead& cosine_head() const { return std::get<CosineHead>(head); }
};

// Builds a network with layers input_dim -> layer_dims... (relu on all but
// the last, which emits features with identity activation) and a head with
// num_classes outputs. Weights uniform in +-sqrt(6/(fan_in+fan_out)), each
// layer seeded by (run_seed, layer_index); biases zero.
Network make_network(std::size_t input_dim, const std::vector<std::size_t>& layer_dims,
                     HeadKind head_kind, std::size_t num_classes, std::uint64_t run_seed);

// Grows the head to new_num_classes outputs. Existing rows are untouched, so
// logits of old classes are preserved for any fixed input. New rows use the
// standard init rule seeded by (run_seed, head slot, previous class count).
void extend_head(Network& net, std::size_t new_num_classes, std::uint64_t run_seed);

struct ForwardResult {
  Tensor features;  // [B, feature_dim]
  Tensor logits;    // [B, num_classes]
};

struct ForwardCache {
  Tensor input;
  std::vector<Tensor> pre;   // pre-activation per layer
  std::vector<Tensor> post;  // post-activation per layer (post.back() = features)
  ForwardResult out;
};

ForwardResult forward(const Network& net, const Tensor& batch);
ForwardCache forward_cached(const Network& net, const Tensor& batch);

// Parameter gradients, mirroring the network structure.
struct Gradients {
  std::vector<Tensor> layer_weights;
  std::vector<Tensor> layer_bias;
  Tensor head_weights;
  Tensor head_bias;      // linear head only
  double head_eta = 0.0; // cosine head only
};

Gradients zero_gradients(const Network& net);

// Backpropagates dL/dlogits through the head and body. dfeatures_extra, when
// given, is an additional dL/dfeatures term injected at the feature layer
// (feature distillation and margin losses produce one).
Gradients backward(const Network& net, const ForwardCache& cache, const Tensor& dlogits,
                   const Tensor* dfeatures_extra = nullptr);

// Flat view over all trainable scalars, in a fixed order shared with
// SgdState velocities and Gradients::flatten.
struct ParamBlock {
  std::string path;
  double* values;
  std::size_t count;
};
std::vector<ParamBlock> param_blocks(Network& net);
std::vector<double> flatten_gradients(const Network& net, const Gradients& grads);

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // (epoch, multiplier) pairs; effective LR at epoch e multiplies every
  // entry with epoch <= e into the base rate.
  std::vector<std::pair<int, double>> schedule;

  double lr_at(int epoch) const;
};

struct SgdState {
  std::vector<double> velocity;
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr(epoch)*v.
// Velocity buffers are created on first use. Cosine eta is clamped to
// >= kEtaFloor after the update. Non-finite gradients raise TrainingError
// naming the parameter block.
void sgd_step(Network& net, const Gradients& grads, const SgdConfig& cfg, SgdState& state,
              int epoch);

// Raw update rule on a single buffer, exposed for tests.
void sgd_update(double* params, const double* grads, double* velocity, std::size_t count,
                double lr, double momentum, double weight_decay);

struct LossEval {
  double value = 0.0;
  Gradients grads;
};
using LossFn = std::function<LossEval(const Network&)>;

// Compares the analytic gradient of every parameter against the central
// difference (L(p+h)-L(p-h))/2h. Relative error uses denominator
// max(|analytic|, |numeric|, 1e-8). Returns the max over all parameters.
double finite_diff_check(Network net, const LossFn& loss_fn, double h);

}  // namespace sddr
