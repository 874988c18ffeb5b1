#include "sddr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "sddr/errors.hpp"

namespace sddr {

RunReport RunReport::build(std::vector<StepMetrics> steps, int num_incremental_steps) {
  if (static_cast<int>(steps.size()) != num_incremental_steps + 1) {
    throw EvaluationError("report needs T+1 = " + std::to_string(num_incremental_steps + 1) +
                          " step entries, got " + std::to_string(steps.size()));
  }
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (steps[i].step <= steps[i - 1].step) throw EvaluationError("step indices must increase");
  }
  RunReport report;
  report.steps = std::move(steps);
  std::vector<double> accs;
  for (const auto& s : report.steps) accs.push_back(s.overall.value());
  report.average_incremental_accuracy = sddr::average_incremental_accuracy(accs);
  report.final_accuracy = accs.back();
  return report;
}

double average_incremental_accuracy(const std::vector<double>& step_accuracies) {
  if (step_accuracies.empty()) throw EvaluationError("no step accuracies to average");
  // Extended precision keeps the mean correctly rounded (e.g. the mean of
  // 0.9, 0.8, 0.7 comes out as exactly 0.8).
  long double sum = 0.0L;
  for (double a : step_accuracies) sum += a;
  return static_cast<double>(sum / static_cast<long double>(step_accuracies.size()));
}

namespace {

std::vector<double> normalized(const std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = norm > 0.0 ? v[i] / norm : 0.0;
  return out;
}

}  // namespace

std::map<int, std::vector<double>> nme_class_means(const ReplayMemory& memory,
                                                   const Network& net) {
  std::map<int, std::vector<double>> means;
  std::size_t fdim = net.feature_dim();
  for (const auto& [class_id, exemplars] : memory.per_class()) {
    if (exemplars.empty()) continue;  // excluded from candidates
    std::vector<double> acc(fdim, 0.0);
    for (const auto& ex : exemplars) {
      Tensor batch = Tensor::unchecked({1, ex.sample.data.size()}, ex.sample.data.values());
      Tensor features = forward(net, batch).features;
      std::vector<double> f = normalized(features.values());
      for (std::size_t i = 0; i < fdim; ++i) acc[i] += f[i];
    }
    for (auto& x : acc) x /= static_cast<double>(exemplars.size());
    means[class_id] = normalized(acc);
  }
  return means;
}

int nme_classify(const std::vector<double>& feature,
                 const std::map<int, std::vector<double>>& class_means) {
  if (class_means.empty()) throw EvaluationError("NME: no class means available");
  std::vector<double> f = normalized(feature);
  int best_class = -1;
  double best_dist = 0.0;
  for (const auto& [class_id, mean] : class_means) {  // map order: ties keep lowest id
    double dist = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      double d = f[i] - mean[i];
      dist += d * d;
    }
    if (best_class < 0 || dist < best_dist) {
      best_class = class_id;
      best_dist = dist;
    }
  }
  return best_class;
}

StepMetrics evaluate_step(const Network& net, const Dataset& test,
                          const std::vector<int>& seen_classes,
                          const std::vector<int>& base_classes,
                          const std::vector<int>& column_to_class, ClassifierKind classifier,
                          const ReplayMemory* memory, int step) {
  std::set<int> seen(seen_classes.begin(), seen_classes.end());
  std::set<int> base(base_classes.begin(), base_classes.end());
  std::map<int, std::vector<double>> means;
  if (classifier == ClassifierKind::Nme) {
    if (memory == nullptr || memory->empty()) {
      throw EvaluationError("NME evaluation requires memory exemplars");
    }
    means = nme_class_means(*memory, net);
    if (means.empty()) throw EvaluationError("NME: all classes excluded (no exemplars)");
  }

  StepMetrics m;
  m.step = step;
  bool any = false;
  for (const auto& sample : test.samples) {
    if (seen.count(sample.label) == 0) continue;
    any = true;
    Tensor batch = Tensor::unchecked({1, sample.data.size()}, sample.data.values());
    int predicted = -1;
    if (classifier == ClassifierKind::Softmax) {
      Tensor logits = forward(net, batch).logits;
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.size(); ++c) {
        if (logits[c] > logits[best]) best = c;
      }
      predicted = best < column_to_class.size() ? column_to_class[best] : static_cast<int>(best);
    } else {
      Tensor features = forward(net, batch).features;
      predicted = nme_classify(features.values(), means);
    }
    bool correct = predicted == sample.label;
    auto bump = [&](Fraction& f) {
      f.total++;
      if (correct) f.correct++;
    };
    bump(m.overall);
    bump(m.per_class[sample.label]);
    if (base.count(sample.label) > 0) {
      bump(m.base);
    } else {
      bump(m.incremental);
    }
  }
  if (!any) throw EvaluationError("empty test set for evaluation at step " + std::to_string(step));
  return m;
}

}  // namespace sddr
