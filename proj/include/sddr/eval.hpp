#pragma once

#include <map>
#include <vector>

#include "sddr/data.hpp"
#include "sddr/memory.hpp"
#include "sddr/nn.hpp"

namespace sddr {

// Exact integer accuracy so tests can assert equality without tolerances.
struct Fraction {
  long long correct = 0;
  long long total = 0;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
  bool defined() const { return total > 0; }
};

struct StepMetrics {
  int step = 0;
  Fraction overall;
  Fraction base;      // classes of Y_0
  Fraction incremental;  // classes of Y_1..Y_t
  std::map<int, Fraction> per_class;
};

struct RunReport {
  std::vector<StepMetrics> steps;
  double average_incremental_accuracy = 0.0;
  double final_accuracy = 0.0;

  // Validates length T+1 and strictly increasing step indices.
  static RunReport build(std::vector<StepMetrics> steps, int num_incremental_steps);
};

enum class ClassifierKind { Softmax, Nme };

// Normalized per-class feature means from real memory exemplars. Synthetic
// samples never enter these means.
std::map<int, std::vector<double>> nme_class_means(const ReplayMemory& memory,
                                                   const Network& net);

// Argmin over candidate means of the distance between the normalized feature
// and the normalized mean; ties go to the lowest class id.
int nme_classify(const std::vector<double>& feature,
                 const std::map<int, std::vector<double>>& class_means);

// Top-1 accuracy over the test samples of all classes seen so far. Head
// column c corresponds to class id column_to_class[c] (classes are learned
// in shuffled order). The memory pointer is required for NME only.
StepMetrics evaluate_step(const Network& net, const Dataset& test,
                          const std::vector<int>& seen_classes,
                          const std::vector<int>& base_classes,
                          const std::vector<int>& column_to_class, ClassifierKind classifier,
                          const ReplayMemory* memory, int step);

double average_incremental_accuracy(const std::vector<double>& step_accuracies);

}  // namespace sddr
