#pragma once

#include <utility>

namespace delta::harness {

// GPU/CPU memory budget for training a model with several co-resident
// instances (e.g. policy, critic and reference in GRPO).
struct MemoryPlan {
  double n_params = 0.0;
  int tp_degree = 1;
  int n_model_instances = 1;
  double bytes_per_param = 2.0;            // half precision weights
  double optimizer_bytes_per_param = 8.0;  // two fp32 Adam states
  std::pair<double, double> activation_range_gb{12.0, 25.0};
  std::pair<double, double> buffer_range_gb{5.0, 8.0};
};

struct MemoryEstimate {
  double model_gb_per_gpu = 0.0;
  double optimizer_gb_cpu = 0.0;
  std::pair<double, double> activation_gb_range;
  std::pair<double, double> buffer_gb_range;
  std::pair<double, double> total_gpu_range;
};

// model_gb_per_gpu = n_params / tp * bytes_per_param * instances / 1e9
// optimizer_gb_cpu = n_params * optimizer_bytes_per_param * instances / 1e9
// Activation and buffer bands are passed through and added to the model
// term for the GPU total.
MemoryEstimate estimate_memory(const MemoryPlan& plan);

}  // namespace delta::harness
