#include "delta/harness/memory.h"

#include "delta/error.h"

namespace delta::harness {

MemoryEstimate estimate_memory(const MemoryPlan& plan) {
  if (!(plan.n_params > 0.0) || plan.tp_degree < 1 || plan.n_model_instances < 1 ||
      !(plan.bytes_per_param > 0.0) || !(plan.optimizer_bytes_per_param > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "memory plan values must be positive");
  }
  MemoryEstimate e;
  e.model_gb_per_gpu =
      plan.n_params / plan.tp_degree * plan.bytes_per_param * plan.n_model_instances / 1e9;
  e.optimizer_gb_cpu = plan.n_params * plan.optimizer_bytes_per_param * plan.n_model_instances / 1e9;
  e.activation_gb_range = plan.activation_range_gb;
  e.buffer_gb_range = plan.buffer_range_gb;
  e.total_gpu_range = {e.model_gb_per_gpu + plan.activation_range_gb.first + plan.buffer_range_gb.first,
                       e.model_gb_per_gpu + plan.activation_range_gb.second +
                           plan.buffer_range_gb.second};
  return e;
}

}  // namespace delta::harness
