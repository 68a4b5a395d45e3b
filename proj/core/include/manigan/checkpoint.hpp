#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "manigan/tensor.hpp"

namespace manigan {

/// On-disk snapshot: a named tensor table plus training metadata.
/// Layout: "MGAN" magic, u32 version, u32 tensor count, per tensor a
/// length-prefixed name, u32 ndim, u32 dims and the f32 payload, then the
/// phase string, u32 epoch and the f64 validation-MP history.
struct Checkpoint {
  std::string phase;
  uint32_t epoch = 0;
  std::vector<double> mp_history;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies stored payloads into live tensors matched by name. Every target
/// must be present with an identical shape.
void restore_tensors(const Checkpoint& ckpt,
                     const std::vector<std::pair<std::string, Tensor>>& targets);

}  // namespace manigan
